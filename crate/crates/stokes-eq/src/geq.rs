//! Global equilibration via a hybridized mass-conserving mixed stress
//! system.
//!
//! Unknowns: a broken trace-free stress `sigma`, facet tangential
//! multipliers enforcing its normal-tangential continuity across interior
//! facets, an `RT(k)` velocity with zero boundary normal trace, and a
//! zero-mean piecewise `P_k` pressure. The blocks read
//!
//! ```text
//! (1/nu)(sigma, tau) + <div tau, (u, u_hat)>          = (grad u_bar, tau)
//! <div sigma, (v, v_hat)> + (div v, p)                = (-f, v)
//! (div u, q)                                          = -(div u_bar, q)
//! ```
//!
//! with the distributional-divergence pairing
//! `<div tau, (v, v_hat)> = sum_T (div tau, v)_T - sum_F ([tau_nn], v_n)_F
//!  - sum_{F interior} ([tau_nt], v_hat)_F`.
//!
//! The recovered stress minimizes `||sigma - nu grad u_bar||` under the
//! discrete equilibration constraint, so it satisfies the relaxed
//! equilibration identity for all divergence-free test fields.

use crate::estimator::{EquilibratedFlux, FluxKind};
use crate::mesh::BOUNDARY;
use crate::poly::legendre01;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::space::{FESpace, SpaceKind};
use crate::stokes::{StokesProblem, StokesSolution};
use crate::system::SparseSystem;

#[derive(Debug, thiserror::Error)]
pub enum EquilibrationError {
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
    #[error("equilibration solve failed: {0}")]
    Solve(#[from] crate::system::SolveError),
    #[error("patch problem at vertex {vertex}: {source}")]
    Patch {
        vertex: usize,
        source: crate::system::SolveError,
    },
}

/// Solves the global equilibration problem and returns the stress.
pub fn solve_geq(
    sol: &StokesSolution,
    problem: &StokesProblem,
    k: usize,
) -> Result<EquilibratedFlux, EquilibrationError> {
    let mesh = sol.mesh.clone();
    let nu = problem.nu;

    let sigma = FESpace::build(mesh.clone(), SpaceKind::TraceFreeMatrix { degree: k })?;
    let uhat = FESpace::build(mesh.clone(), SpaceKind::FacetTangential { degree: k })?;
    let u = FESpace::build(mesh.clone(), SpaceKind::Rt { degree: k })?;
    let p = FESpace::build(mesh.clone(), SpaceKind::DgScalar { degree: k as i32 })?;

    let off_uhat = sigma.ndofs;
    let off_u = off_uhat + uhat.ndofs;
    let off_p = off_u + u.ndofs;
    let n = off_p + p.ndofs;
    let mut system = SparseSystem::new(n);

    let vol_rule = triangle_rule(2 * k + 2).unwrap();
    let grad_rule = triangle_rule((2 * k).max(k + sol.pair.velocity_degree())).unwrap();
    let f_rule = triangle_rule(problem.f_quad_degree).unwrap();
    let edge = edge_rule(2 * k + 3);

    // Element contributions.
    for e in 0..mesh.num_elements() {
        let (pts, w) = vol_rule.on_element(&mesh, e);
        let crate::assemble::Table::Matrix { values: sv, divs: sd } = sigma.table(e, &pts)
        else {
            unreachable!()
        };
        let ut = u.vector_basis(e).table(&pts);
        let pt = p.scalar_basis(e).table(&pts);
        let sdofs = sigma.cell_dofs(e);
        let udofs = u.cell_dofs(e);
        let pdofs = p.cell_dofs(e);

        // (1/nu)(sigma, tau).
        for (i, &di) in sdofs.iter().enumerate() {
            for (j, &dj) in sdofs.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &wq) in w.iter().enumerate() {
                    let a = &sv[q][i];
                    let b = &sv[q][j];
                    acc += wq
                        * (a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0]
                            + a[1][1] * b[1][1]);
                }
                system.add(di, dj, acc / nu);
            }
        }

        // (div tau, u)_T, symmetric into both equations.
        for (i, &di) in sdofs.iter().enumerate() {
            for (j, &dj) in udofs.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &wq) in w.iter().enumerate() {
                    acc += wq
                        * (sd[q][i][0] * ut.values[q][j][0] + sd[q][i][1] * ut.values[q][j][1]);
                }
                system.add(di, off_u + dj, acc);
                system.add(off_u + dj, di, acc);
            }
        }

        // (div v, p) and (div u, q).
        for (i, &di) in udofs.iter().enumerate() {
            for (j, &dj) in pdofs.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &wq) in w.iter().enumerate() {
                    acc += wq * ut.divs[q][i] * pt.values[q][j];
                }
                system.add(off_u + di, off_p + dj, acc);
                system.add(off_p + dj, off_u + di, acc);
            }
        }

        // RHS (grad u_bar, tau).
        {
            let (gpts, gw) = grad_rule.on_element(&mesh, e);
            let crate::assemble::Table::Matrix { values: svg, .. } = sigma.table(e, &gpts)
            else {
                unreachable!()
            };
            let grads = sol.velocity_gradients(e, &gpts);
            for (i, &di) in sdofs.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &wq) in gw.iter().enumerate() {
                    let g = &grads[q];
                    let t = &svg[q][i];
                    acc += wq
                        * (g[0][0] * t[0][0] + g[0][1] * t[0][1] + g[1][0] * t[1][0]
                            + g[1][1] * t[1][1]);
                }
                system.add_rhs(di, acc);
            }
            // RHS -(div u_bar, q).
            let ptg = p.scalar_basis(e).table(&gpts);
            for (j, &dj) in pdofs.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &wq) in gw.iter().enumerate() {
                    acc += wq * (grads[q][0][0] + grads[q][1][1]) * ptg.values[q][j];
                }
                system.add_rhs(off_p + dj, -acc);
            }
        }

        // RHS (-f, v).
        {
            let (fpts, fw) = f_rule.on_element(&mesh, e);
            let utf = u.vector_basis(e).table(&fpts);
            let f = &problem.f;
            for (i, &di) in udofs.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &wq) in fw.iter().enumerate() {
                    let fv = f(fpts[q]);
                    acc += wq * (fv[0] * utf.values[q][i][0] + fv[1] * utf.values[q][i][1]);
                }
                system.add_rhs(off_u + di, -acc);
            }
        }
    }

    // Facet jump terms.
    let per_facet_u = k + 1;
    for fct in 0..mesh.num_facets() {
        let fa = &mesh.facets[fct];
        let a = mesh.vertices[fa.vertices[0]];
        let b = mesh.vertices[fa.vertices[1]];
        let (pts, w) = edge.on_segment(a, b);
        let nrm = fa.normal;
        let tng = fa.tangent;
        let interior = !fa.is_boundary();

        // Normal trace of u on this facet is spanned by the facet's own
        // dofs; evaluate from the left element.
        let u_left_table = u.vector_basis(fa.left).table(&pts);
        let u_left_dofs = u.cell_dofs(fa.left);
        let facet_u: Vec<(usize, usize)> = u_left_dofs
            .iter()
            .enumerate()
            .filter(|(_, &d)| d >= fct * per_facet_u && d < (fct + 1) * per_facet_u)
            .map(|(loc, &d)| (loc, d))
            .collect();

        for (side_idx, elem) in [(0, fa.left), (1, fa.right)] {
            if elem == BOUNDARY {
                continue;
            }
            let sign = if side_idx == 0 { 1.0 } else { -1.0 };
            let crate::assemble::Table::Matrix { values: svf, .. } = sigma.table(elem, &pts)
            else {
                unreachable!()
            };
            let sdofs = sigma.cell_dofs(elem);

            // -([tau_nn], u_n)_F, both orientations of the coupling.
            for (i, &di) in sdofs.iter().enumerate() {
                for &(uloc, du) in &facet_u {
                    let mut acc = 0.0;
                    for (q, &wq) in w.iter().enumerate() {
                        let t = &svf[q][i];
                        let tnn = nrm[0] * (t[0][0] * nrm[0] + t[0][1] * nrm[1])
                            + nrm[1] * (t[1][0] * nrm[0] + t[1][1] * nrm[1]);
                        let un = u_left_table.values[q][uloc][0] * nrm[0]
                            + u_left_table.values[q][uloc][1] * nrm[1];
                        acc += wq * tnn * un;
                    }
                    let v = -sign * acc;
                    system.add(di, off_u + du, v);
                    system.add(off_u + du, di, v);
                }
            }

            // -([tau_nt], u_hat)_F on interior facets.
            if interior {
                for (i, &di) in sdofs.iter().enumerate() {
                    for q_mom in 0..=k {
                        let duh = fct * (k + 1) + q_mom;
                        let mut acc = 0.0;
                        for (q, &wq) in w.iter().enumerate() {
                            let t = &svf[q][i];
                            let tnt = tng[0] * (t[0][0] * nrm[0] + t[0][1] * nrm[1])
                                + tng[1] * (t[1][0] * nrm[0] + t[1][1] * nrm[1]);
                            acc += wq * tnt * legendre01(q_mom, edge.points[q]);
                        }
                        let v = -sign * acc;
                        system.add(di, off_uhat + duh, v);
                        system.add(off_uhat + duh, di, v);
                    }
                }
            }
        }
    }

    // Constraints: u has zero boundary normal trace; boundary facet
    // multipliers are dropped.
    for d in u.boundary_dofs() {
        system.constrain(off_u + d, 0.0);
    }
    for d in uhat.boundary_dofs() {
        system.constrain(off_uhat + d, 0.0);
    }

    // Zero-mean pressure gauge.
    let rule1 = triangle_rule(k).unwrap();
    let mut mean = Vec::with_capacity(p.ndofs);
    for e in 0..mesh.num_elements() {
        let (pts, w) = rule1.on_element(&mesh, e);
        let table = p.scalar_basis(e).table(&pts);
        for (i, &d) in p.cell_dofs(e).iter().enumerate() {
            let v: f64 = w.iter().enumerate().map(|(q, wq)| wq * table.values[q][i]).sum();
            mean.push((off_p + d, v));
        }
    }
    system.add_border(mean, 0.0);

    let solution = system.solve(1e-9)?;
    Ok(EquilibratedFlux {
        provenance: FluxKind::Geq,
        order: k,
        space: sigma,
        coeffs: solution.values[..off_uhat].to_vec(),
    })
}
