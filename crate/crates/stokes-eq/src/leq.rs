//! Local equilibration on vertex patches.
//!
//! For each vertex `V`, a small saddle problem on the patch `omega_V`
//! produces a correction stress `sigma^V`; the equilibrated flux is
//! `sigma_leq = dev(sigma_bar) - sum_V sigma^V` (the trace part of
//! `sigma_bar` never enters the estimator nor the jump conditions, so only
//! the deviatoric part is stored). The patch spaces are a broken
//! trace-free stress, the patch restriction of `RT(k)` with free boundary
//! normal dofs, tangential facet multipliers, and a broken `P_k` pressure;
//! for interior vertices the velocity pair is factored by vector constants
//! through two bordered constraint rows. The right-hand side is the local
//! residual of the primal solution, localized by the bubble projector
//! `B^V = I_L^k(phi_V . )`.
//!
//! For vertices on the Dirichlet boundary the facets contained in the
//! domain boundary are removed from the facet set (their multiplier dofs
//! drop out) and no constant constraint is imposed.

use crate::estimator::{dev_sigma_bar_coeffs, EquilibratedFlux, FluxKind};
use crate::geq::EquilibrationError;
use crate::mesh::{Mesh, Point2, VertexPatch};
use crate::poly::legendre01;
use crate::quadrature::{edge_rule, triangle_rule, EdgeRule, QuadratureRule};
use crate::space::{local_lagrange_basis, FESpace, ScalarElementBasis, SpaceKind};
use crate::stokes::{StokesProblem, StokesSolution};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// Per-element lattice data for the bubble projector.
pub struct LatticeBasis {
    pub nodes: Vec<Point2>,
    pub basis: ScalarElementBasis,
    /// Hat-function values at the lattice nodes, per local vertex.
    pub phi: [Vec<f64>; 3],
}

/// Shared element data reused by every patch solve.
pub struct LeqWorkspace {
    pub mesh: Arc<Mesh>,
    pub k: usize,
    pub rt: FESpace,
    pub tf: FESpace,
    pub lattice: Vec<LatticeBasis>,
}

impl LeqWorkspace {
    pub fn new(mesh: Arc<Mesh>, k: usize) -> Result<Self, EquilibrationError> {
        let rt = FESpace::build(mesh.clone(), SpaceKind::Rt { degree: k })?;
        let tf = FESpace::build(mesh.clone(), SpaceKind::TraceFreeMatrix { degree: k })?;
        let lattice = (0..mesh.num_elements())
            .map(|e| {
                let (nodes, basis) = local_lagrange_basis(&mesh, e, k);
                let bc = crate::poly::Barycentric::new(&mesh.element_coords(e));
                let phi = [
                    nodes.iter().map(|&p| bc.eval(p)[0]).collect(),
                    nodes.iter().map(|&p| bc.eval(p)[1]).collect(),
                    nodes.iter().map(|&p| bc.eval(p)[2]).collect(),
                ];
                LatticeBasis { nodes, basis, phi }
            })
            .collect();
        Ok(LeqWorkspace {
            mesh,
            k,
            rt,
            tf,
            lattice,
        })
    }
}

/// Nodal coefficients of the scalar bubble projection
/// `B_T^V(g) = I_L^k(phi_V g)`: the lattice values of `g` scaled by the
/// hat function.
pub fn bubble_project_scalar(
    ws: &LeqWorkspace,
    e: usize,
    vertex: usize,
    values_at_nodes: &[f64],
) -> Vec<f64> {
    let lv = ws.mesh.triangles[e]
        .iter()
        .position(|&v| v == vertex)
        .expect("vertex not part of the element");
    ws.lattice[e].phi[lv]
        .iter()
        .zip(values_at_nodes)
        .map(|(phi, g)| phi * g)
        .collect()
}

/// Vector bubble projection: componentwise nodal coefficients.
pub fn bubble_project_vector(
    ws: &LeqWorkspace,
    e: usize,
    vertex: usize,
    values_at_nodes: &[[f64; 2]],
) -> Vec<[f64; 2]> {
    let lv = ws.mesh.triangles[e]
        .iter()
        .position(|&v| v == vertex)
        .expect("vertex not part of the element");
    ws.lattice[e].phi[lv]
        .iter()
        .zip(values_at_nodes)
        .map(|(phi, g)| [phi * g[0], phi * g[1]])
        .collect()
}

/// Values, Jacobians and divergences of a nodal-coefficient vector
/// polynomial at previously tabulated basis points.
pub struct NodalField<'a> {
    pub coeffs: &'a [[f64; 2]],
}

impl NodalField<'_> {
    pub fn value(&self, table: &crate::space::ScalarTable, p: usize) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (j, c) in self.coeffs.iter().enumerate() {
            let b = table.values[p][j];
            v[0] += c[0] * b;
            v[1] += c[1] * b;
        }
        v
    }

    pub fn gradient(&self, table: &crate::space::ScalarTable, p: usize) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for (j, c) in self.coeffs.iter().enumerate() {
            let gb = table.grads[p][j];
            g[0][0] += c[0] * gb[0];
            g[0][1] += c[0] * gb[1];
            g[1][0] += c[1] * gb[0];
            g[1][1] += c[1] * gb[1];
        }
        g
    }

    pub fn divergence(&self, table: &crate::space::ScalarTable, p: usize) -> f64 {
        let mut d = 0.0;
        for (j, c) in self.coeffs.iter().enumerate() {
            let gb = table.grads[p][j];
            d += c[0] * gb[0] + c[1] * gb[1];
        }
        d
    }
}

/// Local dof layout of one patch problem.
pub struct PatchLayout {
    pub patch: VertexPatch,
    /// Facets carrying multiplier dofs (domain-boundary facets removed for
    /// boundary vertices).
    pub kept_facets: Vec<usize>,
    /// Patch-local u slots constrained to zero: for boundary vertices the
    /// velocity keeps the global space's essential condition `u_n = 0` on
    /// domain-boundary facets; without it (and with the boundary
    /// multipliers gone) constants normal to a straight boundary would be
    /// in the patch kernel.
    pub constrained_u: Vec<usize>,
    pub n_sigma: usize,
    pub n_u: usize,
    pub n_uhat: usize,
    pub n_p: usize,
    pub constrained: bool,
    /// Patch-local index of a global RT dof.
    pub u_map: HashMap<usize, usize>,
    /// Patch-local index of the first multiplier dof of a kept facet.
    pub uhat_off: HashMap<usize, usize>,
}

impl PatchLayout {
    pub fn new(ws: &LeqWorkspace, patch: VertexPatch) -> Self {
        let mesh = &ws.mesh;
        let k = ws.k;
        let nk = crate::poly::poly_dim(k as i32);
        let n_sigma = 3 * nk * patch.elements.len();

        let kept_facets: Vec<usize> = patch
            .facets
            .iter()
            .copied()
            .filter(|&f| !(patch.is_boundary_vertex && mesh.facets[f].is_boundary()))
            .collect();

        // RT dofs on the patch: all facet dofs of the patch facets plus the
        // interior dofs of the patch elements.
        let mut u_dofs: Vec<usize> = Vec::new();
        for &f in &patch.facets {
            u_dofs.extend(ws.rt.facet_dofs(f));
        }
        let per_facet = k + 1;
        let facet_block = per_facet * mesh.num_facets();
        for &e in &patch.elements {
            for &d in ws.rt.cell_dofs(e) {
                if d >= facet_block {
                    u_dofs.push(d);
                }
            }
        }
        u_dofs.sort_unstable();
        u_dofs.dedup();
        let u_map: HashMap<usize, usize> =
            u_dofs.iter().enumerate().map(|(i, &d)| (d, i)).collect();

        let mut constrained_u = Vec::new();
        if patch.is_boundary_vertex {
            for &f in &patch.facets {
                if mesh.facets[f].is_boundary() {
                    for d in ws.rt.facet_dofs(f) {
                        constrained_u.push(u_map[&d]);
                    }
                }
            }
        }

        let mut uhat_off = HashMap::new();
        let mut n_uhat = 0;
        for &f in &kept_facets {
            uhat_off.insert(f, n_uhat);
            n_uhat += per_facet;
        }

        PatchLayout {
            constrained: !patch.is_boundary_vertex,
            kept_facets,
            constrained_u,
            n_sigma,
            n_u: u_dofs.len(),
            n_uhat,
            n_p: nk * patch.elements.len(),
            u_map,
            uhat_off,
            patch,
        }
    }

    pub fn ntotal(&self) -> usize {
        self.n_sigma
            + self.n_u
            + self.n_uhat
            + self.n_p
            + if self.constrained { 2 } else { 0 }
    }

    pub fn sigma_slot(&self, elem_idx: usize, local: usize, nk: usize) -> usize {
        elem_idx * 3 * nk + local
    }

    pub fn u_slot(&self, global_dof: usize) -> usize {
        self.n_sigma + self.u_map[&global_dof]
    }

    pub fn uhat_slot(&self, facet: usize, moment: usize) -> usize {
        self.n_sigma + self.n_u + self.uhat_off[&facet] + moment
    }

    pub fn p_slot(&self, elem_idx: usize, local: usize, nk: usize) -> usize {
        self.n_sigma + self.n_u + self.n_uhat + elem_idx * nk + local
    }
}

/// Solution of one patch problem.
pub struct LocalSolution {
    pub vertex: usize,
    /// Trace-free coefficients of `sigma^V` per patch element, in the
    /// global `TraceFreeMatrix` element basis.
    pub sigma: Vec<Vec<f64>>,
    pub elements: Vec<usize>,
    pub u: Vec<f64>,
    pub uhat: Vec<f64>,
    pub p: Vec<f64>,
    pub multipliers: [f64; 2],
    pub solve_residual: f64,
}

struct PatchRules {
    vol: Arc<QuadratureRule>,
    frc: Arc<QuadratureRule>,
    edge: Arc<EdgeRule>,
}

fn patch_rules(ws: &LeqWorkspace, problem: &StokesProblem, sol: &StokesSolution) -> PatchRules {
    let k = ws.k;
    let deg_vol = (2 * k + 2).max(k + sol.pair.velocity_degree() + 1);
    PatchRules {
        vol: triangle_rule(deg_vol).unwrap(),
        frc: triangle_rule(problem.f_quad_degree).unwrap(),
        edge: edge_rule(2 * k + 4),
    }
}

/// Assembles the residual functional `r^V` over the `(u, u_hat)` dofs of a
/// patch, in the integrated-by-parts form.
fn assemble_residual_ibp(
    ws: &LeqWorkspace,
    layout: &PatchLayout,
    sol: &StokesSolution,
    problem: &StokesProblem,
    rules: &PatchRules,
) -> DVector<f64> {
    let mesh = &ws.mesh;
    let v = layout.patch.vertex;
    let nu = problem.nu;
    let mut rhs = DVector::zeros(layout.ntotal());
    let f = &problem.f;

    for &e in &layout.patch.elements {
        let lat = &ws.lattice[e];
        let udofs = ws.rt.cell_dofs(e);
        // Lattice values of every RT basis function of this element.
        let node_table = ws.rt.vector_basis(e).table(&lat.nodes);
        let lv = mesh.triangles[e].iter().position(|&x| x == v).unwrap();

        // Bubble projections of each local u basis function.
        let bubbles: Vec<Vec<[f64; 2]>> = (0..udofs.len())
            .map(|i| {
                lat.phi[lv]
                    .iter()
                    .enumerate()
                    .map(|(j, &phi)| {
                        [
                            phi * node_table.values[j][i][0],
                            phi * node_table.values[j][i][1],
                        ]
                    })
                    .collect()
            })
            .collect();

        // Volume terms: (f, B)_T with the force rule; (-sigma_bar, grad B)
        // and (p_bar, div B) with the polynomial rule.
        {
            let (pts, w) = rules.frc.on_element(mesh, e);
            let btab = lat.basis.table(&pts);
            for (i, &du) in udofs.iter().enumerate() {
                let field = NodalField {
                    coeffs: &bubbles[i],
                };
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let fv = f(pts[p]);
                    let bv = field.value(&btab, p);
                    acc += wq * (fv[0] * bv[0] + fv[1] * bv[1]);
                }
                rhs[layout.u_slot(du)] += acc;
            }
        }
        {
            let (pts, w) = rules.vol.on_element(mesh, e);
            let btab = lat.basis.table(&pts);
            let sig = sol.sigma_bar(nu, e, &pts);
            let pre = sol.pressure_values(e, &pts);
            for (i, &du) in udofs.iter().enumerate() {
                let field = NodalField {
                    coeffs: &bubbles[i],
                };
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let g = field.gradient(&btab, p);
                    let d = field.divergence(&btab, p);
                    let s = &sig[p];
                    acc += wq
                        * (-(s[0][0] * g[0][0]
                            + s[0][1] * g[0][1]
                            + s[1][0] * g[1][0]
                            + s[1][1] * g[1][1])
                            + pre[p] * d);
                }
                rhs[layout.u_slot(du)] += acc;
            }
        }

        // Facet terms over the whole element boundary:
        // ((sigma_bar)_nt, (B(v))_t)_dT for the u dofs and
        // -((sigma_bar)_nt, phi_V u_hat)_dT for the multiplier dofs.
        for lf in 0..3 {
            let fct = mesh.element_facets[e][lf];
            let fa = &mesh.facets[fct];
            let a = mesh.vertices[fa.vertices[0]];
            let b = mesh.vertices[fa.vertices[1]];
            let (pts, w) = rules.edge.on_segment(a, b);
            let btab = lat.basis.table(&pts);
            let sig = sol.sigma_bar(nu, e, &pts);
            let n_out = mesh.outward_normal(e, fct);
            // sigma_nt with respect to the outward normal.
            let snt: Vec<[f64; 2]> = sig
                .iter()
                .map(|s| {
                    let sn = [
                        s[0][0] * n_out[0] + s[0][1] * n_out[1],
                        s[1][0] * n_out[0] + s[1][1] * n_out[1],
                    ];
                    let nn = sn[0] * n_out[0] + sn[1] * n_out[1];
                    [sn[0] - nn * n_out[0], sn[1] - nn * n_out[1]]
                })
                .collect();

            for (i, &du) in udofs.iter().enumerate() {
                let field = NodalField {
                    coeffs: &bubbles[i],
                };
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let bv = field.value(&btab, p);
                    let bn = bv[0] * n_out[0] + bv[1] * n_out[1];
                    let bt = [bv[0] - bn * n_out[0], bv[1] - bn * n_out[1]];
                    acc += wq * (snt[p][0] * bt[0] + snt[p][1] * bt[1]);
                }
                rhs[layout.u_slot(du)] += acc;
            }

            if layout.uhat_off.contains_key(&fct) {
                // phi_V restricted to the facet, evaluated through the
                // element's barycentric coordinate.
                let bc = crate::poly::Barycentric::new(&mesh.element_coords(e));
                for q in 0..=ws.k {
                    let mut acc = 0.0;
                    for (p, &wq) in w.iter().enumerate() {
                        let phi = bc.eval(pts[p])[lv];
                        let hat = [
                            legendre01(q, rules.edge.points[p]) * fa.tangent[0],
                            legendre01(q, rules.edge.points[p]) * fa.tangent[1],
                        ];
                        acc -= wq * phi * (snt[p][0] * hat[0] + snt[p][1] * hat[1]);
                    }
                    rhs[layout.uhat_slot(fct, q)] += acc;
                }
            }
        }
    }
    rhs
}

/// The residual in its pre-integration-by-parts form (cross-check oracle):
/// `(f, B)_T + (nu lap u_bar - grad p_bar, B)_T
///  - ((sigma_bar - p_bar I)_nn, B_n)_dT - (phi_V (sigma_bar)_nt, u_hat)_dT`.
pub fn assemble_residual_original(
    ws: &LeqWorkspace,
    layout: &PatchLayout,
    sol: &StokesSolution,
    problem: &StokesProblem,
) -> DVector<f64> {
    let mesh = &ws.mesh;
    let rules = patch_rules(ws, problem, sol);
    let v = layout.patch.vertex;
    let nu = problem.nu;
    let mut rhs = DVector::zeros(layout.ntotal());
    let f = &problem.f;

    for &e in &layout.patch.elements {
        let lat = &ws.lattice[e];
        let udofs = ws.rt.cell_dofs(e);
        let node_table = ws.rt.vector_basis(e).table(&lat.nodes);
        let lv = mesh.triangles[e].iter().position(|&x| x == v).unwrap();
        let bubbles: Vec<Vec<[f64; 2]>> = (0..udofs.len())
            .map(|i| {
                lat.phi[lv]
                    .iter()
                    .enumerate()
                    .map(|(j, &phi)| {
                        [
                            phi * node_table.values[j][i][0],
                            phi * node_table.values[j][i][1],
                        ]
                    })
                    .collect()
            })
            .collect();

        {
            let (pts, w) = rules.frc.on_element(mesh, e);
            let btab = lat.basis.table(&pts);
            for (i, &du) in udofs.iter().enumerate() {
                let field = NodalField {
                    coeffs: &bubbles[i],
                };
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let fv = f(pts[p]);
                    let bv = field.value(&btab, p);
                    acc += wq * (fv[0] * bv[0] + fv[1] * bv[1]);
                }
                rhs[layout.u_slot(du)] += acc;
            }
        }
        {
            let (pts, w) = rules.vol.on_element(mesh, e);
            let btab = lat.basis.table(&pts);
            let lap = sol.velocity_laplacian(e, &pts);
            let gp = sol.pressure_gradients(e, &pts);
            for (i, &du) in udofs.iter().enumerate() {
                let field = NodalField {
                    coeffs: &bubbles[i],
                };
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let bv = field.value(&btab, p);
                    acc += wq
                        * ((nu * lap[p][0] - gp[p][0]) * bv[0]
                            + (nu * lap[p][1] - gp[p][1]) * bv[1]);
                }
                rhs[layout.u_slot(du)] += acc;
            }
        }
        for lf in 0..3 {
            let fct = mesh.element_facets[e][lf];
            let fa = &mesh.facets[fct];
            let a = mesh.vertices[fa.vertices[0]];
            let b = mesh.vertices[fa.vertices[1]];
            let (pts, w) = rules.edge.on_segment(a, b);
            let btab = lat.basis.table(&pts);
            let sig = sol.sigma_bar(nu, e, &pts);
            let pre = sol.pressure_values(e, &pts);
            let n_out = mesh.outward_normal(e, fct);
            let bc = crate::poly::Barycentric::new(&mesh.element_coords(e));
            for (i, &du) in udofs.iter().enumerate() {
                let field = NodalField {
                    coeffs: &bubbles[i],
                };
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let s = &sig[p];
                    let sn = [
                        s[0][0] * n_out[0] + s[0][1] * n_out[1],
                        s[1][0] * n_out[0] + s[1][1] * n_out[1],
                    ];
                    let nn = sn[0] * n_out[0] + sn[1] * n_out[1] - pre[p];
                    let bv = field.value(&btab, p);
                    let bn = bv[0] * n_out[0] + bv[1] * n_out[1];
                    acc -= wq * nn * bn;
                }
                rhs[layout.u_slot(du)] += acc;
            }
            if layout.uhat_off.contains_key(&fct) {
                let snt: Vec<[f64; 2]> = sig
                    .iter()
                    .map(|s| {
                        let sn = [
                            s[0][0] * n_out[0] + s[0][1] * n_out[1],
                            s[1][0] * n_out[0] + s[1][1] * n_out[1],
                        ];
                        let nn = sn[0] * n_out[0] + sn[1] * n_out[1];
                        [sn[0] - nn * n_out[0], sn[1] - nn * n_out[1]]
                    })
                    .collect();
                for q in 0..=ws.k {
                    let mut acc = 0.0;
                    for (p, &wq) in w.iter().enumerate() {
                        let phi = bc.eval(pts[p])[lv];
                        let hat = [
                            legendre01(q, rules.edge.points[p]) * fa.tangent[0],
                            legendre01(q, rules.edge.points[p]) * fa.tangent[1],
                        ];
                        acc -= wq * phi * (snt[p][0] * hat[0] + snt[p][1] * hat[1]);
                    }
                    rhs[layout.uhat_slot(fct, q)] += acc;
                }
            }
        }
    }
    rhs
}

/// Assembles the symmetric patch saddle matrix.
pub fn assemble_patch_matrix(
    ws: &LeqWorkspace,
    layout: &PatchLayout,
    sol: &StokesSolution,
    problem: &StokesProblem,
) -> DMatrix<f64> {
    let mesh = &ws.mesh;
    let k = ws.k;
    let nk = crate::poly::poly_dim(k as i32);
    let rules = patch_rules(ws, problem, sol);
    let n = layout.ntotal();
    let mut a = DMatrix::<f64>::zeros(n, n);

    // Element blocks.
    for (ei, &e) in layout.patch.elements.iter().enumerate() {
        let (pts, w) = rules.vol.on_element(mesh, e);
        let crate::assemble::Table::Matrix { values: sv, divs: sd } = ws.tf.table(e, &pts)
        else {
            unreachable!()
        };
        let ut = ws.rt.vector_basis(e).table(&pts);
        let ptab = {
            // Broken pressure shares the stress element's monomial span.
            let span = crate::space::basis::ScalarSpan::new(
                mesh.element_centroid(e),
                mesh.element_diameters[e],
                k as i32,
            );
            crate::space::basis::ScalarElementBasis { span, coeff: None }.table(&pts)
        };
        let udofs = ws.rt.cell_dofs(e);

        // (sigma, tau).
        for i in 0..3 * nk {
            let si = layout.sigma_slot(ei, i, nk);
            for j in 0..3 * nk {
                let sj = layout.sigma_slot(ei, j, nk);
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    let x = &sv[p][i];
                    let y = &sv[p][j];
                    acc += wq
                        * (x[0][0] * y[0][0] + x[0][1] * y[0][1] + x[1][0] * y[1][0]
                            + x[1][1] * y[1][1]);
                }
                a[(si, sj)] += acc;
            }
        }

        // (div tau, u)_T.
        for i in 0..3 * nk {
            let si = layout.sigma_slot(ei, i, nk);
            for (j, &du) in udofs.iter().enumerate() {
                let uj = layout.u_slot(du);
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    acc += wq * (sd[p][i][0] * ut.values[p][j][0] + sd[p][i][1] * ut.values[p][j][1]);
                }
                a[(si, uj)] += acc;
                a[(uj, si)] += acc;
            }
        }

        // (div v, p).
        for (i, &du) in udofs.iter().enumerate() {
            let ui = layout.u_slot(du);
            for j in 0..nk {
                let pj = layout.p_slot(ei, j, nk);
                let mut acc = 0.0;
                for (p, &wq) in w.iter().enumerate() {
                    acc += wq * ut.divs[p][i] * ptab.values[p][j];
                }
                a[(ui, pj)] += acc;
                a[(pj, ui)] += acc;
            }
        }
    }

    // Facet jump terms. The normal-normal jumps pair over every patch
    // facet; the normal-tangential jumps pair against the multipliers,
    // which only live on the kept facets (domain-boundary facets lose
    // their multiplier dofs for boundary vertices).
    let per_facet = k + 1;
    for &fct in &layout.patch.facets.clone() {
        let fa = &mesh.facets[fct];
        let pa = mesh.vertices[fa.vertices[0]];
        let pb = mesh.vertices[fa.vertices[1]];
        let (pts, w) = rules.edge.on_segment(pa, pb);
        let nrm = fa.normal;
        let tng = fa.tangent;

        // u_n on this facet, evaluated from an adjacent in-patch element.
        let inside = if layout.patch.elements.contains(&fa.left) {
            fa.left
        } else {
            fa.right
        };
        let u_table = ws.rt.vector_basis(inside).table(&pts);
        let facet_u: Vec<(usize, usize)> = ws
            .rt
            .cell_dofs(inside)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d >= fct * per_facet && d < (fct + 1) * per_facet)
            .map(|(loc, &d)| (loc, d))
            .collect();

        for (side_sign, elem) in [(1.0, fa.left), (-1.0, fa.right)] {
            if elem == crate::mesh::BOUNDARY {
                continue;
            }
            let Some(ei) = layout.patch.elements.iter().position(|&x| x == elem) else {
                continue;
            };
            let crate::assemble::Table::Matrix { values: svf, .. } = ws.tf.table(elem, &pts)
            else {
                unreachable!()
            };
            for i in 0..3 * nk {
                let si = layout.sigma_slot(ei, i, nk);
                // -([tau_nn], u_n).
                for &(uloc, du) in &facet_u {
                    let uj = layout.u_slot(du);
                    let mut acc = 0.0;
                    for (p, &wq) in w.iter().enumerate() {
                        let t = &svf[p][i];
                        let tnn = nrm[0] * (t[0][0] * nrm[0] + t[0][1] * nrm[1])
                            + nrm[1] * (t[1][0] * nrm[0] + t[1][1] * nrm[1]);
                        let un = u_table.values[p][uloc][0] * nrm[0]
                            + u_table.values[p][uloc][1] * nrm[1];
                        acc += wq * tnn * un;
                    }
                    let val = -side_sign * acc;
                    a[(si, uj)] += val;
                    a[(uj, si)] += val;
                }
                // -([tau_nt], u_hat) where multipliers exist.
                if !layout.uhat_off.contains_key(&fct) {
                    continue;
                }
                for q in 0..=k {
                    let hj = layout.uhat_slot(fct, q);
                    let mut acc = 0.0;
                    for (p, &wq) in w.iter().enumerate() {
                        let t = &svf[p][i];
                        let tnt = tng[0] * (t[0][0] * nrm[0] + t[0][1] * nrm[1])
                            + tng[1] * (t[1][0] * nrm[0] + t[1][1] * nrm[1]);
                        acc += wq * tnt * legendre01(q, rules.edge.points[p]);
                    }
                    let val = -side_sign * acc;
                    a[(si, hj)] += val;
                    a[(hj, si)] += val;
                }
            }
        }
    }

    // Constant-pair constraint for interior vertices:
    // pi_R(u, u_hat) = 0 componentwise.
    if layout.constrained {
        let area: f64 = layout
            .patch
            .elements
            .iter()
            .map(|&e| mesh.element_area(e))
            .sum();
        let length: f64 = layout
            .kept_facets
            .iter()
            .map(|&f| mesh.facets[f].length)
            .sum();
        let norm = 1.0 / (area + length);
        let row0 = n - 2;
        let row1 = n - 1;
        // Integrals of the RT basis over each element.
        for &e in &layout.patch.elements {
            let (pts, w) = rules.vol.on_element(mesh, e);
            let ut = ws.rt.vector_basis(e).table(&pts);
            for (i, &du) in ws.rt.cell_dofs(e).iter().enumerate() {
                let ui = layout.u_slot(du);
                let mut acc = [0.0; 2];
                for (p, &wq) in w.iter().enumerate() {
                    acc[0] += wq * ut.values[p][i][0];
                    acc[1] += wq * ut.values[p][i][1];
                }
                a[(row0, ui)] += norm * acc[0];
                a[(ui, row0)] += norm * acc[0];
                a[(row1, ui)] += norm * acc[1];
                a[(ui, row1)] += norm * acc[1];
            }
        }
        // Integrals of the multiplier basis over each kept facet; only the
        // constant Legendre mode has a nonzero integral.
        for &fct in &layout.kept_facets {
            let fa = &mesh.facets[fct];
            let hj = layout.uhat_slot(fct, 0);
            let v0 = norm * fa.length * fa.tangent[0];
            let v1 = norm * fa.length * fa.tangent[1];
            a[(row0, hj)] += v0;
            a[(hj, row0)] += v0;
            a[(row1, hj)] += v1;
            a[(hj, row1)] += v1;
        }
    }

    a
}

/// Row/column elimination of the constrained patch velocity dofs.
pub fn apply_patch_constraints(
    layout: &PatchLayout,
    a: &mut DMatrix<f64>,
    rhs: Option<&mut DVector<f64>>,
) {
    let n = a.nrows();
    for &loc in &layout.constrained_u {
        let slot = layout.n_sigma + loc;
        for j in 0..n {
            a[(slot, j)] = 0.0;
            a[(j, slot)] = 0.0;
        }
        a[(slot, slot)] = 1.0;
    }
    if let Some(rhs) = rhs {
        for &loc in &layout.constrained_u {
            rhs[layout.n_sigma + loc] = 0.0;
        }
    }
}

/// Assembles and solves the saddle problem of one vertex patch.
pub fn solve_local_patch(
    ws: &LeqWorkspace,
    sol: &StokesSolution,
    problem: &StokesProblem,
    patch: VertexPatch,
) -> Result<LocalSolution, EquilibrationError> {
    let k = ws.k;
    let nk = crate::poly::poly_dim(k as i32);
    let layout = PatchLayout::new(ws, patch);
    let rules = patch_rules(ws, problem, sol);
    let n = layout.ntotal();
    let mut a = assemble_patch_matrix(ws, &layout, sol, problem);
    let mut rhs = assemble_residual_ibp(ws, &layout, sol, problem, &rules);
    apply_patch_constraints(&layout, &mut a, Some(&mut rhs));

    let lu = a.clone().lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| EquilibrationError::Patch {
            vertex: layout.patch.vertex,
            source: crate::system::SolveError::Singular(format!(
                "patch system of {} unknowns",
                n
            )),
        })?;

    // Residual check.
    let res = (&a * &x) - &rhs;
    let rnorm = res.norm();
    let bnorm = rhs.norm();
    let rel = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
    if !rel.is_finite() || (bnorm > 1e-300 && rel > 1e-9) {
        if std::env::var("STOKES_EQ_DEBUG_PATCH").is_ok() {
            eprintln!(
                "[patch {}] n={} rnorm={rnorm:.3e} bnorm={bnorm:.3e} xnorm={:.3e} boundary={} elems={}",
                layout.patch.vertex,
                n,
                x.norm(),
                layout.patch.is_boundary_vertex,
                layout.patch.elements.len()
            );
        }
        return Err(EquilibrationError::Patch {
            vertex: layout.patch.vertex,
            source: crate::system::SolveError::Inaccurate(rel),
        });
    }

    let sigma = (0..layout.patch.elements.len())
        .map(|ei| {
            (0..3 * nk)
                .map(|i| x[layout.sigma_slot(ei, i, nk)])
                .collect()
        })
        .collect();
    let u = (0..layout.n_u).map(|i| x[layout.n_sigma + i]).collect();
    let uhat = (0..layout.n_uhat)
        .map(|i| x[layout.n_sigma + layout.n_u + i])
        .collect();
    let p = (0..layout.n_p)
        .map(|i| x[layout.n_sigma + layout.n_u + layout.n_uhat + i])
        .collect();
    let multipliers = if layout.constrained {
        [x[n - 2], x[n - 1]]
    } else {
        [0.0, 0.0]
    };

    Ok(LocalSolution {
        vertex: layout.patch.vertex,
        sigma,
        elements: layout.patch.elements.clone(),
        u,
        uhat,
        p,
        multipliers,
        solve_residual: rel,
    })
}

/// Solves every patch problem and accumulates the equilibrated flux
/// `dev(sigma_bar) - sum_V sigma^V`.
pub fn assemble_leq_flux(
    sol: &StokesSolution,
    problem: &StokesProblem,
    k: usize,
) -> Result<(EquilibratedFlux, Vec<LocalSolution>), EquilibrationError> {
    let mesh = sol.mesh.clone();
    let ws = LeqWorkspace::new(mesh.clone(), k)?;
    let patches = mesh.vertex_patches();
    let locals: Vec<Result<LocalSolution, EquilibrationError>> = patches
        .into_par_iter()
        .map(|patch| solve_local_patch(&ws, sol, problem, patch))
        .collect();

    let (space, mut coeffs) = dev_sigma_bar_coeffs(sol, problem.nu, k);
    let mut solutions = Vec::with_capacity(mesh.num_vertices());
    for local in locals {
        let local = local?;
        for (ei, &e) in local.elements.iter().enumerate() {
            for (i, &d) in space.cell_dofs(e).iter().enumerate() {
                coeffs[d] -= local.sigma[ei][i];
            }
        }
        solutions.push(local);
    }

    Ok((
        EquilibratedFlux {
            provenance: FluxKind::Leq,
            order: k,
            space,
            coeffs,
        },
        solutions,
    ))
}

#[cfg(test)]
mod tests;
