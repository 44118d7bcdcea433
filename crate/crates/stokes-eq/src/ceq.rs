//! Classical (non-pressure-robust) flux equilibration.
//!
//! The pseudo-stress `sigma~ = nu grad(u) - p I` is approximated row-wise
//! in `BDM_k` by the global mixed best-approximation
//!
//! ```text
//! (sigma~, tau) + (u~, div tau) = (sigma_bar - p_bar I, tau)
//! (v, div sigma~)               = -(f, v)
//! ```
//!
//! which decouples into two scalar mixed systems, one per row. The second
//! equation enforces `div sigma~ = -pi_{k-1} f` elementwise, the
//! equilibration needed by the classical guaranteed bound. Its estimator
//! carries the discrete pressure explicitly, which is what makes it blow
//! up in pressure-dominant regimes.

use crate::geq::EquilibrationError;
use crate::mesh::Point2;
use crate::quadrature::triangle_rule;
use crate::space::{FESpace, SpaceKind};
use crate::stokes::{div_norms_per_element, StokesProblem, StokesSolution};
use crate::system::SparseSystem;
use std::f64::consts::PI;

/// Row-wise BDM approximation of the pseudo-stress.
pub struct ClassicalFlux {
    pub order: usize,
    pub bdm: FESpace,
    /// Coefficients of the two rows of `sigma~`.
    pub rows: [Vec<f64>; 2],
}

impl ClassicalFlux {
    /// Values of `sigma~` on element `e`.
    pub fn values(&self, e: usize, pts: &[Point2]) -> Vec<[[f64; 2]; 2]> {
        let (r0, _) = self.bdm.eval_vector_function(&self.rows[0], e, pts);
        let (r1, _) = self.bdm.eval_vector_function(&self.rows[1], e, pts);
        r0.into_iter()
            .zip(r1)
            .map(|(a, b)| [[a[0], a[1]], [b[0], b[1]]])
            .collect()
    }

    /// Row-wise divergence of `sigma~` on element `e`.
    pub fn divergences(&self, e: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        let (_, g0) = self.bdm.eval_vector_function(&self.rows[0], e, pts);
        let (_, g1) = self.bdm.eval_vector_function(&self.rows[1], e, pts);
        g0.into_iter()
            .zip(g1)
            .map(|(a, b)| [a[0][0] + a[1][1], b[0][0] + b[1][1]])
            .collect()
    }
}

/// Solves the two mixed systems for the classical equilibrated flux.
pub fn solve_ceq(
    sol: &StokesSolution,
    problem: &StokesProblem,
    k: usize,
) -> Result<ClassicalFlux, EquilibrationError> {
    let mesh = sol.mesh.clone();
    let nu = problem.nu;
    let bdm = FESpace::build(mesh.clone(), SpaceKind::Bdm { degree: k })?;
    let aux = FESpace::build(
        mesh.clone(),
        SpaceKind::DgScalar {
            degree: k as i32 - 1,
        },
    )?;

    let n = bdm.ndofs + aux.ndofs;
    let vol = triangle_rule(2 * k + 2).unwrap();
    let data_rule = triangle_rule((2 * k).max(k + sol.pair.velocity_degree())).unwrap();
    let f_rule = triangle_rule(problem.f_quad_degree).unwrap();

    let mut rows: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for row in 0..2 {
        let mut system = SparseSystem::new(n);
        for e in 0..mesh.num_elements() {
            let (pts, w) = vol.on_element(&mesh, e);
            let bt = bdm.vector_basis(e).table(&pts);
            let at = aux.scalar_basis(e).table(&pts);
            let bdofs = bdm.cell_dofs(e);
            let adofs = aux.cell_dofs(e);

            for (i, &di) in bdofs.iter().enumerate() {
                for (j, &dj) in bdofs.iter().enumerate() {
                    let mut acc = 0.0;
                    for (q, &wq) in w.iter().enumerate() {
                        acc += wq
                            * (bt.values[q][i][0] * bt.values[q][j][0]
                                + bt.values[q][i][1] * bt.values[q][j][1]);
                    }
                    system.add(di, dj, acc);
                }
                for (j, &dj) in adofs.iter().enumerate() {
                    let mut acc = 0.0;
                    for (q, &wq) in w.iter().enumerate() {
                        acc += wq * bt.divs[q][i] * at.values[q][j];
                    }
                    system.add(di, bdm.ndofs + dj, acc);
                    system.add(bdm.ndofs + dj, di, acc);
                }
            }

            // Data: ((sigma_bar - p_bar I) row, tau).
            {
                let (dpts, dw) = data_rule.on_element(&mesh, e);
                let btd = bdm.vector_basis(e).table(&dpts);
                let sig = sol.sigma_bar(nu, e, &dpts);
                let pre = sol.pressure_values(e, &dpts);
                for (i, &di) in bdofs.iter().enumerate() {
                    let mut acc = 0.0;
                    for (q, &wq) in dw.iter().enumerate() {
                        let mut data = [sig[q][row][0], sig[q][row][1]];
                        data[row] -= pre[q];
                        acc += wq
                            * (data[0] * btd.values[q][i][0] + data[1] * btd.values[q][i][1]);
                    }
                    system.add_rhs(di, acc);
                }
            }

            // Force: (v, div sigma~) = -(f_row, v).
            {
                let (fpts, fw) = f_rule.on_element(&mesh, e);
                let atf = aux.scalar_basis(e).table(&fpts);
                let f = &problem.f;
                for (j, &dj) in adofs.iter().enumerate() {
                    let mut acc = 0.0;
                    for (q, &wq) in fw.iter().enumerate() {
                        acc += wq * f(fpts[q])[row] * atf.values[q][j];
                    }
                    system.add_rhs(bdm.ndofs + dj, -acc);
                }
            }
        }
        let solution = system.solve(1e-9)?;
        rows[row] = solution.values[..bdm.ndofs].to_vec();
    }

    Ok(ClassicalFlux {
        order: k,
        bdm,
        rows,
    })
}

/// Per-element contributions of the classical estimator.
pub struct CeqReport {
    pub nu: f64,
    pub c0: f64,
    /// `||f + div sigma~||_T` per element.
    pub force: Vec<f64>,
    /// `||sigma~ + p_bar I - sigma_bar||_T` per element.
    pub sigma: Vec<f64>,
    /// `||div u_bar||_T` per element.
    pub div: Vec<f64>,
    /// `h_T` snapshot used in the weights.
    pub h: Vec<f64>,
}

impl CeqReport {
    pub fn indicator(&self, e: usize) -> f64 {
        let a = (self.h[e] / PI * self.force[e] + self.sigma[e]) / self.nu;
        let d = self.div[e] / self.c0;
        (a * a + d * d).sqrt()
    }

    pub fn indicators(&self) -> Vec<f64> {
        (0..self.force.len()).map(|e| self.indicator(e)).collect()
    }

    pub fn eta_total(&self) -> f64 {
        let mut sum = 0.0;
        for e in 0..self.force.len() {
            let a = (self.h[e] / PI * self.force[e] + self.sigma[e]) / self.nu;
            sum += a * a;
        }
        let d: f64 = self.div.iter().map(|v| v * v).sum();
        (sum + d / (self.c0 * self.c0)).sqrt()
    }

    /// `(nu pi)^-1 ||h_T (f + div sigma~)||`.
    pub fn eta_f(&self) -> f64 {
        (self
            .force
            .iter()
            .zip(&self.h)
            .map(|(v, h)| (h * v) * (h * v))
            .sum::<f64>())
        .sqrt()
            / (self.nu * PI)
    }

    /// `nu^-1 ||sigma~ + p_bar I - sigma_bar||`.
    pub fn eta_sigma(&self) -> f64 {
        (self.sigma.iter().map(|v| v * v).sum::<f64>()).sqrt() / self.nu
    }

    pub fn eta_div(&self) -> f64 {
        (self.div.iter().map(|v| v * v).sum::<f64>()).sqrt() / self.c0
    }
}

/// Evaluates the classical estimator for a computed flux.
pub fn eta_ceq(
    flux: &ClassicalFlux,
    sol: &StokesSolution,
    problem: &StokesProblem,
    c0: f64,
) -> CeqReport {
    let mesh = sol.mesh.clone();
    let nu = problem.nu;
    let k = flux.order;
    let f_rule = triangle_rule(problem.f_quad_degree).unwrap();
    let s_rule = triangle_rule((2 * k).max(2 * sol.pair.velocity_degree())).unwrap();

    let mut force = Vec::with_capacity(mesh.num_elements());
    let mut sigma = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        {
            let (pts, w) = f_rule.on_element(&mesh, e);
            let divs = flux.divergences(e, &pts);
            let f = &problem.f;
            let mut acc = 0.0;
            for (q, &wq) in w.iter().enumerate() {
                let fv = f(pts[q]);
                acc += wq * ((fv[0] + divs[q][0]).powi(2) + (fv[1] + divs[q][1]).powi(2));
            }
            force.push(acc.max(0.0).sqrt());
        }
        {
            let (pts, w) = s_rule.on_element(&mesh, e);
            let fv = flux.values(e, &pts);
            let sb = sol.sigma_bar(nu, e, &pts);
            let pb = sol.pressure_values(e, &pts);
            let mut acc = 0.0;
            for (q, &wq) in w.iter().enumerate() {
                for a in 0..2 {
                    for b in 0..2 {
                        let idd = if a == b { pb[q] } else { 0.0 };
                        acc += wq * (fv[q][a][b] + idd - sb[q][a][b]).powi(2);
                    }
                }
            }
            sigma.push(acc.max(0.0).sqrt());
        }
    }

    CeqReport {
        nu,
        c0,
        force,
        sigma,
        div: div_norms_per_element(sol),
        h: mesh.element_diameters.clone(),
    }
}
