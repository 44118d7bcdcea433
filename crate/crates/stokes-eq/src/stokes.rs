//! Primal Stokes discretizations.
//!
//! The four inf-sup stable pairs:
//!
//! | tag | velocity              | pressure | order r | reconstruction |
//! |-----|-----------------------|----------|---------|----------------|
//! | P20 | P2 continuous         | P0       | 1       | BDM1           |
//! | P31 | P3 continuous         | P1       | 2       | BDM2           |
//! | P2B | P2 + cubic bubbles    | P1       | 2       | BDM2           |
//! | SV  | P2 continuous         | P1       | 2       | identity       |
//!
//! The Scott--Vogelius pair requires a barycentrically refined mesh. The
//! reconstruction acts on the test functions of the body force only: the
//! right-hand side is `(f, R(v))`, assembled from per-element moment
//! matrices mapping the velocity basis to its BDM image, while the
//! stiffness matrix stays standard. A single bordered row fixes the
//! pressure mean to zero and absorbs the divergence incompatibility of
//! interpolated boundary data.

use crate::mesh::{Mesh, Point2};
use crate::project::{interpolate_hdiv, FeField};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::space::{FESpace, SpaceKind};
use crate::system::{SolveError, SparseSystem};
use crate::{assemble::init_threads, poly::legendre01};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StokesPairTag {
    P20,
    P31,
    P2B,
    Sv,
}

impl StokesPairTag {
    pub const ALL: [StokesPairTag; 4] = [
        StokesPairTag::P20,
        StokesPairTag::P31,
        StokesPairTag::P2B,
        StokesPairTag::Sv,
    ];

    /// Expected velocity convergence order, which is also the order of the
    /// equilibrated fluxes.
    pub fn order(self) -> usize {
        match self {
            StokesPairTag::P20 => 1,
            _ => 2,
        }
    }

    pub fn velocity_kind(self) -> SpaceKind {
        match self {
            StokesPairTag::P20 | StokesPairTag::Sv => SpaceKind::LagrangeVec {
                degree: 2,
                bubble: false,
            },
            StokesPairTag::P31 => SpaceKind::LagrangeVec {
                degree: 3,
                bubble: false,
            },
            StokesPairTag::P2B => SpaceKind::LagrangeVec {
                degree: 2,
                bubble: true,
            },
        }
    }

    pub fn pressure_kind(self) -> SpaceKind {
        SpaceKind::DgScalar {
            degree: self.order() as i32 - 1,
        }
    }

    /// Polynomial degree of the velocity space (3 with bubbles).
    pub fn velocity_degree(self) -> usize {
        match self {
            StokesPairTag::P31 | StokesPairTag::P2B => 3,
            _ => 2,
        }
    }

    pub fn uses_reconstruction(self) -> bool {
        !matches!(self, StokesPairTag::Sv)
    }

    /// Whether the pair needs a barycentrically refined working mesh.
    pub fn needs_barycentric(self) -> bool {
        matches!(self, StokesPairTag::Sv)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p20" => Some(StokesPairTag::P20),
            "p31" => Some(StokesPairTag::P31),
            "p2b" => Some(StokesPairTag::P2B),
            "sv" => Some(StokesPairTag::Sv),
            _ => None,
        }
    }
}

impl std::fmt::Display for StokesPairTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StokesPairTag::P20 => "p20",
            StokesPairTag::P31 => "p31",
            StokesPairTag::P2B => "p2b",
            StokesPairTag::Sv => "sv",
        })
    }
}

/// Analytic curl of the body force, needed by the pressure-robust
/// estimator.
#[derive(Clone)]
pub enum CurlSpec {
    Analytic(Arc<dyn Fn(Point2) -> f64 + Send + Sync>),
    /// The force is a gradient; the curl vanishes identically.
    Zero,
    /// Not available; the pressure-robust estimator will refuse to run.
    Unavailable,
}

/// Stokes problem data on a fixed domain.
#[derive(Clone)]
pub struct StokesProblem {
    pub nu: f64,
    pub f: Arc<dyn Fn(Point2) -> [f64; 2] + Send + Sync>,
    pub curl_f: CurlSpec,
    /// Dirichlet data for the velocity on the whole boundary.
    pub dirichlet: Arc<dyn Fn(Point2) -> [f64; 2] + Send + Sync>,
    /// Quadrature degree for all integrals against `f`; every consumer of
    /// the problem must use this same rule so that discrete identities
    /// relying on the primal equations hold to solver accuracy.
    pub f_quad_degree: usize,
}

impl StokesProblem {
    pub fn homogeneous(
        nu: f64,
        f: impl Fn(Point2) -> [f64; 2] + Send + Sync + 'static,
        curl_f: CurlSpec,
        f_quad_degree: usize,
    ) -> Self {
        StokesProblem {
            nu,
            f: Arc::new(f),
            curl_f,
            dirichlet: Arc::new(|_| [0.0, 0.0]),
            f_quad_degree,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StokesError {
    #[error("space construction failed: {0}")]
    Space(#[from] crate::space::SpaceError),
    #[error("linear solve failed: {0} (for SV this usually means the mesh is not a barycentric refinement)")]
    Solve(#[from] SolveError),
}

/// Discrete solution of the primal Stokes system.
pub struct StokesSolution {
    pub pair: StokesPairTag,
    pub mesh: Arc<Mesh>,
    pub velocity_space: FESpace,
    pub pressure_space: FESpace,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Free velocity dofs plus pressure dofs.
    pub ndof: usize,
    pub solve_residual: f64,
}

impl StokesSolution {
    /// Discrete stress `sigma_bar = nu grad(u_bar)` on element `e`.
    pub fn sigma_bar(&self, nu: f64, e: usize, pts: &[Point2]) -> Vec<[[f64; 2]; 2]> {
        let (_, grads) = self
            .velocity_space
            .eval_vector_function(&self.velocity, e, pts);
        grads
            .into_iter()
            .map(|g| {
                [
                    [nu * g[0][0], nu * g[0][1]],
                    [nu * g[1][0], nu * g[1][1]],
                ]
            })
            .collect()
    }

    pub fn velocity_values(&self, e: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        self.velocity_space
            .eval_vector_function(&self.velocity, e, pts)
            .0
    }

    pub fn velocity_gradients(&self, e: usize, pts: &[Point2]) -> Vec<[[f64; 2]; 2]> {
        self.velocity_space
            .eval_vector_function(&self.velocity, e, pts)
            .1
    }

    /// Componentwise Laplacian of the discrete velocity on element `e`.
    pub fn velocity_laplacian(&self, e: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        let hess = self.velocity_space.scalar_basis(e).hess_table(pts);
        let dofs = self.velocity_space.cell_dofs(e);
        hess.iter()
            .map(|row| {
                let mut lap = [0.0; 2];
                for (i, h) in row.iter().enumerate() {
                    lap[0] += self.velocity[dofs[2 * i]] * (h[0] + h[2]);
                    lap[1] += self.velocity[dofs[2 * i + 1]] * (h[0] + h[2]);
                }
                lap
            })
            .collect()
    }

    /// Gradient of the discrete pressure on element `e` (elementwise).
    pub fn pressure_gradients(&self, e: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        let table = self.pressure_space.scalar_basis(e).table(pts);
        let dofs = self.pressure_space.cell_dofs(e);
        table
            .grads
            .iter()
            .map(|row| {
                let mut g = [0.0; 2];
                for (i, gr) in row.iter().enumerate() {
                    g[0] += self.pressure[dofs[i]] * gr[0];
                    g[1] += self.pressure[dofs[i]] * gr[1];
                }
                g
            })
            .collect()
    }

    pub fn pressure_values(&self, e: usize, pts: &[Point2]) -> Vec<f64> {
        let table = self.pressure_space.scalar_basis(e).table(pts);
        let dofs = self.pressure_space.cell_dofs(e);
        table
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .zip(dofs)
                    .map(|(b, &d)| b * self.pressure[d])
                    .sum()
            })
            .collect()
    }

    /// Mean of the discrete pressure over the domain.
    pub fn pressure_mean(&self) -> f64 {
        let mesh = self.mesh.as_ref();
        let rule = triangle_rule(2).unwrap();
        let total: f64 = (0..mesh.num_elements())
            .map(|e| {
                let (pts, w) = rule.on_element(mesh, e);
                self.pressure_values(e, &pts)
                    .iter()
                    .zip(&w)
                    .map(|(p, wq)| p * wq)
                    .sum::<f64>()
            })
            .sum();
        total / mesh.area()
    }
}

/// Per-element moment matrix of the reconstruction: row `i` holds the BDM
/// dof values of the `i`-th local velocity basis function. For continuous
/// velocities the one-sided facet traces agree with the global ones.
pub fn reconstruction_matrix(
    mesh: &Mesh,
    velocity: &FESpace,
    bdm: &FESpace,
    e: usize,
) -> DMatrix<f64> {
    let SpaceKind::Bdm { degree } = bdm.kind else {
        panic!("reconstruction target must be BDM")
    };
    let nvel = velocity.cell_dof_count(e);
    let nbdm = bdm.cell_dof_count(e);
    let mut r = DMatrix::zeros(nvel, nbdm);

    let erule = edge_rule(2 * degree + 4);
    let per_facet = degree + 1;

    // Facet moments.
    for lf in 0..3 {
        let f = mesh.element_facets[e][lf];
        let fa = &mesh.facets[f];
        let a = mesh.vertices[fa.vertices[0]];
        let b = mesh.vertices[fa.vertices[1]];
        let (pts, w) = erule.on_segment(a, b);
        let crate::assemble::Table::Vector(vt) = velocity.table(e, &pts) else {
            unreachable!()
        };
        for q in 0..per_facet {
            let col = lf * per_facet + q;
            for i in 0..nvel {
                let m: f64 = erule
                    .points
                    .iter()
                    .zip(&w)
                    .enumerate()
                    .map(|(p, (&s, wq))| {
                        let v = vt.values[p][i];
                        wq * legendre01(q, s) * (v[0] * fa.normal[0] + v[1] * fa.normal[1])
                    })
                    .sum();
                r[(i, col)] = m;
            }
        }
    }

    // Interior moments.
    let fields = bdm.interior_moments(e);
    if !fields.is_empty() {
        let trule = triangle_rule(2 * degree + 4).unwrap();
        let (pts, w) = trule.on_element(mesh, e);
        let crate::assemble::Table::Vector(vt) = velocity.table(e, &pts) else {
            unreachable!()
        };
        for (j, field) in fields.iter().enumerate() {
            let col = 3 * per_facet + j;
            for i in 0..nvel {
                let m: f64 = pts
                    .iter()
                    .enumerate()
                    .map(|(p, &pt)| {
                        let fv = field(pt);
                        let v = vt.values[p][i];
                        w[p] * (v[0] * fv[0] + v[1] * fv[1])
                    })
                    .sum();
                r[(i, col)] = m;
            }
        }
    }
    r
}

/// Solves the primal Stokes system with the pair's reconstruction applied
/// to the body-force test functions.
pub fn solve_stokes(
    mesh: Arc<Mesh>,
    problem: &StokesProblem,
    pair: StokesPairTag,
) -> Result<StokesSolution, StokesError> {
    init_threads();
    assert!(problem.nu > 0.0, "viscosity must be positive");
    let velocity = FESpace::build(mesh.clone(), pair.velocity_kind())?;
    let pressure = FESpace::build(mesh.clone(), pair.pressure_kind())?;
    let bdm = if pair.uses_reconstruction() {
        Some(FESpace::build(
            mesh.clone(),
            SpaceKind::Bdm {
                degree: pair.order(),
            },
        )?)
    } else {
        None
    };

    let nu_dofs = velocity.ndofs;
    let np = pressure.ndofs;
    let n = nu_dofs + np;
    let mut system = SparseSystem::new(n);

    let qd_stiff = 2 * pair.velocity_degree();
    let stiffness = crate::assemble::assemble(&velocity, &velocity, qd_stiff, |ctx, r, c| {
        let (crate::assemble::Table::Vector(r), crate::assemble::Table::Vector(c)) = (r, c) else {
            unreachable!()
        };
        let nl = r.values[0].len();
        let mut m = DMatrix::zeros(nl, nl);
        for (p, w) in ctx.weights.iter().enumerate() {
            for i in 0..nl {
                for j in 0..nl {
                    let mut frob = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            frob += r.grads[p][i][a][b] * c.grads[p][j][a][b];
                        }
                    }
                    m[(i, j)] += w * frob;
                }
            }
        }
        m
    });
    let nu = problem.nu;
    system.extend_triplets(stiffness.into_iter().map(|(r, c, v)| (r, c, nu * v)));

    // Divergence coupling: -(div v, p) in the velocity rows and -(div u, q)
    // in the (sign-flipped) pressure rows.
    let qd_div = pair.velocity_degree() + pair.order() - 1;
    let div_block = crate::assemble::assemble(&pressure, &velocity, qd_div, |ctx, r, c| {
        let (crate::assemble::Table::Scalar(q), crate::assemble::Table::Vector(v)) = (r, c) else {
            unreachable!()
        };
        let (nq, nv) = (q.values[0].len(), v.values[0].len());
        let mut m = DMatrix::zeros(nq, nv);
        for (p, w) in ctx.weights.iter().enumerate() {
            for i in 0..nq {
                for j in 0..nv {
                    m[(i, j)] += w * q.values[p][i] * v.divs[p][j];
                }
            }
        }
        m
    });
    for (q_row, u_col, v) in div_block {
        system.add(nu_dofs + q_row, u_col, -v);
        system.add(u_col, nu_dofs + q_row, -v);
    }

    // Body force with reconstruction: (f, R(v)).
    let f = problem.f.clone();
    let rule = triangle_rule(problem.f_quad_degree).expect("f quadrature");
    let rhs_local: Vec<Vec<f64>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (pts, w) = rule.on_element(&mesh, e);
            match &bdm {
                None => {
                    let crate::assemble::Table::Vector(vt) = velocity.table(e, &pts) else {
                        unreachable!()
                    };
                    let nl = vt.values[0].len();
                    (0..nl)
                        .map(|i| {
                            pts.iter()
                                .enumerate()
                                .map(|(p, &pt)| {
                                    let fv = f(pt);
                                    w[p] * (fv[0] * vt.values[p][i][0] + fv[1] * vt.values[p][i][1])
                                })
                                .sum()
                        })
                        .collect()
                }
                Some(bdm) => {
                    let r = reconstruction_matrix(&mesh, &velocity, bdm, e);
                    let bt = bdm.vector_basis(e).table(&pts);
                    let nbdm = bdm.cell_dof_count(e);
                    // moments[j] = (f, psi_j)_T.
                    let moments: Vec<f64> = (0..nbdm)
                        .map(|j| {
                            pts.iter()
                                .enumerate()
                                .map(|(p, &pt)| {
                                    let fv = f(pt);
                                    w[p] * (fv[0] * bt.values[p][j][0] + fv[1] * bt.values[p][j][1])
                                })
                                .sum()
                        })
                        .collect();
                    (0..velocity.cell_dof_count(e))
                        .map(|i| (0..nbdm).map(|j| r[(i, j)] * moments[j]).sum())
                        .collect()
                }
            }
        })
        .collect();
    for (e, local) in rhs_local.iter().enumerate() {
        for (i, &d) in velocity.cell_dofs(e).iter().enumerate() {
            system.add_rhs(d, local[i]);
        }
    }

    // Dirichlet data by nodal interpolation on boundary velocity dofs.
    let g = &problem.dirichlet;
    for (node, &on_boundary) in velocity.scalar_node_boundary.iter().enumerate() {
        if on_boundary {
            let val = g(velocity.scalar_nodes[node]);
            system.constrain(2 * node, val[0]);
            system.constrain(2 * node + 1, val[1]);
        }
    }

    // Zero-mean pressure gauge (one bordered row); the multiplier also
    // absorbs the divergence incompatibility of interpolated boundary data.
    let rule1 = triangle_rule(pair.order()).unwrap();
    let mut mean_entries = Vec::with_capacity(np);
    for e in 0..mesh.num_elements() {
        let (pts, w) = rule1.on_element(&mesh, e);
        let table = pressure.scalar_basis(e).table(&pts);
        for (i, &d) in pressure.cell_dofs(e).iter().enumerate() {
            let v: f64 = w.iter().enumerate().map(|(p, wq)| wq * table.values[p][i]).sum();
            mean_entries.push((nu_dofs + d, v));
        }
    }
    system.add_border(mean_entries, 0.0);

    let solution = system.solve(1e-9)?;
    let free_velocity = (0..nu_dofs).filter(|&d| !system.is_constrained(d)).count();

    Ok(StokesSolution {
        pair,
        mesh,
        velocity_space: velocity,
        pressure_space: pressure,
        velocity: solution.values[..nu_dofs].to_vec(),
        pressure: solution.values[nu_dofs..].to_vec(),
        ndof: free_velocity + np,
        solve_residual: solution.relative_residual,
    })
}

/// Applies the pair's reconstruction to a velocity coefficient vector,
/// returning BDM coefficients (or the input for the identity).
pub enum Reconstructed {
    Identity,
    Bdm { space: FESpace, coeffs: Vec<f64> },
}

pub fn apply_reconstruction(
    pair: StokesPairTag,
    velocity_space: &FESpace,
    coeffs: &[f64],
) -> Result<Reconstructed, StokesError> {
    if !pair.uses_reconstruction() {
        return Ok(Reconstructed::Identity);
    }
    let bdm = FESpace::build(
        velocity_space.mesh.clone(),
        SpaceKind::Bdm {
            degree: pair.order(),
        },
    )?;
    let field = FeField {
        space: velocity_space,
        coeffs,
    };
    let out = interpolate_hdiv(&bdm, &field, 2 * pair.velocity_degree() + 2);
    Ok(Reconstructed::Bdm {
        space: bdm,
        coeffs: out,
    })
}

/// Quadrature recipe for exact-error integrals.
#[derive(Clone, Copy)]
pub struct ErrorQuadrature {
    pub degree: usize,
    /// Geometric subdivision toward this corner on elements touching it,
    /// for integrands with a point singularity.
    pub corner: Option<Point2>,
    pub corner_depth: usize,
}

impl ErrorQuadrature {
    pub fn plain(degree: usize) -> Self {
        ErrorQuadrature {
            degree,
            corner: None,
            corner_depth: 0,
        }
    }

    pub fn with_corner(degree: usize, corner: Point2, depth: usize) -> Self {
        ErrorQuadrature {
            degree,
            corner: Some(corner),
            corner_depth: depth,
        }
    }
}

fn integrate_recursive(
    coords: &[Point2; 3],
    rule: &crate::quadrature::QuadratureRule,
    corner: Point2,
    depth: usize,
    f: &mut dyn FnMut(&[Point2], &[f64]) -> f64,
) -> f64 {
    let touches = coords.iter().any(|p| p.dist(&corner) < 1e-13);
    if depth == 0 || !touches {
        let (pts, w) = rule.on_triangle(coords);
        return f(&pts, &w);
    }
    // Split at edge midpoints; only the child containing the corner keeps
    // the singularity and is recursed into.
    let mid = |a: Point2, b: Point2| Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
    let m01 = mid(coords[0], coords[1]);
    let m12 = mid(coords[1], coords[2]);
    let m20 = mid(coords[2], coords[0]);
    let children = [
        [coords[0], m01, m20],
        [m01, coords[1], m12],
        [m20, m12, coords[2]],
        [m01, m12, m20],
    ];
    children
        .iter()
        .map(|c| integrate_recursive(c, rule, corner, depth - 1, f))
        .sum()
}

/// `(sum_T int_T |grad u - grad u_h|^2)^(1/2)`.
pub fn h1_seminorm_error(
    sol: &StokesSolution,
    grad_exact: &(dyn Fn(Point2) -> [[f64; 2]; 2] + Sync),
    quad: ErrorQuadrature,
) -> f64 {
    let mesh = sol.mesh.as_ref();
    let rule = triangle_rule(quad.degree).expect("error quadrature");
    let total: f64 = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let coords = mesh.element_coords(e);
            let mut integrand = |pts: &[Point2], w: &[f64]| -> f64 {
                let grads = sol.velocity_gradients(e, pts);
                pts.iter()
                    .enumerate()
                    .map(|(p, &pt)| {
                        let ge = grad_exact(pt);
                        let gh = grads[p];
                        let mut s = 0.0;
                        for a in 0..2 {
                            for b in 0..2 {
                                s += (ge[a][b] - gh[a][b]).powi(2);
                            }
                        }
                        w[p] * s
                    })
                    .sum()
            };
            match quad.corner {
                Some(c) => integrate_recursive(&coords, &rule, c, quad.corner_depth, &mut integrand),
                None => {
                    let (pts, w) = rule.on_triangle(&coords);
                    integrand(&pts, &w)
                }
            }
        })
        .sum();
    total.sqrt()
}

/// `L2` norm of the discrete divergence, elementwise.
pub fn div_norms_per_element(sol: &StokesSolution) -> Vec<f64> {
    let mesh = sol.mesh.as_ref();
    let qd = 2 * (sol.pair.velocity_degree() - 1);
    let rule = triangle_rule(qd).unwrap();
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (pts, w) = rule.on_element(mesh, e);
            let grads = sol.velocity_gradients(e, &pts);
            let v: f64 = grads
                .iter()
                .zip(&w)
                .map(|(g, wq)| wq * (g[0][0] + g[1][1]).powi(2))
                .sum();
            v.max(0.0).sqrt()
        })
        .collect()
}

pub fn div_norm(sol: &StokesSolution) -> f64 {
    div_norms_per_element(sol)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// `L2(Omega)` norm of the gradient of the discrete velocity.
pub fn grad_norm(sol: &StokesSolution) -> f64 {
    let mesh = sol.mesh.as_ref();
    let qd = 2 * (sol.pair.velocity_degree() - 1);
    let rule = triangle_rule(qd).unwrap();
    let total: f64 = (0..mesh.num_elements())
        .map(|e| {
            let (pts, w) = rule.on_element(mesh, e);
            let grads = sol.velocity_gradients(e, &pts);
            grads
                .iter()
                .zip(&w)
                .map(|(g, wq)| {
                    wq * (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1])
                })
                .sum::<f64>()
        })
        .sum();
    total.sqrt()
}

/// Checks `(div u_h, q) = 0` for all zero-mean discrete pressures; returns
/// the largest constraint residual relative to `|q| |div u_h|` scales.
pub fn divergence_constraint_residual(sol: &StokesSolution) -> f64 {
    let mesh = sol.mesh.as_ref();
    let qd = sol.pair.velocity_degree() + sol.pair.order();
    let rule = triangle_rule(qd).unwrap();
    let np = sol.pressure_space.ndofs;
    let mut moments = vec![0.0; np];
    let mut mass_diag = vec![0.0; np];
    let mut mean = vec![0.0; np];
    for e in 0..mesh.num_elements() {
        let (pts, w) = rule.on_element(mesh, e);
        let grads = sol.velocity_gradients(e, &pts);
        let table = sol.pressure_space.scalar_basis(e).table(&pts);
        for (i, &d) in sol.pressure_space.cell_dofs(e).iter().enumerate() {
            for (p, wq) in w.iter().enumerate() {
                let divv = grads[p][0][0] + grads[p][1][1];
                moments[d] += wq * divv * table.values[p][i];
                mass_diag[d] += wq * table.values[p][i] * table.values[p][i];
                mean[d] += wq * table.values[p][i];
            }
        }
    }
    // Project out the constant component (it is fixed by the boundary data,
    // not by the divergence constraint).
    let total_mean: f64 = {
        let rule1 = triangle_rule(2 * (sol.pair.velocity_degree() - 1)).unwrap();
        (0..mesh.num_elements())
            .map(|e| {
                let (pts, w) = rule1.on_element(mesh, e);
                let grads = sol.velocity_gradients(e, &pts);
                grads
                    .iter()
                    .zip(&w)
                    .map(|(g, wq)| wq * (g[0][0] + g[1][1]))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / mesh.area()
    };
    let scale = grad_norm(sol).max(1e-300);
    let mut worst = 0.0_f64;
    for d in 0..np {
        let centered = moments[d] - total_mean * mean[d];
        worst = worst.max(centered.abs() / (mass_diag[d].sqrt() * scale));
    }
    worst
}

#[cfg(test)]
mod tests;
