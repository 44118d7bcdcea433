//! Generic element-loop assembly.
//!
//! [`assemble`] runs an element kernel over the mesh in parallel and
//! accumulates local matrices into global triplets in deterministic element
//! order. Specialized saddle-point assemblies (Stokes, mixed equilibration
//! systems) have their own loops but reuse [`ElementContext`] and the basis
//! tables.

use crate::mesh::{Mesh, Point2};
use crate::quadrature::triangle_rule;
use crate::space::basis::{ScalarTable, VectorTable};
use crate::space::{FESpace, SpaceKind};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Quadrature data of one element.
pub struct ElementContext<'a> {
    pub mesh: &'a Mesh,
    pub element: usize,
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
}

/// Basis values of one space on one element at the context points.
pub enum Table {
    Scalar(ScalarTable),
    /// Vector values with divergences and Jacobians; for vector Lagrange and
    /// broken vector spaces this is the interleaved two-component view.
    Vector(VectorTable),
    /// Trace-free matrix basis: values and row-wise divergences.
    Matrix {
        values: Vec<Vec<[[f64; 2]; 2]>>,
        divs: Vec<Vec<[f64; 2]>>,
    },
}

impl Table {
    pub fn ndofs(&self) -> usize {
        match self {
            Table::Scalar(t) => t.values.first().map_or(0, |r| r.len()),
            Table::Vector(t) => t.values.first().map_or(0, |r| r.len()),
            Table::Matrix { values, .. } => values.first().map_or(0, |r| r.len()),
        }
    }
}

impl FESpace {
    /// Basis table of this space on element `e` at the given points.
    pub fn table(&self, e: usize, pts: &[Point2]) -> Table {
        match self.kind {
            SpaceKind::LagrangeScalar { .. } | SpaceKind::DgScalar { .. } => {
                Table::Scalar(self.scalar_basis(e).table(pts))
            }
            SpaceKind::LagrangeVec { .. } | SpaceKind::DgVec { .. } => {
                let st = self.scalar_basis(e).table(pts);
                Table::Vector(vector_view(&st))
            }
            SpaceKind::Rt { .. } | SpaceKind::Bdm { .. } => {
                Table::Vector(self.vector_basis(e).table(pts))
            }
            SpaceKind::TraceFreeMatrix { .. } => {
                let st = self.scalar_basis(e).table(pts);
                let (values, divs) = matrix_view(&st);
                Table::Matrix { values, divs }
            }
            SpaceKind::FacetTangential { .. } => {
                panic!("facet spaces have no element table")
            }
        }
    }
}

/// Two-component vector view of a scalar table: local dof `2 i + c` is the
/// scalar function `i` in component `c`.
pub fn vector_view(st: &ScalarTable) -> VectorTable {
    let npts = st.values.len();
    let n = st.values.first().map_or(0, |r| r.len());
    let mut values = Vec::with_capacity(npts);
    let mut divs = Vec::with_capacity(npts);
    let mut grads = Vec::with_capacity(npts);
    for p in 0..npts {
        let mut v = vec![[0.0; 2]; 2 * n];
        let mut d = vec![0.0; 2 * n];
        let mut g = vec![[[0.0; 2]; 2]; 2 * n];
        for i in 0..n {
            let val = st.values[p][i];
            let gr = st.grads[p][i];
            v[2 * i] = [val, 0.0];
            v[2 * i + 1] = [0.0, val];
            d[2 * i] = gr[0];
            d[2 * i + 1] = gr[1];
            g[2 * i] = [[gr[0], gr[1]], [0.0, 0.0]];
            g[2 * i + 1] = [[0.0, 0.0], [gr[0], gr[1]]];
        }
        values.push(v);
        divs.push(d);
        grads.push(g);
    }
    VectorTable { values, divs, grads }
}

/// Trace-free matrix view of a scalar table: dof blocks `(a, b, c)`
/// represent `[[a, b], [c, -a]]`; divergences are row-wise.
pub fn matrix_view(st: &ScalarTable) -> (Vec<Vec<[[f64; 2]; 2]>>, Vec<Vec<[f64; 2]>>) {
    let npts = st.values.len();
    let nk = st.values.first().map_or(0, |r| r.len());
    let mut values = Vec::with_capacity(npts);
    let mut divs = Vec::with_capacity(npts);
    for p in 0..npts {
        let mut v = vec![[[0.0; 2]; 2]; 3 * nk];
        let mut d = vec![[0.0; 2]; 3 * nk];
        for i in 0..nk {
            let val = st.values[p][i];
            let g = st.grads[p][i];
            // a-component: [[m, 0], [0, -m]], div = (dm/dx, -dm/dy).
            v[i] = [[val, 0.0], [0.0, -val]];
            d[i] = [g[0], -g[1]];
            // b-component: [[0, m], [0, 0]], div = (dm/dy, 0).
            v[nk + i] = [[0.0, val], [0.0, 0.0]];
            d[nk + i] = [g[1], 0.0];
            // c-component: [[0, 0], [m, 0]], div = (0, dm/dx).
            v[2 * nk + i] = [[0.0, 0.0], [val, 0.0]];
            d[2 * nk + i] = [0.0, g[0]];
        }
        values.push(v);
        divs.push(d);
    }
    (values, divs)
}

/// Assembles `sum_T kernel(T)` into triplets. The kernel returns the local
/// `rows x cols` matrix of one element.
pub fn assemble(
    rows: &FESpace,
    cols: &FESpace,
    quad_degree: usize,
    kernel: impl Fn(&ElementContext, &Table, &Table) -> DMatrix<f64> + Sync,
) -> Vec<(usize, usize, f64)> {
    let mesh = rows.mesh.as_ref();
    let rule = triangle_rule(quad_degree).expect("assembly quadrature");
    let per_element: Vec<Vec<(usize, usize, f64)>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (points, weights) = rule.on_element(mesh, e);
            let ctx = ElementContext {
                mesh,
                element: e,
                points,
                weights,
            };
            let rt = rows.table(e, &ctx.points);
            let ct = if std::ptr::eq(rows, cols) {
                None
            } else {
                Some(cols.table(e, &ctx.points))
            };
            let local = kernel(&ctx, &rt, ct.as_ref().unwrap_or(&rt));
            let rd = rows.cell_dofs(e);
            let cd = cols.cell_dofs(e);
            let mut out = Vec::with_capacity(rd.len() * cd.len());
            for (i, &r) in rd.iter().enumerate() {
                for (j, &c) in cd.iter().enumerate() {
                    let v = local[(i, j)];
                    if v != 0.0 {
                        out.push((r, c, v));
                    }
                }
            }
            out
        })
        .collect();
    per_element.into_iter().flatten().collect()
}

/// Assembles a right-hand side `sum_T kernel(T)`.
pub fn assemble_rhs(
    space: &FESpace,
    quad_degree: usize,
    kernel: impl Fn(&ElementContext, &Table) -> Vec<f64> + Sync,
) -> Vec<f64> {
    let mesh = space.mesh.as_ref();
    let rule = triangle_rule(quad_degree).expect("assembly quadrature");
    let per_element: Vec<(usize, Vec<f64>)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (points, weights) = rule.on_element(mesh, e);
            let ctx = ElementContext {
                mesh,
                element: e,
                points,
                weights,
            };
            let t = space.table(e, &ctx.points);
            (e, kernel(&ctx, &t))
        })
        .collect();
    let mut rhs = vec![0.0; space.ndofs];
    for (e, local) in per_element {
        for (i, &d) in space.cell_dofs(e).iter().enumerate() {
            rhs[d] += local[i];
        }
    }
    rhs
}

/// Sets up the worker pool honoring the `STOKES_EQ_THREADS` cap. Called
/// once; later calls are no-ops.
pub fn init_threads() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(s) = std::env::var("STOKES_EQ_THREADS") {
            if let Ok(n) = s.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}
