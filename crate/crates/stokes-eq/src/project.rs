//! Elementwise L2 projection and H(div) interpolation.
//!
//! Interpolation into RT/BDM applies the same dof functionals that define
//! the element bases, so interpolating a function already in the space
//! returns it unchanged. Facet moments of discontinuous inputs use the
//! trace of the facet's left (lower-index) element.

use crate::mesh::{Mesh, Point2};
use crate::poly::legendre01;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::space::{FESpace, SpaceKind};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// A vector field evaluable element by element (one-sided on facets).
pub trait ElementField: Sync {
    fn eval(&self, mesh: &Mesh, element: usize, pts: &[Point2]) -> Vec<[f64; 2]>;
}

/// Plain pointwise fields ignore the element.
impl<F: Fn(Point2) -> [f64; 2] + Sync> ElementField for F {
    fn eval(&self, _mesh: &Mesh, _element: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        pts.iter().map(|&p| self(p)).collect()
    }
}

/// A finite element function as an [`ElementField`].
pub struct FeField<'a> {
    pub space: &'a FESpace,
    pub coeffs: &'a [f64],
}

impl ElementField for FeField<'_> {
    fn eval(&self, _mesh: &Mesh, element: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        self.space.eval_vector_function(self.coeffs, element, pts).0
    }
}

/// `curl psi = (d psi / dy, -d psi / dx)` of a scalar finite element
/// function; divergence-free by construction.
pub struct CurlOfScalar<'a> {
    pub space: &'a FESpace,
    pub coeffs: &'a [f64],
}

impl ElementField for CurlOfScalar<'_> {
    fn eval(&self, _mesh: &Mesh, element: usize, pts: &[Point2]) -> Vec<[f64; 2]> {
        let table = self.space.scalar_basis(element).table(pts);
        let dofs = self.space.cell_dofs(element);
        table
            .grads
            .iter()
            .map(|row| {
                let mut g = [0.0; 2];
                for (i, &d) in dofs.iter().enumerate() {
                    g[0] += self.coeffs[d] * row[i][0];
                    g[1] += self.coeffs[d] * row[i][1];
                }
                [g[1], -g[0]]
            })
            .collect()
    }
}

/// Elementwise L2 projection of a scalar function into a broken space.
/// `order_hint` raises the quadrature degree for rough integrands.
pub fn l2_project_scalar(
    space: &FESpace,
    f: impl Fn(Point2) -> f64 + Sync,
    order_hint: usize,
) -> Vec<f64> {
    let SpaceKind::DgScalar { degree } = space.kind else {
        panic!("l2_project_scalar needs a DgScalar space");
    };
    if degree < 0 {
        return Vec::new();
    }
    let mesh = space.mesh.as_ref();
    let qd = (2 * degree.max(0) as usize).max(degree.max(0) as usize + order_hint);
    let rule = triangle_rule(qd.min(crate::quadrature::MAX_DEGREE)).unwrap();
    let locals: Vec<Vec<f64>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (pts, w) = rule.on_element(mesh, e);
            let table = space.scalar_basis(e).table(&pts);
            let n = table.values[0].len();
            let mut mass = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (p, &wq) in w.iter().enumerate() {
                let fv = f(pts[p]);
                for i in 0..n {
                    rhs[i] += wq * fv * table.values[p][i];
                    for j in 0..n {
                        mass[(i, j)] += wq * table.values[p][i] * table.values[p][j];
                    }
                }
            }
            mass.lu().solve(&rhs).expect("element mass matrix").iter().copied().collect()
        })
        .collect();
    let mut out = vec![0.0; space.ndofs];
    for (e, local) in locals.iter().enumerate() {
        for (i, &d) in space.cell_dofs(e).iter().enumerate() {
            out[d] = local[i];
        }
    }
    out
}

/// Interpolation into an `Rt` or `Bdm` space by applying its dof
/// functionals to `field`. `quad_degree` controls both facet and volume
/// moment quadrature (use at least `2 * degree + 2`; higher for
/// non-polynomial fields).
pub fn interpolate_hdiv(
    space: &FESpace,
    field: &dyn ElementField,
    quad_degree: usize,
) -> Vec<f64> {
    let (degree, _family) = match space.kind {
        SpaceKind::Rt { degree } => (degree, 0),
        SpaceKind::Bdm { degree } => (degree, 1),
        _ => panic!("interpolate_hdiv needs an Rt or Bdm space"),
    };
    let mesh = space.mesh.as_ref();
    let per_facet = degree + 1;
    let erule = edge_rule(quad_degree);
    let trule = triangle_rule(quad_degree.min(crate::quadrature::MAX_DEGREE)).unwrap();

    let mut out = vec![0.0; space.ndofs];

    // Facet moments from the left element's trace.
    let facet_vals: Vec<Vec<f64>> = (0..mesh.num_facets())
        .into_par_iter()
        .map(|f| {
            let fa = &mesh.facets[f];
            let a = mesh.vertices[fa.vertices[0]];
            let b = mesh.vertices[fa.vertices[1]];
            let (pts, w) = erule.on_segment(a, b);
            let vals = field.eval(mesh, fa.left, &pts);
            (0..per_facet)
                .map(|q| {
                    erule
                        .points
                        .iter()
                        .zip(&w)
                        .zip(&vals)
                        .map(|((&s, wq), v)| {
                            wq * legendre01(q, s) * (v[0] * fa.normal[0] + v[1] * fa.normal[1])
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    for (f, vals) in facet_vals.iter().enumerate() {
        for (q, &v) in vals.iter().enumerate() {
            out[f * per_facet + q] = v;
        }
    }

    // Interior moments.
    let interior: Vec<Vec<f64>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let fields = space.interior_moments(e);
            if fields.is_empty() {
                return Vec::new();
            }
            let (pts, w) = trule.on_element(mesh, e);
            let vals = field.eval(mesh, e, &pts);
            fields
                .iter()
                .map(|m| {
                    pts.iter()
                        .enumerate()
                        .map(|(p, &pt)| {
                            let mv = m(pt);
                            w[p] * (vals[p][0] * mv[0] + vals[p][1] * mv[1])
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let facet_block = per_facet * mesh.num_facets();
    for (e, vals) in interior.iter().enumerate() {
        let n_int = vals.len();
        for (j, &v) in vals.iter().enumerate() {
            out[facet_block + e * n_int + j] = v;
        }
    }
    out
}
