//! Per-element polynomial bases.
//!
//! Every element basis is represented over a span of monomials in centered,
//! diameter-scaled coordinates (plus a cubic bubble or the Raviart--Thomas
//! radial block where needed). Basis functions dual to a set of degree-of-
//! freedom functionals are obtained by inverting the functional/span
//! Vandermonde matrix per element. All functionals are defined in physical
//! coordinates with globally oriented facet data, so shared degrees of
//! freedom agree between neighbouring elements by construction.

use crate::mesh::Point2;
use crate::poly::{monomial_exponents, poly_dim, Barycentric};
use nalgebra::DMatrix;

/// Scalar span: monomials of total degree `<= degree` in the coordinates
/// `X = (x - c) / h`, optionally enriched by the cubic element bubble.
#[derive(Debug, Clone)]
pub struct ScalarSpan {
    pub center: Point2,
    pub inv_h: f64,
    pub degree: i32,
    exponents: Vec<(u32, u32)>,
    bubble: Option<Barycentric>,
}

impl ScalarSpan {
    pub fn new(center: Point2, h: f64, degree: i32) -> Self {
        ScalarSpan {
            center,
            inv_h: 1.0 / h,
            degree,
            exponents: monomial_exponents(degree),
            bubble: None,
        }
    }

    pub fn with_bubble(center: Point2, h: f64, degree: i32, coords: &[Point2; 3]) -> Self {
        let mut s = Self::new(center, h, degree);
        s.bubble = Some(Barycentric::new(coords));
        s
    }

    pub fn dim(&self) -> usize {
        self.exponents.len() + usize::from(self.bubble.is_some())
    }

    pub fn eval(&self, p: Point2, vals: &mut [f64]) {
        let x = (p.x - self.center.x) * self.inv_h;
        let y = (p.y - self.center.y) * self.inv_h;
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            vals[k] = x.powi(a as i32) * y.powi(b as i32);
        }
        if let Some(bc) = &self.bubble {
            vals[self.exponents.len()] = bc.bubble(p).0;
        }
    }

    pub fn eval_grad(&self, p: Point2, grads: &mut [[f64; 2]]) {
        let x = (p.x - self.center.x) * self.inv_h;
        let y = (p.y - self.center.y) * self.inv_h;
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let (a, b) = (a as i32, b as i32);
            let dx = if a == 0 {
                0.0
            } else {
                a as f64 * x.powi(a - 1) * y.powi(b) * self.inv_h
            };
            let dy = if b == 0 {
                0.0
            } else {
                b as f64 * x.powi(a) * y.powi(b - 1) * self.inv_h
            };
            grads[k] = [dx, dy];
        }
        if let Some(bc) = &self.bubble {
            grads[self.exponents.len()] = bc.bubble(p).1;
        }
    }

    /// Second derivatives `(d_xx, d_xy, d_yy)` of all span functions.
    pub fn eval_hess(&self, p: Point2, hess: &mut [[f64; 3]]) {
        let x = (p.x - self.center.x) * self.inv_h;
        let y = (p.y - self.center.y) * self.inv_h;
        let s2 = self.inv_h * self.inv_h;
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let (a, b) = (a as i32, b as i32);
            let xx = if a >= 2 {
                (a * (a - 1)) as f64 * x.powi(a - 2) * y.powi(b) * s2
            } else {
                0.0
            };
            let xy = if a >= 1 && b >= 1 {
                (a * b) as f64 * x.powi(a - 1) * y.powi(b - 1) * s2
            } else {
                0.0
            };
            let yy = if b >= 2 {
                (b * (b - 1)) as f64 * x.powi(a) * y.powi(b - 2) * s2
            } else {
                0.0
            };
            hess[k] = [xx, xy, yy];
        }
        if let Some(bc) = &self.bubble {
            // bubble = l0 l1 l2 with affine l_i; second derivatives come
            // from products of two barycentric gradients.
            let l = bc.eval(p);
            let g = bc.grads;
            let mut h = [0.0; 3];
            for (i, j, m) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
                h[0] += 2.0 * g[i][0] * g[j][0] * l[m];
                h[1] += (g[i][0] * g[j][1] + g[i][1] * g[j][0]) * l[m];
                h[2] += 2.0 * g[i][1] * g[j][1] * l[m];
            }
            hess[self.exponents.len()] = h;
        }
    }
}

/// Basis values and gradients at a set of points, `[point][local dof]`.
#[derive(Debug, Clone)]
pub struct ScalarTable {
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

/// A set of scalar basis functions `psi_j = sum_i coeff[(i, j)] span_i`.
#[derive(Debug, Clone)]
pub struct ScalarElementBasis {
    pub span: ScalarSpan,
    /// `span.dim() x ndofs`; `None` means the identity (modal basis).
    pub coeff: Option<DMatrix<f64>>,
}

impl ScalarElementBasis {
    pub fn ndofs(&self) -> usize {
        match &self.coeff {
            Some(c) => c.ncols(),
            None => self.span.dim(),
        }
    }

    /// Second derivatives `(xx, xy, yy)` of the basis at the points.
    pub fn hess_table(&self, pts: &[Point2]) -> Vec<Vec<[f64; 3]>> {
        let dim = self.span.dim();
        let n = self.ndofs();
        let mut sh = vec![[0.0; 3]; dim];
        pts.iter()
            .map(|&p| {
                self.span.eval_hess(p, &mut sh);
                match &self.coeff {
                    None => sh.clone(),
                    Some(c) => (0..n)
                        .map(|j| {
                            let mut h = [0.0; 3];
                            for i in 0..dim {
                                let cij = c[(i, j)];
                                h[0] += cij * sh[i][0];
                                h[1] += cij * sh[i][1];
                                h[2] += cij * sh[i][2];
                            }
                            h
                        })
                        .collect(),
                }
            })
            .collect()
    }

    pub fn table(&self, pts: &[Point2]) -> ScalarTable {
        let dim = self.span.dim();
        let n = self.ndofs();
        let mut values = Vec::with_capacity(pts.len());
        let mut grads = Vec::with_capacity(pts.len());
        let mut sv = vec![0.0; dim];
        let mut sg = vec![[0.0; 2]; dim];
        for &p in pts {
            self.span.eval(p, &mut sv);
            self.span.eval_grad(p, &mut sg);
            match &self.coeff {
                None => {
                    values.push(sv.clone());
                    grads.push(sg.clone());
                }
                Some(c) => {
                    let mut v = vec![0.0; n];
                    let mut g = vec![[0.0; 2]; n];
                    for j in 0..n {
                        let (mut val, mut gx, mut gy) = (0.0, 0.0, 0.0);
                        for i in 0..dim {
                            let cij = c[(i, j)];
                            val += cij * sv[i];
                            gx += cij * sg[i][0];
                            gy += cij * sg[i][1];
                        }
                        v[j] = val;
                        g[j] = [gx, gy];
                    }
                    values.push(v);
                    grads.push(g);
                }
            }
        }
        ScalarTable { values, grads }
    }
}

/// `H(div)` families spanned per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdivFamily {
    /// `P_k^2 + x P~_k`, dimension `(k+1)(k+3)`.
    Rt,
    /// `P_k^2`, dimension `(k+1)(k+2)`.
    Bdm,
}

/// Vector-valued span for the `H(div)` elements.
#[derive(Debug, Clone)]
pub struct VectorSpan {
    pub scalar: ScalarSpan,
    pub family: HdivFamily,
    pub degree: usize,
}

impl VectorSpan {
    pub fn new(center: Point2, h: f64, degree: usize, family: HdivFamily) -> Self {
        VectorSpan {
            scalar: ScalarSpan::new(center, h, degree as i32),
            family,
            degree,
        }
    }

    pub fn dim(&self) -> usize {
        let nk = poly_dim(self.degree as i32);
        match self.family {
            HdivFamily::Rt => 2 * nk + self.degree + 1,
            HdivFamily::Bdm => 2 * nk,
        }
    }

    /// Values, divergences and Jacobians of all span functions at `p`.
    pub fn eval(
        &self,
        p: Point2,
        values: &mut [[f64; 2]],
        divs: &mut [f64],
        grads: &mut [[[f64; 2]; 2]],
    ) {
        let nk = poly_dim(self.degree as i32);
        let mut sv = vec![0.0; nk];
        let mut sg = vec![[0.0; 2]; nk];
        self.scalar.eval(p, &mut sv);
        self.scalar.eval_grad(p, &mut sg);
        for i in 0..nk {
            values[i] = [sv[i], 0.0];
            divs[i] = sg[i][0];
            grads[i] = [[sg[i][0], sg[i][1]], [0.0, 0.0]];
            values[nk + i] = [0.0, sv[i]];
            divs[nk + i] = sg[i][1];
            grads[nk + i] = [[0.0, 0.0], [sg[i][0], sg[i][1]]];
        }
        if self.family == HdivFamily::Rt {
            let k = self.degree as i32;
            let inv_h = self.scalar.inv_h;
            let x = (p.x - self.scalar.center.x) * inv_h;
            let y = (p.y - self.scalar.center.y) * inv_h;
            for (j, a) in (0..=self.degree as i32).rev().enumerate() {
                // m~ = X^a Y^(k-a), homogeneous of degree k; span fn = (X, Y) m~.
                let b = k - a;
                let m = x.powi(a) * y.powi(b);
                let dmx = if a == 0 { 0.0 } else { a as f64 * x.powi(a - 1) * y.powi(b) };
                let dmy = if b == 0 { 0.0 } else { b as f64 * x.powi(a) * y.powi(b - 1) };
                let idx = 2 * nk + j;
                values[idx] = [x * m, y * m];
                // d/dx = inv_h d/dX.
                grads[idx] = [
                    [inv_h * (m + x * dmx), inv_h * (x * dmy)],
                    [inv_h * (y * dmx), inv_h * (m + y * dmy)],
                ];
                divs[idx] = inv_h * ((k + 2) as f64) * m;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct VectorTable {
    pub values: Vec<Vec<[f64; 2]>>,
    pub divs: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[[f64; 2]; 2]>>,
}

#[derive(Debug, Clone)]
pub struct VectorElementBasis {
    pub span: VectorSpan,
    /// `span.dim() x ndofs`.
    pub coeff: DMatrix<f64>,
}

impl VectorElementBasis {
    pub fn ndofs(&self) -> usize {
        self.coeff.ncols()
    }

    pub fn table(&self, pts: &[Point2]) -> VectorTable {
        let dim = self.span.dim();
        let n = self.ndofs();
        let mut values = Vec::with_capacity(pts.len());
        let mut divs = Vec::with_capacity(pts.len());
        let mut grads = Vec::with_capacity(pts.len());
        let mut sv = vec![[0.0; 2]; dim];
        let mut sd = vec![0.0; dim];
        let mut sg = vec![[[0.0; 2]; 2]; dim];
        for &p in pts {
            self.span.eval(p, &mut sv, &mut sd, &mut sg);
            let mut v = vec![[0.0; 2]; n];
            let mut d = vec![0.0; n];
            let mut g = vec![[[0.0; 2]; 2]; n];
            for j in 0..n {
                for i in 0..dim {
                    let c = self.coeff[(i, j)];
                    if c == 0.0 {
                        continue;
                    }
                    v[j][0] += c * sv[i][0];
                    v[j][1] += c * sv[i][1];
                    d[j] += c * sd[i];
                    for r in 0..2 {
                        for s in 0..2 {
                            g[j][r][s] += c * sg[i][r][s];
                        }
                    }
                }
            }
            values.push(v);
            divs.push(d);
            grads.push(g);
        }
        VectorTable { values, divs, grads }
    }
}

/// Solves `V C = I` for the dual-basis coefficients, so that
/// `psi_j = sum_i C[(i, j)] span_i` satisfies `dof_l(psi_j) = delta_lj`;
/// `V[(i, j)]` is the `i`-th dof functional applied to the `j`-th span
/// function.
pub fn invert_vandermonde(v: DMatrix<f64>) -> Result<DMatrix<f64>, String> {
    let n = v.nrows();
    assert_eq!(n, v.ncols(), "dof count must match span dimension");
    let lu = v.lu();
    lu.solve(&DMatrix::identity(n, n))
        .ok_or_else(|| "singular element Vandermonde matrix".to_string())
}
