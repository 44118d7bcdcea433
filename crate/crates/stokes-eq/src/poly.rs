//! Small polynomial helpers shared by the element bases.

use crate::mesh::Point2;

/// Dimension of `P_k` on a triangle; zero for negative `k`.
pub fn poly_dim(degree: i32) -> usize {
    if degree < 0 {
        0
    } else {
        ((degree + 1) * (degree + 2) / 2) as usize
    }
}

/// Exponent pairs `(a, b)` of the monomials `x^a y^b` spanning `P_k`,
/// ordered by total degree.
pub fn monomial_exponents(degree: i32) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(poly_dim(degree));
    for d in 0..=degree.max(-1) {
        for a in (0..=d).rev() {
            out.push((a as u32, (d - a) as u32));
        }
    }
    out
}

/// Shifted Legendre polynomial `L_q` on `[0, 1]`, `L_q(1) = 1`.
pub fn legendre01(q: usize, s: f64) -> f64 {
    let x = 2.0 * s - 1.0;
    match q {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Barycentric coordinate functions of a physical triangle as affine maps
/// `lambda_i(x, y) = c_i + g_i . (x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct Barycentric {
    pub consts: [f64; 3],
    pub grads: [[f64; 2]; 3],
}

impl Barycentric {
    pub fn new(coords: &[Point2; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
        // lambda_i = (area opposite i) / area, affine in x.
        let grads = [
            [(p1.y - p2.y) / det, (p2.x - p1.x) / det],
            [(p2.y - p0.y) / det, (p0.x - p2.x) / det],
            [(p0.y - p1.y) / det, (p1.x - p0.x) / det],
        ];
        let consts = [
            (p1.x * p2.y - p2.x * p1.y) / det,
            (p2.x * p0.y - p0.x * p2.y) / det,
            (p0.x * p1.y - p1.x * p0.y) / det,
        ];
        Barycentric { consts, grads }
    }

    pub fn eval(&self, p: Point2) -> [f64; 3] {
        [
            self.consts[0] + self.grads[0][0] * p.x + self.grads[0][1] * p.y,
            self.consts[1] + self.grads[1][0] * p.x + self.grads[1][1] * p.y,
            self.consts[2] + self.grads[2][0] * p.x + self.grads[2][1] * p.y,
        ]
    }

    /// Cubic element bubble `lambda_0 lambda_1 lambda_2` and its gradient.
    pub fn bubble(&self, p: Point2) -> (f64, [f64; 2]) {
        let l = self.eval(p);
        let val = l[0] * l[1] * l[2];
        let grad = [
            self.grads[0][0] * l[1] * l[2]
                + l[0] * self.grads[1][0] * l[2]
                + l[0] * l[1] * self.grads[2][0],
            self.grads[0][1] * l[1] * l[2]
                + l[0] * self.grads[1][1] * l[2]
                + l[0] * l[1] * self.grads[2][1],
        ];
        (val, grad)
    }
}
