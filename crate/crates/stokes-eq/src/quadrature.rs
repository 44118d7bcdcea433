//! Quadrature on the reference triangle and the reference edge.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss--Legendre
//! rules, exact for all polynomials up to the requested degree. Rules are
//! cached per degree.

use crate::mesh::{Mesh, Point2};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest supported exactness degree for [`triangle_rule`].
pub const MAX_DEGREE: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum QuadratureError {
    #[error("quadrature degree {0} unsupported (max {MAX_DEGREE})")]
    UnsupportedDegree(usize),
}

/// Quadrature rule on the reference triangle `{x, y >= 0, x + y <= 1}`.
///
/// Points are stored as barycentric coordinates `(l0, l1, l2)` with respect
/// to the reference vertices `(0,0), (1,0), (0,1)`; weights sum to the
/// reference area `1/2`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Maps the rule to a physical triangle; returns points and weights
    /// (weights scaled by `2 |T|`).
    pub fn on_triangle(&self, coords: &[Point2; 3]) -> (Vec<Point2>, Vec<f64>) {
        let area2 = ((coords[1].x - coords[0].x) * (coords[2].y - coords[0].y)
            - (coords[2].x - coords[0].x) * (coords[1].y - coords[0].y))
            .abs();
        let pts = self
            .points
            .iter()
            .map(|l| {
                Point2::new(
                    l[0] * coords[0].x + l[1] * coords[1].x + l[2] * coords[2].x,
                    l[0] * coords[0].y + l[1] * coords[1].y + l[2] * coords[2].y,
                )
            })
            .collect();
        let w = self.weights.iter().map(|w| w * area2).collect();
        (pts, w)
    }

    pub fn on_element(&self, mesh: &Mesh, e: usize) -> (Vec<Point2>, Vec<f64>) {
        self.on_triangle(&mesh.element_coords(e))
    }
}

/// Gauss--Legendre rule on the reference edge `[0, 1]`.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl EdgeRule {
    /// Maps the rule to a physical segment; weights scaled by its length.
    pub fn on_segment(&self, a: Point2, b: Point2) -> (Vec<Point2>, Vec<f64>) {
        let len = a.dist(&b);
        let pts = self
            .points
            .iter()
            .map(|&s| Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)))
            .collect();
        let w = self.weights.iter().map(|w| w * len).collect();
        (pts, w)
    }
}

/// Gauss--Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p1 = x;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), derivative from the standard identity.
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Gauss--Legendre rule on `[0, 1]` exact for polynomials up to `degree`.
pub fn edge_rule(degree: usize) -> Arc<EdgeRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<EdgeRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().unwrap();
    cache
        .entry(degree)
        .or_insert_with(|| {
            let n = degree / 2 + 1;
            let (x, w) = gauss_legendre(n);
            Arc::new(EdgeRule {
                points: x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
                weights: w.iter().map(|&w| 0.5 * w).collect(),
                exactness_degree: 2 * n - 1,
            })
        })
        .clone()
}

/// Rule on the reference triangle exact for polynomials up to `degree`.
pub fn triangle_rule(degree: usize) -> Result<Arc<QuadratureRule>, QuadratureError> {
    if degree > MAX_DEGREE {
        return Err(QuadratureError::UnsupportedDegree(degree));
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().unwrap();
    Ok(cache.entry(degree).or_insert_with(|| Arc::new(build_triangle_rule(degree))).clone())
}

fn build_triangle_rule(degree: usize) -> QuadratureRule {
    if degree <= 1 {
        // Centroid rule.
        return QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            exactness_degree: 1,
        };
    }
    // Duffy map (x, y) = (u, v (1 - u)): a monomial x^a y^b with a + b <= d
    // becomes u^a (1-u)^(b+1) v^b, so degree d+1 in u and d in v.
    let n = degree / 2 + 1 + usize::from(degree % 2 == 0);
    let nu = n.max((degree + 3) / 2);
    let nv = n.max((degree + 2) / 2);
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (u_raw, wu) in xu.iter().zip(&wu) {
        let u = 0.5 * (u_raw + 1.0);
        for (v_raw, wv) in xv.iter().zip(&wv) {
            let v = 0.5 * (v_raw + 1.0);
            let x = u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            weights.push(0.25 * wu * wv * (1.0 - u));
        }
    }
    QuadratureRule {
        points,
        weights,
        exactness_degree: degree,
    }
}

/// `\int_Tref x^a y^b = a! b! / (a + b + 2)!`, the closed-form oracle used
/// by the tests.
pub fn reference_monomial_integral(a: u32, b: u32) -> f64 {
    let mut val = 1.0;
    // a! b! / (a+b+2)! computed without overflow.
    for k in 1..=(a + b + 2) {
        val /= k as f64;
    }
    for k in 1..=a {
        val *= k as f64;
    }
    for k in 1..=b {
        val *= k as f64;
    }
    val
}
