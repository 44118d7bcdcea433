//! Benchmark problems with closed-form data.
//!
//! `smooth_square`: on the unit square, the velocity is the curl of the
//! quartic bubble potential `x^2 (1-x)^2 y^2 (1-y)^2` and the pressure is
//! `x^5 + y^5 - 1/3`; all derivatives are hard-coded polynomials.
//!
//! `lshape`: the classical corner singularity on
//! `(-1,1)^2 \ ((0,1) x (-1,0))` in polar form `u = R^alpha (...)` with
//! `alpha = 856399/1572864`, combined with the smooth extra pressure
//! `sin(pi x y)` whose gradient is the body force; the force is a gradient,
//! so its curl vanishes identically.

use crate::mesh::{l_shape_mesh, unit_square_mesh, Mesh, Point2};
use crate::stokes::{CurlSpec, ErrorQuadrature, StokesProblem};
use std::f64::consts::PI;
use std::sync::Arc;

/// A manufactured Stokes benchmark: problem data plus the exact solution.
#[derive(Clone)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub nu: f64,
    pub exact_velocity: Arc<dyn Fn(Point2) -> [f64; 2] + Send + Sync>,
    pub exact_velocity_gradient: Arc<dyn Fn(Point2) -> [[f64; 2]; 2] + Send + Sync>,
    pub exact_pressure: Arc<dyn Fn(Point2) -> f64 + Send + Sync>,
    pub problem: StokesProblem,
    pub mesh_factory: fn(usize) -> Mesh,
    pub default_c0: f64,
    pub error_quadrature: ErrorQuadrature,
}

// 1D factors of the quartic bubble potential.
fn x_fac(x: f64) -> f64 {
    x * x * (1.0 - x) * (1.0 - x)
}
fn dx_fac(x: f64) -> f64 {
    2.0 * x - 6.0 * x * x + 4.0 * x * x * x
}
fn d2x_fac(x: f64) -> f64 {
    2.0 - 12.0 * x + 12.0 * x * x
}
fn d3x_fac(x: f64) -> f64 {
    -12.0 + 24.0 * x
}
fn d4x_fac(_x: f64) -> f64 {
    24.0
}

/// Smooth unit-square benchmark.
pub fn problem_smooth_square(nu: f64) -> BenchmarkProblem {
    assert!(nu > 0.0);
    // u = curl(X Y) = (X Y', -X' Y).
    let exact_velocity = Arc::new(move |p: Point2| {
        [x_fac(p.x) * dx_fac(p.y), -dx_fac(p.x) * x_fac(p.y)]
    });
    let exact_velocity_gradient = Arc::new(move |p: Point2| {
        [
            [dx_fac(p.x) * dx_fac(p.y), x_fac(p.x) * d2x_fac(p.y)],
            [-d2x_fac(p.x) * x_fac(p.y), -dx_fac(p.x) * dx_fac(p.y)],
        ]
    });
    let exact_pressure = Arc::new(move |p: Point2| p.x.powi(5) + p.y.powi(5) - 1.0 / 3.0);
    // f = -nu lap(u) + grad(p).
    let f = move |p: Point2| {
        let lap_u = [
            d2x_fac(p.x) * dx_fac(p.y) + x_fac(p.x) * d3x_fac(p.y),
            -(d3x_fac(p.x) * x_fac(p.y) + dx_fac(p.x) * d2x_fac(p.y)),
        ];
        let grad_p = [5.0 * p.x.powi(4), 5.0 * p.y.powi(4)];
        [-nu * lap_u[0] + grad_p[0], -nu * lap_u[1] + grad_p[1]]
    };
    // curl f = nu lap^2(X Y) = nu (X'''' Y + 2 X'' Y'' + X Y'''').
    let curl_f = move |p: Point2| {
        nu * (d4x_fac(p.x) * x_fac(p.y)
            + 2.0 * d2x_fac(p.x) * d2x_fac(p.y)
            + x_fac(p.x) * d4x_fac(p.y))
    };
    BenchmarkProblem {
        name: "smooth_square",
        nu,
        exact_velocity,
        exact_velocity_gradient,
        exact_pressure,
        problem: StokesProblem::homogeneous(nu, f, CurlSpec::Analytic(Arc::new(curl_f)), 12),
        mesh_factory: unit_square_mesh,
        default_c0: 0.3,
        error_quadrature: ErrorQuadrature::plain(12),
    }
}

/// Singular exponent of the L-shape velocity.
pub const LSHAPE_ALPHA: f64 = 856399.0 / 1572864.0;
/// Interior angle at the reentrant corner.
pub const LSHAPE_OMEGA: f64 = 3.0 * PI / 2.0;

fn psi(phi: f64) -> f64 {
    let a = LSHAPE_ALPHA;
    let caw = (a * LSHAPE_OMEGA).cos();
    ((a + 1.0) * phi).sin() * caw / (a + 1.0) - ((a + 1.0) * phi).cos()
        - ((a - 1.0) * phi).sin() * caw / (a - 1.0)
        + ((a - 1.0) * phi).cos()
}

fn dpsi(phi: f64) -> f64 {
    let a = LSHAPE_ALPHA;
    let caw = (a * LSHAPE_OMEGA).cos();
    ((a + 1.0) * phi).cos() * caw + (a + 1.0) * ((a + 1.0) * phi).sin()
        - ((a - 1.0) * phi).cos() * caw
        - (a - 1.0) * ((a - 1.0) * phi).sin()
}

fn d2psi(phi: f64) -> f64 {
    let a = LSHAPE_ALPHA;
    let caw = (a * LSHAPE_OMEGA).cos();
    -(a + 1.0) * ((a + 1.0) * phi).sin() * caw + (a + 1.0) * (a + 1.0) * ((a + 1.0) * phi).cos()
        + (a - 1.0) * ((a - 1.0) * phi).sin() * caw
        - (a - 1.0) * (a - 1.0) * ((a - 1.0) * phi).cos()
}

fn d3psi(phi: f64) -> f64 {
    let a = LSHAPE_ALPHA;
    let caw = (a * LSHAPE_OMEGA).cos();
    -(a + 1.0) * (a + 1.0) * ((a + 1.0) * phi).cos() * caw
        - (a + 1.0).powi(3) * ((a + 1.0) * phi).sin()
        + (a - 1.0) * (a - 1.0) * ((a - 1.0) * phi).cos() * caw
        + (a - 1.0).powi(3) * ((a - 1.0) * phi).sin()
}

/// Polar angle measured counter-clockwise from the positive x-axis,
/// mapped to `[0, 3 pi / 2]` (the L-shaped domain with the fourth quadrant
/// removed).
fn lshape_angle(p: Point2) -> f64 {
    let mut phi = p.y.atan2(p.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    phi
}

fn lshape_velocity(p: Point2) -> [f64; 2] {
    let a = LSHAPE_ALPHA;
    let r = (p.x * p.x + p.y * p.y).sqrt();
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let phi = lshape_angle(p);
    let (s, c) = (phi.sin(), phi.cos());
    let ps = psi(phi);
    let dps = dpsi(phi);
    let ra = r.powf(a);
    [
        ra * ((a + 1.0) * s * ps + c * dps),
        ra * (-(a + 1.0) * c * ps + s * dps),
    ]
}

fn lshape_velocity_gradient(p: Point2) -> [[f64; 2]; 2] {
    let a = LSHAPE_ALPHA;
    let r = (p.x * p.x + p.y * p.y).sqrt();
    let phi = lshape_angle(p);
    let (s, c) = (phi.sin(), phi.cos());
    let ps = psi(phi);
    let dps = dpsi(phi);
    let d2ps = d2psi(phi);
    let c1 = (a + 1.0) * s * ps + c * dps;
    let c2 = -(a + 1.0) * c * ps + s * dps;
    // d/dphi of the angular factors.
    let dc1 = (a + 1.0) * c * ps + a * s * dps + c * d2ps;
    let dc2 = (a + 1.0) * s * ps - a * c * dps + s * d2ps;
    let ram1 = r.powf(a - 1.0);
    [
        [
            ram1 * (a * c * c1 - s * dc1),
            ram1 * (a * s * c1 + c * dc1),
        ],
        [
            ram1 * (a * c * c2 - s * dc2),
            ram1 * (a * s * c2 + c * dc2),
        ],
    ]
}

/// Singular pressure companion of the L-shape velocity:
/// `-nu lap(u) + grad(p0) = 0`.
pub fn lshape_p0(nu: f64, p: Point2) -> f64 {
    let a = LSHAPE_ALPHA;
    let r = (p.x * p.x + p.y * p.y).sqrt();
    let phi = lshape_angle(p);
    nu * r.powf(a - 1.0) * ((1.0 + a) * (1.0 + a) * dpsi(phi) + d3psi(phi)) / (1.0 - a)
}

/// L-shape benchmark with the added smooth pressure `sin(pi x y)`.
pub fn problem_lshape(nu: f64) -> BenchmarkProblem {
    assert!(nu > 0.0);
    let exact_velocity = Arc::new(lshape_velocity);
    let exact_velocity_gradient =
        Arc::new(lshape_velocity_gradient as fn(Point2) -> [[f64; 2]; 2]);
    let exact_pressure = Arc::new(move |p: Point2| lshape_p0(nu, p) + (PI * p.x * p.y).sin());
    // f = grad(p_plus) with p_plus = sin(pi x y).
    let f = move |p: Point2| {
        let c = (PI * p.x * p.y).cos();
        [PI * p.y * c, PI * p.x * c]
    };
    BenchmarkProblem {
        name: "lshape",
        nu,
        exact_velocity: exact_velocity.clone(),
        exact_velocity_gradient,
        exact_pressure,
        problem: StokesProblem {
            nu,
            f: Arc::new(f),
            curl_f: CurlSpec::Zero,
            dirichlet: exact_velocity,
            f_quad_degree: 12,
        },
        mesh_factory: l_shape_mesh,
        default_c0: 0.3,
        error_quadrature: ErrorQuadrature::with_corner(15, Point2::new(0.0, 0.0), 14),
    }
}

/// The two benchmarks by name (CLI surface).
pub fn benchmark_by_name(name: &str, nu: f64) -> Option<BenchmarkProblem> {
    match name {
        "smooth_square" => Some(problem_smooth_square(nu)),
        "lshape" => Some(problem_lshape(nu)),
        _ => None,
    }
}
