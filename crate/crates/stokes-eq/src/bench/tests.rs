use super::*;
use crate::amr::{AmrOptions, EstimatorKind};
use crate::estimator::EstimatorConfig;
use crate::mesh::Point2;
use crate::stokes::StokesPairTag;

/// Truncated bivariate Taylor jet up to total degree 4; an independent
/// route to the derivatives of the factored benchmark data.
#[derive(Clone, Copy)]
struct Jet {
    c: [f64; 15],
}

fn exps() -> Vec<(u32, u32)> {
    crate::poly::monomial_exponents(4)
}

impl Jet {
    fn constant(v: f64) -> Jet {
        let mut c = [0.0; 15];
        c[0] = v;
        Jet { c }
    }

    fn var_x(x0: f64) -> Jet {
        let mut j = Jet::constant(x0);
        j.c[1] = 1.0;
        j
    }

    fn var_y(y0: f64) -> Jet {
        let mut j = Jet::constant(y0);
        j.c[2] = 1.0;
        j
    }

    fn mul(&self, other: &Jet) -> Jet {
        let e = exps();
        let idx = |a: u32, b: u32| e.iter().position(|&p| p == (a, b));
        let mut out = [0.0; 15];
        for (i, &(a1, b1)) in e.iter().enumerate() {
            if self.c[i] == 0.0 {
                continue;
            }
            for (j, &(a2, b2)) in e.iter().enumerate() {
                if other.c[j] == 0.0 {
                    continue;
                }
                if let Some(k) = idx(a1 + a2, b1 + b2) {
                    out[k] += self.c[i] * other.c[j];
                }
            }
        }
        Jet { c: out }
    }

    fn sub(&self, other: &Jet) -> Jet {
        let mut c = self.c;
        for (v, o) in c.iter_mut().zip(&other.c) {
            *v -= o;
        }
        Jet { c }
    }

    fn scale(&self, s: f64) -> Jet {
        let mut c = self.c;
        for v in &mut c {
            *v *= s;
        }
        Jet { c }
    }

    /// `d^(a+b) f / dx^a dy^b` at the expansion point.
    fn derivative(&self, a: u32, b: u32) -> f64 {
        let e = exps();
        let i = e.iter().position(|&p| p == (a, b)).unwrap();
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        self.c[i] * fact(a) * fact(b)
    }
}

fn potential_jet(p: Point2) -> Jet {
    // xi = x^2 (1-x)^2 y^2 (1-y)^2 evaluated in jet arithmetic.
    let x = Jet::var_x(p.x);
    let y = Jet::var_y(p.y);
    let one = Jet::constant(1.0);
    let gx = x.mul(&x).mul(&one.sub(&x).mul(&one.sub(&x)));
    let gy = y.mul(&y).mul(&one.sub(&y).mul(&one.sub(&y)));
    gx.mul(&gy)
}

fn pressure_jet(p: Point2) -> Jet {
    let x = Jet::var_x(p.x);
    let y = Jet::var_y(p.y);
    let x5 = x.mul(&x).mul(&x).mul(&x).mul(&x);
    let y5 = y.mul(&y).mul(&y).mul(&y).mul(&y);
    x5.sub(&y5.scale(-1.0)).sub(&Jet::constant(1.0 / 3.0))
}

#[test]
fn smooth_square_data_matches_jet_oracle() {
    let nu = 0.37;
    let bench = problem_smooth_square(nu);
    for pt in bench.sample_points(100, 7) {
        let xi = potential_jet(pt);
        let pr = pressure_jet(pt);

        // u = (xi_y, -xi_x).
        let u = (bench.exact_velocity)(pt);
        assert!((u[0] - xi.derivative(0, 1)).abs() < 1e-12);
        assert!((u[1] + xi.derivative(1, 0)).abs() < 1e-12);

        // grad u rows: (xi_xy, xi_yy), (-xi_xx, -xi_xy).
        let g = (bench.exact_velocity_gradient)(pt);
        assert!((g[0][0] - xi.derivative(1, 1)).abs() < 1e-11);
        assert!((g[0][1] - xi.derivative(0, 2)).abs() < 1e-11);
        assert!((g[1][0] + xi.derivative(2, 0)).abs() < 1e-11);
        assert!((g[1][1] + xi.derivative(1, 1)).abs() < 1e-11);

        // f = -nu lap(u) + grad(p) with lap(u) = (xi_xxy + xi_yyy, -(xi_xxx + xi_xyy)).
        let f = (bench.problem.f)(pt);
        let lap_u = [
            xi.derivative(2, 1) + xi.derivative(0, 3),
            -(xi.derivative(3, 0) + xi.derivative(1, 2)),
        ];
        let grad_p = [pr.derivative(1, 0), pr.derivative(0, 1)];
        let scale = (f[0] * f[0] + f[1] * f[1]).sqrt().max(1.0);
        assert!(
            (f[0] + nu * lap_u[0] - grad_p[0]).abs() <= 1e-8 * scale,
            "f[0] mismatch at {pt:?}"
        );
        assert!((f[1] + nu * lap_u[1] - grad_p[1]).abs() <= 1e-8 * scale);

        // curl f = nu lap^2 xi.
        let crate::stokes::CurlSpec::Analytic(cf) = &bench.problem.curl_f else {
            panic!()
        };
        let lap2 = xi.derivative(4, 0) + 2.0 * xi.derivative(2, 2) + xi.derivative(0, 4);
        assert!((cf(pt) - nu * lap2).abs() <= 1e-8 * (nu * lap2).abs().max(1.0));

        // div u = 0 identically (curl construction).
        assert!((g[0][0] + g[1][1]).abs() < 1e-12);
    }

    // Center symmetry: u(0.5, 0.5) = 0.
    let u = (bench.exact_velocity)(Point2::new(0.5, 0.5));
    assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
}

#[test]
fn self_checks_pass_for_both_problems() {
    problem_smooth_square(1.0).self_check().unwrap();
    problem_smooth_square(1e-4).self_check().unwrap();
    problem_lshape(1.0).self_check().unwrap();
    problem_lshape(1e-4).self_check().unwrap();
}

#[test]
fn lshape_singular_pair_solves_stokes_without_force() {
    // -nu lap(u) + grad(p0) = 0 via the finite-difference oracle.
    let nu = 1.3;
    let bench = problem_lshape(nu);
    let u = bench.exact_velocity.clone();
    let h = 5e-4;
    let d2 = |g: &dyn Fn(f64) -> f64, x: f64, h: f64| {
        (-g(x - 2.0 * h) + 16.0 * g(x - h) - 30.0 * g(x) + 16.0 * g(x + h) - g(x + 2.0 * h))
            / (12.0 * h * h)
    };
    let d1 = |g: &dyn Fn(f64) -> f64, x: f64, h: f64| {
        (g(x - 2.0 * h) - 8.0 * g(x - h) + 8.0 * g(x + h) - g(x + 2.0 * h)) / (12.0 * h)
    };
    let mut worst = 0.0_f64;
    for pt in bench.sample_points(100, 11) {
        let mut lap = [0.0; 2];
        for comp in 0..2 {
            let ux = |x: f64| u(Point2::new(x, pt.y))[comp];
            let uy = |y: f64| u(Point2::new(pt.x, y))[comp];
            lap[comp] = d2(&ux, pt.x, h) + d2(&uy, pt.y, h);
        }
        let p0x = |x: f64| super::problems::lshape_p0(nu, Point2::new(x, pt.y));
        let p0y = |y: f64| super::problems::lshape_p0(nu, Point2::new(pt.x, y));
        let gp = [d1(&p0x, pt.x, h), d1(&p0y, pt.y, h)];
        let res = [(-nu * lap[0] + gp[0]), (-nu * lap[1] + gp[1])];
        let scale = (gp[0] * gp[0] + gp[1] * gp[1]).sqrt().max(1.0);
        worst = worst.max((res[0] * res[0] + res[1] * res[1]).sqrt() / scale);
    }
    assert!(worst <= 1e-6, "singular pair residual {worst:.3e}");

    // The singular exponent is stored as the exact rational.
    assert_eq!(super::problems::LSHAPE_ALPHA, 856399.0 / 1572864.0);
    // psi(0) = -1 + 1 = 0.
    let at0 = (bench.exact_velocity)(Point2::new(0.3, 0.0));
    assert!(at0[0].abs() < 1e-12 && at0[1].abs() < 1e-12);
}

#[test]
fn efficiency_index_values() {
    assert_eq!(efficiency_index(2.0, 1.0), 2.0);
    assert!(efficiency_index(1.0, 0.0).is_nan());
}

#[test]
fn csv_format_and_recomposition() {
    let args = StudyArgs {
        problem: "smooth_square".into(),
        pair: StokesPairTag::Sv,
        estimator: EstimatorKind::Geq,
        nu: 1.0,
        levels: 2,
        adaptive: false,
        c0: 0.3,
        c1: 1.0,
        c2: 1.0,
        max_ndof: 200_000,
        mesh_n: 1,
        out: None,
    };
    let history = run_study(&args).unwrap();
    assert_eq!(history.rows.len(), 2);
    let csv = history.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    for (row, line) in history.rows.iter().zip(lines) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 10);
        assert_eq!(cols[0].parse::<usize>().unwrap(), row.level);
        assert_eq!(cols[1].parse::<usize>().unwrap(), row.ndof);
        let eta: f64 = cols[4].parse().unwrap();
        let err: f64 = cols[3].parse().unwrap();
        let eff: f64 = cols[8].parse().unwrap();
        // 17 significant digits survive the round-trip.
        assert_eq!(eta, row.eta_total);
        assert!((eff - eta / err).abs() <= 1e-12 * eff.abs());
        // Guaranteed bound on every study level.
        assert!(eta >= err);
    }
    assert!(csv.ends_with('\n'));

    let bad = StudyArgs {
        problem: "unknown".into(),
        ..args
    };
    assert!(matches!(
        run_study(&bad),
        Err(StudyError::UnknownProblem(_))
    ));
}

#[test]
fn uniform_flag_reproduces_uniform_study() {
    // With the uniform flag the element count quadruples each level.
    let bench = problem_smooth_square(1.0);
    let mut opts = AmrOptions::new(EstimatorKind::Leq, EstimatorConfig::new(2));
    opts.uniform = true;
    opts.max_levels = 2;
    let history = crate::amr::amr_loop(&bench, StokesPairTag::Sv, (bench.mesh_factory)(1), opts)
        .unwrap();
    assert_eq!(history.rows.len(), 2);
    assert!(history.rows[1].ndof > 3 * history.rows[0].ndof);
    assert!((history.rows[1].h_max - history.rows[0].h_max / 2.0).abs() < 1e-12);
}
