use super::*;
use crate::bench::{problem_lshape, problem_smooth_square};
use crate::mesh::unit_square_mesh;
use crate::quadrature::triangle_rule;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn sv_mesh(n: usize) -> Arc<Mesh> {
    Arc::new(unit_square_mesh(n).barycentric_refine())
}

#[test]
fn zero_data_gives_zero_solution() {
    let mesh = sv_mesh(2);
    let problem = StokesProblem::homogeneous(1.0, |_| [0.0, 0.0], CurlSpec::Zero, 4);
    for pair in StokesPairTag::ALL {
        let sol = solve_stokes(mesh.clone(), &problem, pair).unwrap();
        assert!(sol.velocity.iter().all(|v| v.abs() < 1e-12), "{pair}");
        assert!(sol.pressure.iter().all(|p| p.abs() < 1e-10), "{pair}");
    }
}

#[test]
fn sv_solution_is_divergence_free() {
    let bench = problem_smooth_square(1.0);
    let mesh = sv_mesh(4);
    let sol = solve_stokes(mesh, &bench.problem, StokesPairTag::Sv).unwrap();
    let dn = div_norm(&sol);
    let gn = grad_norm(&sol);
    assert!(dn <= 1e-10 * gn, "div norm {dn} vs grad norm {gn}");
    assert!(sol.solve_residual <= 1e-9);
}

#[test]
fn discrete_divergence_constraint_and_zero_mean() {
    let mesh = sv_mesh(2);
    for pair in StokesPairTag::ALL {
        let bench = problem_smooth_square(1.0);
        let sol = solve_stokes(mesh.clone(), &bench.problem, pair).unwrap();
        let res = divergence_constraint_residual(&sol);
        assert!(res <= 1e-9, "{pair}: divergence residual {res}");
        let mean = sol.pressure_mean();
        let scale = sol.pressure.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        assert!(mean.abs() <= 1e-11 * scale.max(1.0), "{pair}: mean {mean}");
    }
}

#[test]
fn velocity_invariant_under_viscosity_for_all_pairs() {
    // With f rebuilt as -nu lap(u) + grad(p) for fixed (u, p), the discrete
    // velocity of a pressure-robust method does not depend on nu.
    let mesh = sv_mesh(2);
    for pair in StokesPairTag::ALL {
        let reference = {
            let bench = problem_smooth_square(1.0);
            solve_stokes(mesh.clone(), &bench.problem, pair).unwrap()
        };
        let scale = reference
            .velocity
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b.abs()));
        for nu in [1e-2, 1e-4] {
            let bench = problem_smooth_square(nu);
            let sol = solve_stokes(mesh.clone(), &bench.problem, pair).unwrap();
            let diff = sol
                .velocity
                .iter()
                .zip(&reference.velocity)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(
                diff <= 1e-7 * scale,
                "{pair} nu={nu}: velocity drift {diff} vs scale {scale}"
            );
        }
    }
}

#[test]
fn reconstruction_identity_for_sv_and_p1_exactness() {
    let mesh = sv_mesh(1);
    let space = FESpace::build(
        mesh.clone(),
        StokesPairTag::Sv.velocity_kind(),
    )
    .unwrap();
    let coeffs = vec![0.5; space.ndofs];
    match apply_reconstruction(StokesPairTag::Sv, &space, &coeffs).unwrap() {
        Reconstructed::Identity => {}
        _ => panic!("SV reconstruction must be the identity"),
    }

    // A continuous P1 field interpolated into the P2 velocity space stays
    // fixed under the BDM reconstruction.
    let p1 = |p: Point2| [0.7 * p.x - 0.3 * p.y + 0.2, -1.1 * p.x + 0.4 * p.y];
    for pair in [StokesPairTag::P20, StokesPairTag::P2B, StokesPairTag::P31] {
        let vspace = FESpace::build(mesh.clone(), pair.velocity_kind()).unwrap();
        let mut coeffs = vec![0.0; vspace.ndofs];
        for (node, &pt) in vspace.scalar_nodes.iter().enumerate() {
            let v = p1(pt);
            coeffs[2 * node] = v[0];
            coeffs[2 * node + 1] = v[1];
        }
        let Reconstructed::Bdm { space: bdm, coeffs: rec } =
            apply_reconstruction(pair, &vspace, &coeffs).unwrap()
        else {
            panic!()
        };
        let rule = triangle_rule(4).unwrap();
        for e in 0..mesh.num_elements() {
            let (pts, _) = rule.on_element(&mesh, e);
            let (vals, _) = bdm.eval_vector_function(&rec, e, &pts);
            for (v, &pt) in vals.iter().zip(&pts) {
                let ex = p1(pt);
                assert!(
                    (v[0] - ex[0]).abs() < 1e-12 && (v[1] - ex[1]).abs() < 1e-12,
                    "{pair}"
                );
            }
        }
    }
}

#[test]
fn reconstruction_preserves_divergence_moments() {
    // (div v, q) = (div R(v), q) for all discrete pressures q; random P2
    // velocity coefficients under the P20 pair (q constant per element).
    let mesh = sv_mesh(2);
    let pair = StokesPairTag::P20;
    let vspace = FESpace::build(mesh.clone(), pair.velocity_kind()).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let coeffs: Vec<f64> = (0..vspace.ndofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let Reconstructed::Bdm { space: bdm, coeffs: rec } =
        apply_reconstruction(pair, &vspace, &coeffs).unwrap()
    else {
        panic!()
    };
    let rule = triangle_rule(6).unwrap();
    for e in 0..mesh.num_elements() {
        let (pts, w) = rule.on_element(&mesh, e);
        let (_, gv) = vspace.eval_vector_function(&coeffs, e, &pts);
        let (_, gr) = bdm.eval_vector_function(&rec, e, &pts);
        let moment: f64 = w
            .iter()
            .enumerate()
            .map(|(p, wq)| wq * ((gv[p][0][0] + gv[p][1][1]) - (gr[p][0][0] + gr[p][1][1])))
            .sum();
        assert!(moment.abs() < 1e-10, "element {e}: {moment}");
    }
}

#[test]
fn h1_error_zero_against_self_and_div_norm_values() {
    let bench = problem_smooth_square(1.0);
    let mesh = sv_mesh(2);
    let sol = solve_stokes(mesh.clone(), &bench.problem, StokesPairTag::Sv).unwrap();
    // Exact gradient handle = the discrete solution's own gradient.
    let err = {
        let sol_ref = &sol;
        let mesh_ref = mesh.clone();
        let grad = move |p: Point2| {
            // Locate the element containing p by scanning (test-only).
            for e in 0..mesh_ref.num_elements() {
                let c = mesh_ref.element_coords(e);
                let b = crate::poly::Barycentric::new(&c);
                let l = b.eval(p);
                if l.iter().all(|&x| x >= -1e-12) {
                    return sol_ref.velocity_gradients(e, &[p])[0];
                }
            }
            unreachable!()
        };
        h1_seminorm_error(&sol, &grad, ErrorQuadrature::plain(6))
    };
    assert!(err < 1e-12 * grad_norm(&sol).max(1.0), "self error {err}");

    // div_norm on interpolated fields: (x, -y) -> 0, (x, y) -> 2 on the
    // unit square.
    let vspace = FESpace::build(mesh.clone(), StokesPairTag::Sv.velocity_kind()).unwrap();
    let build = |f: &dyn Fn(Point2) -> [f64; 2]| {
        let mut coeffs = vec![0.0; vspace.ndofs];
        for (node, &pt) in vspace.scalar_nodes.iter().enumerate() {
            let v = f(pt);
            coeffs[2 * node] = v[0];
            coeffs[2 * node + 1] = v[1];
        }
        coeffs
    };
    let mk = |coeffs: Vec<f64>| StokesSolution {
        pair: StokesPairTag::Sv,
        mesh: mesh.clone(),
        velocity_space: FESpace::build(mesh.clone(), StokesPairTag::Sv.velocity_kind()).unwrap(),
        pressure_space: FESpace::build(mesh.clone(), StokesPairTag::Sv.pressure_kind()).unwrap(),
        velocity: coeffs,
        pressure: vec![0.0; FESpace::build(mesh.clone(), StokesPairTag::Sv.pressure_kind()).unwrap().ndofs],
        ndof: 0,
        solve_residual: 0.0,
    };
    let sol_rot = mk(build(&|p| [p.x, -p.y]));
    assert!(div_norm(&sol_rot) < 1e-12);
    let sol_exp = mk(build(&|p| [p.x, p.y]));
    assert!((div_norm(&sol_exp) - 2.0).abs() < 1e-12);
}

#[test]
fn convergence_ratio_on_uniform_meshes() {
    // Two successive uniform meshes: H1 error ratio about 2^r = 4 for SV.
    let bench = problem_smooth_square(1.0);
    let grad = bench.exact_velocity_gradient.clone();
    let mut errs = Vec::new();
    for n in [8usize, 16] {
        let mesh = sv_mesh(n);
        let sol = solve_stokes(mesh, &bench.problem, StokesPairTag::Sv).unwrap();
        errs.push(h1_seminorm_error(&sol, grad.as_ref(), bench.error_quadrature));
    }
    let ratio = errs[0] / errs[1];
    assert!(
        (ratio - 4.0).abs() <= 0.15 * 4.0,
        "error ratio {ratio}, errors {errs:?}"
    );
}

#[test]
fn lshape_dirichlet_data_and_solve() {
    let bench = problem_lshape(1.0);
    let mesh = Arc::new((bench.mesh_factory)(1).barycentric_refine());
    let sol = solve_stokes(mesh, &bench.problem, StokesPairTag::Sv).unwrap();
    assert!(sol.solve_residual <= 1e-9);
    // No-slip legs meeting at the reentrant corner. The angular origin sits
    // on the positive x-axis, where the velocity vanishes identically. On
    // the other leg the published singular exponent is a binary-rational
    // approximation of the corner eigenvalue (off by about 8e-8), which
    // leaves a residual trace of order 1e-6; the interior Stokes equations
    // hold exactly for any exponent and the solver imposes the exact trace
    // as Dirichlet data, so the benchmark stays consistent.
    for t in [0.1, 0.4, 0.8] {
        let on_x = (bench.exact_velocity)(Point2::new(t, 0.0));
        let on_y = (bench.exact_velocity)(Point2::new(0.0, -t));
        assert!(on_x[0].abs() < 1e-12 && on_x[1].abs() < 1e-12, "{on_x:?}");
        assert!(on_y[0].abs() < 1e-5 && on_y[1].abs() < 1e-5, "{on_y:?}");
    }
    assert!((bench.exact_velocity)(Point2::new(0.0, 0.0)) == [0.0, 0.0]);
}

#[test]
#[ignore]
fn probe_convergence_rates() {
    let bench = problem_smooth_square(1.0);
    let grad = bench.exact_velocity_gradient.clone();
    let mut prev = None;
    for pair in [StokesPairTag::Sv, StokesPairTag::P2B, StokesPairTag::P31, StokesPairTag::P20] {
        prev = None;
        for n in [2usize, 4, 8, 16, 32] {
            let mesh = if pair.needs_barycentric() { sv_mesh(n) } else { Arc::new(unit_square_mesh(n)) };
            let sol = solve_stokes(mesh, &bench.problem, pair).unwrap();
            let err = h1_seminorm_error(&sol, grad.as_ref(), bench.error_quadrature);
            let rate = prev.map(|p: f64| (p / err).log2()).unwrap_or(0.0);
            println!("{pair} n={n:3} ndof={:6} err={err:.6e} rate={rate:.3}", sol.ndof);
            prev = Some(err);
        }
    }
}

#[test]
#[ignore]
fn probe_solve_timing() {
    let bench = problem_smooth_square(1.0);
    let mesh = sv_mesh(32);
    let t0 = std::time::Instant::now();
    let sol = solve_stokes(mesh.clone(), &bench.problem, StokesPairTag::Sv).unwrap();
    println!("solve_stokes ndof={} took {:?}", sol.ndof, t0.elapsed());
    let t1 = std::time::Instant::now();
    let err = h1_seminorm_error(&sol, bench.exact_velocity_gradient.as_ref(), bench.error_quadrature);
    println!("error {err:.3e} took {:?}", t1.elapsed());
}
