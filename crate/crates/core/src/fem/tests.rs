use super::*;
use crate::rng::rng_stream;
use proptest::prelude::*;

#[path = "../../tests/common/oracle.rs"]
mod oracle;

fn grid(m1: usize, m2: usize) -> GridSpec {
    GridSpec::new(&[m1, m2]).unwrap()
}

fn random_field(g: &GridSpec, seed: u64, scale: f64) -> FieldSample {
    let mut s = rng_stream(seed, 0, 0);
    FieldSample {
        grid: g.clone(),
        values: (0..g.num_nodes()).map(|_| scale * s.next()).collect(),
    }
}

fn solve(z: FieldSample, f: Forcing, pre: Preconditioner) -> FeSolution {
    let opts = SolverOptions {
        preconditioner: pre,
        ..SolverOptions::default()
    };
    assemble_and_solve(&DarcyProblem::new(z, f).unwrap(), &opts).unwrap()
}

fn linear_profile(g: &GridSpec) -> Vec<f64> {
    (0..g.num_nodes()).map(|k| 1.0 - g.node_coords(k)[0]).collect()
}

#[test]
fn homogeneous_problem_is_linear() {
    for pre in [Preconditioner::Jacobi, Preconditioner::Multigrid] {
        for (m1, m2) in [(8, 8), (32, 32), (6, 3)] {
            let g = grid(m1, m2);
            let sol = solve(FieldSample::constant(&g, 0.0), Forcing::Zero, pre);
            let err = sol.u.iter().zip(linear_profile(&g)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{m1}x{m2} {pre:?}: {err}");
        }
    }
}

#[test]
fn constant_shift_leaves_homogeneous_solution() {
    let g = grid(8, 8);
    let z = random_field(&g, 3, 1.0);
    let mut shifted = z.clone();
    shifted.values.iter_mut().for_each(|v| *v += 2.5);
    let a = solve(z, Forcing::Zero, Preconditioner::Multigrid);
    let b = solve(shifted, Forcing::Zero, Preconditioner::Multigrid);
    for (x, y) in a.u.iter().zip(&b.u) {
        assert!((x - y).abs() < 1e-10);
    }
    let c = solve(FieldSample::constant(&g, 1.7), Forcing::Zero, Preconditioner::Multigrid);
    for (x, y) in c.u.iter().zip(linear_profile(&g)) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn matches_dense_direct_solve() {
    for (m1, m2, seed) in [(4, 4, 1), (4, 4, 2), (5, 3, 7), (16, 16, 4)] {
        let g = grid(m1, m2);
        let z = random_field(&g, seed, 1.0);
        let expect = oracle::dense_fe_solve(m1, m2, &z.values, 1.0);
        for pre in [Preconditioner::Jacobi, Preconditioner::Multigrid] {
            let sol = solve(z.clone(), Forcing::Constant(1.0), pre);
            for (a, b) in sol.u.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-8, "{m1}x{m2} {pre:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn residual_meets_tolerance() {
    let g = grid(32, 32);
    let z = random_field(&g, 11, 1.0);
    let problem = DarcyProblem::new(z, Forcing::Constant(1.0)).unwrap();
    let sys = assemble(&problem);
    let sol = assemble_and_solve(&problem, &SolverOptions::default()).unwrap();
    let x: Vec<f64> = sys.free_nodes.iter().map(|&k| sol.u[k]).collect();
    let ax = sys.matrix.mul_vec(&x);
    let r: f64 = ax.iter().zip(&sys.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let b: f64 = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(r <= 1.01e-10 * b, "{r} vs {b}");
    assert!(sol.residual <= 1e-10);
}

#[test]
fn stiffness_is_symmetric() {
    let g = grid(6, 5);
    let sys = assemble(&DarcyProblem::new(random_field(&g, 5, 1.0), Forcing::Zero).unwrap());
    let d = sys.matrix.to_dense();
    for (i, row) in d.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((v - d[j][i]).abs() < 1e-14);
        }
    }
}

#[test]
fn reflection_symmetry_in_x2() {
    let g = grid(8, 8);
    let sol = solve(FieldSample::constant(&g, 0.0), Forcing::Zero, Preconditioner::Multigrid);
    for j in 0..=8 {
        for i in 0..=8 {
            assert!((sol.u[i + 9 * j] - sol.u[i + 9 * (8 - j)]).abs() < 1e-10);
        }
    }
}

#[test]
fn maximum_principle_without_forcing() {
    for seed in 0..5 {
        let g = grid(16, 16);
        let sol = solve(random_field(&g, seed, 1.5), Forcing::Zero, Preconditioner::Multigrid);
        let (lo, hi) = sol.u.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo >= -1e-9 && hi <= 1.0 + 1e-9, "{lo} {hi}");
    }
}

#[test]
fn refinement_converges_at_second_order() {
    // Smooth coefficient, so the P1 nodal error decays like h^2.
    let field = |g: &GridSpec| FieldSample {
        grid: g.clone(),
        values: (0..g.num_nodes())
            .map(|k| {
                let x = g.node_coords(k);
                0.5 * (3.0 * x[0]).sin() * (2.0 * x[1]).cos()
            })
            .collect(),
    };
    let ms = [8usize, 16, 32, 64];
    let sols: Vec<FeSolution> = ms
        .iter()
        .map(|&m| solve(field(&grid(m, m)), Forcing::Constant(1.0), Preconditioner::Multigrid))
        .collect();
    let mut diffs = Vec::new();
    for w in sols.windows(2) {
        let (c, f) = (&w[0], &w[1]);
        let mc = c.grid.m()[0];
        let mut d: f64 = 0.0;
        for j in 0..=mc {
            for i in 0..=mc {
                d = d.max((c.u[i + (mc + 1) * j] - f.u[2 * i + (2 * mc + 1) * 2 * j]).abs());
            }
        }
        diffs.push(d);
    }
    for w in diffs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order}, diffs {diffs:?}");
    }
}

#[test]
fn multigrid_iterations_stay_bounded() {
    let mut its = Vec::new();
    for m in [64, 128] {
        let g = grid(m, m);
        its.push(solve(random_field(&g, 9, 1.0), Forcing::Constant(1.0), Preconditioner::Multigrid).iterations);
    }
    assert!(its.iter().all(|&i| i <= 25), "{its:?}");
}

#[test]
fn iteration_cap_reports_history() {
    let g = grid(16, 16);
    let problem = DarcyProblem::new(random_field(&g, 2, 2.0), Forcing::Constant(1.0)).unwrap();
    let opts = SolverOptions {
        tol: 1e-300,
        max_iter_factor: 1,
        preconditioner: Preconditioner::Jacobi,
    };
    match assemble_and_solve(&problem, &opts) {
        Err(Error::SolverDiverged {
            iterations,
            residual_history,
            ..
        }) => {
            assert_eq!(iterations, 15 * 17);
            assert_eq!(residual_history.len(), iterations + 1);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn rejects_bad_inputs() {
    let g1 = GridSpec::new(&[8]).unwrap();
    assert!(DarcyProblem::new(FieldSample::constant(&g1, 0.0), Forcing::Zero).is_err());
    let g = grid(4, 4);
    let mut z = FieldSample::constant(&g, 0.0);
    z.values[3] = 1e4;
    assert!(matches!(DarcyProblem::new(z, Forcing::Zero), Err(Error::Domain(_))));
    let sol = solve(FieldSample::constant(&g, 0.0), Forcing::Zero, Preconditioner::Jacobi);
    assert!(qoi_point(&sol, [1.2, 0.5]).is_err());
}

#[test]
fn point_qoi_examples() {
    let g = grid(8, 8);
    let sol = solve(FieldSample::constant(&g, 0.0), Forcing::Zero, Preconditioner::Multigrid);
    assert!((qoi_point(&sol, [7.0 / 15.0, 7.0 / 15.0]).unwrap() - 8.0 / 15.0).abs() < 1e-9);
    let sol = solve(random_field(&g, 1, 1.0), Forcing::Constant(1.0), Preconditioner::Multigrid);
    for (k, x) in [(0usize, [0.0, 0.0]), (80, [1.0, 1.0]), (3 + 9 * 5, [0.375, 0.625])] {
        assert_eq!(qoi_point(&sol, x).unwrap(), sol.u[k]);
    }
}

#[test]
fn point_qoi_matches_barycentric_oracle() {
    let g = grid(4, 4);
    let sol = solve(random_field(&g, 8, 1.0), Forcing::Constant(1.0), Preconditioner::Multigrid);
    let x = [7.0 / 15.0, 7.0 / 15.0];
    let expect = oracle::barycentric_eval(4, 4, &sol.u, x);
    assert!((qoi_point(&sol, x).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn l2_examples() {
    let g = grid(8, 8);
    let ones = FeSolution {
        grid: g.clone(),
        u: vec![1.0; g.num_nodes()],
        iterations: 0,
        residual: 0.0,
        work: 0.0,
    };
    assert!((qoi_l2norm(&ones) - 1.0).abs() < 1e-12);
    let lin = FeSolution {
        u: linear_profile(&g),
        ..ones
    };
    assert!((qoi_l2norm(&lin) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
}

fn random_solution(m1: usize, m2: usize, seed: u64) -> FeSolution {
    let g = grid(m1, m2);
    let u = rng_stream(seed, 1, 0).take(g.num_nodes());
    FeSolution {
        grid: g,
        u,
        iterations: 0,
        residual: 0.0,
        work: 0.0,
    }
}

#[test]
fn l2_matches_quadrature_oracle() {
    let sol = random_solution(4, 4, 3);
    let expect = oracle::l2_norm_quadrature(4, 4, &sol.u);
    assert!((qoi_l2norm(&sol) - expect).abs() < 1e-10);
}

proptest! {
    #[test]
    fn point_qoi_agrees_with_oracle_anywhere(x in 0.0f64..=1.0, y in 0.0f64..=1.0, seed in 0u64..50, m1 in 1usize..7, m2 in 1usize..7) {
        let sol = random_solution(m1, m2, seed);
        let expect = oracle::barycentric_eval(m1, m2, &sol.u, [x, y]);
        prop_assert!((qoi_point(&sol, [x, y]).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn l2_agrees_with_oracle(seed in 0u64..200, m1 in 1usize..9, m2 in 1usize..9) {
        let sol = random_solution(m1, m2, seed);
        prop_assert!((qoi_l2norm(&sol) - oracle::l2_norm_quadrature(m1, m2, &sol.u)).abs() < 1e-10);
    }
}
