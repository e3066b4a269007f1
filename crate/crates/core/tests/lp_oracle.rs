//! Interior-point results against brute-force vertex enumeration.

use densnav::navprog::{solve_lp, LinearProgram, SolveStatus, SolverOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::oracle::{random_program, vertex_optimum};

#[test]
fn random_programs_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SolverOptions::default();
    for case in 0..50 {
        let (d, lp) = random_program(&mut rng);
        let expected = vertex_optimum(&d);
        let sol = solve_lp(&lp, &opts);
        assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
        assert!(
            (sol.objective - expected).abs() <= 1e-6 * (1.0 + expected.abs()),
            "case {case}: ipm {} vs vertices {expected}",
            sol.objective
        );
    }
}

#[test]
fn infeasible_program_is_detected() {
    let mut lp = LinearProgram::new(2);
    lp.c = vec![1.0, 1.0];
    lp.add_le([(0, 1.0), (1, 1.0)], -1.0);
    lp.lower = vec![0.0, 0.0];
    let sol = solve_lp(&lp, &SolverOptions::default());
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(sol.certificate.is_some());
}

#[test]
fn unbounded_program_is_detected() {
    let mut lp = LinearProgram::new(2);
    lp.c = vec![-1.0, 0.0];
    lp.add_le([(0, -1.0), (1, 1.0)], 1.0);
    lp.lower = vec![0.0, 0.0];
    let sol = solve_lp(&lp, &SolverOptions::default());
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

#[test]
fn fixed_and_forced_variables_survive_presolve() {
    // x0 fixed by bounds, x1 forced to 0 by x1 <= 0 with x1 >= 0.
    let mut lp = LinearProgram::new(3);
    lp.c = vec![1.0, 1.0, -1.0];
    lp.lower = vec![2.0, 0.0, 0.0];
    lp.upper = vec![2.0, f64::INFINITY, f64::INFINITY];
    lp.add_le([(1, 1.0)], 0.0);
    lp.add_eq([(0, 1.0), (1, 1.0), (2, 1.0)], 5.0);
    let sol = solve_lp(&lp, &SolverOptions::default());
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x[0] - 2.0).abs() < 1e-8);
    assert!(sol.x[1].abs() < 1e-8);
    assert!((sol.x[2] - 3.0).abs() < 1e-8);
    assert!((sol.objective - (-1.0)).abs() < 1e-8);
}
