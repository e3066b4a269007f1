use densnav::basis::{Dictionary, QuadratureGrid};
use densnav::controller::{evaluate_policy, export_density_grid, Fallback, FeedbackController, RasterSpec};
use densnav::geometry::Region;
use densnav::navprog::{solve, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::Fixture;

fn solved() -> (Fixture, FeedbackController, QuadratureGrid) {
    let f = Fixture::new();
    let (sol, _) = solve(&f.problem(), &SolverOptions::default()).unwrap();
    let grid = f.inputs.grid.clone();
    let ctl = FeedbackController::from_solution(&f.dict, &sol, &grid, vec![3.0, 3.0], Fallback::Zero).unwrap();
    (f, ctl, grid)
}

fn lattice() -> RasterSpec {
    RasterSpec { x0: -3.0, y0: -3.0, dx: 0.1, dy: 0.1, nx: 121, ny: 121 }
}

#[test]
fn floor_follows_the_peak() {
    let (f, ctl, grid) = solved();
    let peak = (0..grid.len()).map(|i| ctl.rho(grid.node(i))).fold(f64::NEG_INFINITY, f64::max);
    assert!(peak > 0.0);
    assert_eq!(ctl.rho_min, 1e-6 * peak);
    assert_eq!(ctl.dict.len(), f.dict.len());
}

#[test]
fn inputs_respect_limits_everywhere() {
    let (f, ctl, _) = solved();
    let dom = &f.dict.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100_000 {
        let x: Vec<f64> = (0..3).map(|a| rng.gen_range(dom.lower[a]..dom.upper[a])).collect();
        let u = ctl.eval(&x);
        assert!(u[0].abs() <= 3.0 && u[1].abs() <= 3.0, "{u:?} at {x:?}");
    }
}

#[test]
fn zero_controller_never_succeeds() {
    let f = Fixture::new();
    let sys = f.scenario.system().unwrap();
    let setup = f.scenario.evaluation_setup().unwrap();
    let n = f.dict.len();
    let ctl = FeedbackController::new(f.dict.clone(), vec![1.0; n], vec![vec![0.0; n]; 2], 1e-9, vec![3.0, 3.0], Fallback::Zero)
        .unwrap();
    let r = evaluate_policy(&sys, &ctl, &setup, 6, 0.01, 2.0, 4).unwrap();
    assert_eq!(r.metrics.success_rate, 0.0);
    assert_eq!(r.metrics.n_samples, 6);
    assert!(r.metrics.trav_cost_per_run.iter().all(|c| *c >= 0.0));
    assert!(evaluate_policy(&sys, &ctl, &setup, 0, 0.01, 2.0, 4).is_err());
}

#[test]
fn target_covering_the_start_is_immediate_success() {
    let f = Fixture::new();
    let sys = f.scenario.system().unwrap();
    let mut setup = f.scenario.evaluation_setup().unwrap();
    setup.xt = Region::ball([5.5, 7.5], 2.0);
    let n = f.dict.len();
    let ctl = FeedbackController::new(f.dict.clone(), vec![1.0; n], vec![vec![0.0; n]; 2], 1e-9, vec![3.0, 3.0], Fallback::Zero)
        .unwrap();
    let r = evaluate_policy(&sys, &ctl, &setup, 8, 0.01, 2.0, 4).unwrap();
    assert_eq!(r.metrics.success_rate, 1.0);
    assert!(r.trajectories.iter().all(|t| t.states.len() == 1));
    assert_eq!(r.metrics.obstacle_occupancy, 0.0);
}

#[test]
fn evaluation_is_reproducible() {
    let (f, ctl, _) = solved();
    let sys = f.scenario.system().unwrap();
    let setup = f.scenario.evaluation_setup().unwrap();
    let a = evaluate_policy(&sys, &ctl, &setup, 4, 0.01, 3.0, 9).unwrap();
    let b = evaluate_policy(&sys, &ctl, &setup, 4, 0.01, 3.0, 9).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.trajectories, b.trajectories);
}

#[test]
fn zero_density_gives_a_zero_raster() {
    let f = Fixture::new();
    let n = f.dict.len();
    let ctl = FeedbackController::new(f.dict.clone(), vec![0.0; n], vec![vec![0.0; n]; 2], 1e-9, vec![3.0, 3.0], Fallback::Zero)
        .unwrap();
    let r = export_density_grid(&ctl, lattice(), 0.0).unwrap();
    assert!(r.values.iter().all(|v| *v == 0.0));
}

#[test]
fn single_member_raster_peaks_at_its_center() {
    let f = Fixture::new();
    let n = f.dict.len();
    let k = 3 * 6 * 4 + 2 * 4;
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    let c = f.dict.center(k).unwrap();
    let ctl = FeedbackController::new(f.dict.clone(), v, vec![vec![0.0; n]; 2], 1e-9, vec![3.0, 3.0], Fallback::Zero).unwrap();
    let spec = lattice();
    let r = export_density_grid(&ctl, spec, c[2]).unwrap();
    let (imax, _) = r.values.iter().enumerate().fold((0, f64::MIN), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
    let (px, py) = (spec.x0 + (imax % spec.nx) as f64 * spec.dx, spec.y0 + (imax / spec.nx) as f64 * spec.dy);
    assert!((px - c[0]).abs() <= spec.dx && (py - c[1]).abs() <= spec.dy, "peak ({px}, {py}) vs {c:?}");
}

#[test]
fn obstacle_interior_density_is_suppressed() {
    // Members below the overlap threshold may still reach into the disk.
    let (f, ctl, _) = solved();
    let spec = lattice();
    let xu = f.scenario.xu().unwrap();
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for t in 0..8 {
        let r = export_density_grid(&ctl, spec, -std::f64::consts::PI + t as f64 * 0.785).unwrap();
        for (i, v) in r.values.iter().enumerate() {
            let p = [spec.x0 + (i % spec.nx) as f64 * spec.dx, spec.y0 + (i / spec.nx) as f64 * spec.dy, 0.0];
            peak = peak.max(*v);
            if xu.contains(&p) {
                worst = worst.max(*v);
            }
        }
    }
    let tau = f.scenario.config.problem.obstacle_threshold;
    assert!(worst <= tau * peak, "{}", worst / peak);
}
