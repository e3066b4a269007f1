//! Feedback law `k(x) = rho_bar(x) / rho(x)` recovered from a solved
//! navigation program, and closed-loop evaluation.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Dictionary, InitialDensity, QuadratureGrid, RbfDictionary};
use crate::dynamics::{simulate_closed_loop, ControlAffineSystem, Termination, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{wrap_into, Region};
use crate::navprog::DensitySolution;
use crate::terrain::{Raster, TraversabilityMap};

/// Evaluation floor relative to the largest `rho` on the quadrature grid.
pub const RHO_FLOOR: f64 = 1e-6;

/// Policy used where `rho` is below the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fallback {
    Zero,
    /// Unicycle heuristic: `u1 = L1 / 2`, `u2 = gain * heading error`
    /// capped at `L2` (and at `u1 / C` with a curvature bound).
    SteerToTarget {
        target: [f64; 2],
        planar_dims: [usize; 2],
        heading_dim: usize,
        gain: f64,
    },
}

impl Fallback {
    /// Steering toward `target` for two-input systems with a heading axis,
    /// zero input otherwise.
    pub fn for_system(sys: &ControlAffineSystem, target: [f64; 2]) -> Self {
        match sys.angle_dims().first() {
            Some(&heading_dim) if sys.input_dim == 2 && sys.state_dim == 3 => Fallback::SteerToTarget {
                target,
                planar_dims: [0, 1],
                heading_dim,
                gain: 2.0,
            },
            _ => Fallback::Zero,
        }
    }
}

/// One control evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub u: Vec<f64>,
    pub saturated: bool,
    pub fallback: bool,
}

#[derive(Debug)]
pub struct FeedbackController {
    pub dict: RbfDictionary,
    pub v: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub rho_min: f64,
    pub limits: Vec<f64>,
    pub curvature: Option<f64>,
    pub fallback: Fallback,
    saturations: AtomicU64,
}

impl Clone for FeedbackController {
    fn clone(&self) -> Self {
        Self {
            dict: self.dict.clone(),
            v: self.v.clone(),
            w: self.w.clone(),
            rho_min: self.rho_min,
            limits: self.limits.clone(),
            curvature: self.curvature,
            fallback: self.fallback.clone(),
            saturations: AtomicU64::new(self.saturation_events()),
        }
    }
}

impl FeedbackController {
    pub fn new(
        dict: RbfDictionary,
        v: Vec<f64>,
        w: Vec<Vec<f64>>,
        rho_min: f64,
        limits: Vec<f64>,
        fallback: Fallback,
    ) -> Result<Self> {
        let n = dict.len();
        if v.len() != n || w.iter().any(|wj| wj.len() != n) || w.len() != limits.len() {
            return Err(Error::Controller(format!(
                "coefficient sizes do not match a dictionary of {n} with {} limits",
                limits.len()
            )));
        }
        if v.iter().chain(w.iter().flatten()).any(|c| !c.is_finite()) {
            return Err(Error::Controller("non-finite coefficients".into()));
        }
        if !(rho_min > 0.0) || limits.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Controller(format!(
                "need rho_min > 0 and positive limits, got {rho_min} and {limits:?}"
            )));
        }
        Ok(Self {
            dict,
            v,
            w,
            rho_min,
            limits,
            curvature: None,
            fallback,
            saturations: AtomicU64::new(0),
        })
    }

    /// Controller for a solved program, with the floor set from the largest
    /// `rho` over `grid`.
    pub fn from_solution(
        dict: &RbfDictionary,
        sol: &DensitySolution,
        grid: &QuadratureGrid,
        limits: Vec<f64>,
        fallback: Fallback,
    ) -> Result<Self> {
        let v = sol.v.values.clone();
        let max_rho = grid_max(dict, &v, grid);
        let rho_min = if max_rho > 0.0 { RHO_FLOOR * max_rho } else { f64::MIN_POSITIVE };
        Self::new(
            dict.clone(),
            v,
            sol.w.iter().map(|c| c.values.clone()).collect(),
            rho_min,
            limits,
            fallback,
        )
    }

    pub fn with_curvature(mut self, curvature: Option<f64>) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn inputs(&self) -> usize {
        self.limits.len()
    }

    /// Number of clipped evaluations so far.
    pub fn saturation_events(&self) -> u64 {
        self.saturations.load(Ordering::Relaxed)
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        let psi = self.dict.eval(x);
        dot(&psi, &self.v)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_detailed(x).u
    }

    pub fn eval_detailed(&self, x: &[f64]) -> Control {
        let psi = self.dict.eval(x);
        let rho = dot(&psi, &self.v);
        if !(rho >= self.rho_min) {
            return Control {
                u: self.fallback_input(x),
                saturated: false,
                fallback: true,
            };
        }
        let mut saturated = false;
        let mut u: Vec<f64> = self
            .w
            .iter()
            .zip(&self.limits)
            .map(|(wj, &l)| {
                let raw = dot(&psi, wj) / rho;
                if raw.abs() > l {
                    saturated = true;
                }
                raw.clamp(-l, l)
            })
            .collect();
        // Clipping u1 alone would break the turn-rate ratio the LP rows give.
        if let (Some(c), true) = (self.curvature, u.len() >= 2) {
            let cap = u[0].max(0.0) / c;
            if u[1].abs() > cap {
                u[1] = u[1].clamp(-cap, cap);
                saturated = true;
            }
        }
        if saturated {
            self.saturations.fetch_add(1, Ordering::Relaxed);
        }
        Control {
            u,
            saturated,
            fallback: false,
        }
    }

    fn fallback_input(&self, x: &[f64]) -> Vec<f64> {
        match &self.fallback {
            Fallback::Zero => vec![0.0; self.inputs()],
            Fallback::SteerToTarget {
                target,
                planar_dims,
                heading_dim,
                gain,
            } => {
                let dx = target[0] - x[planar_dims[0]];
                let dy = target[1] - x[planar_dims[1]];
                let err = wrap_into(dy.atan2(dx) - x[*heading_dim], -std::f64::consts::PI, std::f64::consts::PI);
                let u1 = 0.5 * self.limits[0];
                let mut cap = self.limits[1];
                if let Some(c) = self.curvature {
                    cap = cap.min(u1 / c);
                }
                vec![u1, (gain * err).clamp(-cap, cap)]
            }
        }
    }

    /// `rho` on a planar lattice with the remaining coordinates taken from
    /// `slice` (for example the heading).
    pub fn density_raster(
        &self,
        lattice: RasterSpec,
        planar_dims: [usize; 2],
        slice: &[f64],
    ) -> Result<Raster> {
        let mut values = vec![0.0; lattice.nx * lattice.ny];
        values.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let (i, j) = (idx % lattice.nx, idx / lattice.nx);
            let mut s = slice.to_vec();
            s[planar_dims[0]] = lattice.x0 + i as f64 * lattice.dx;
            s[planar_dims[1]] = lattice.y0 + j as f64 * lattice.dy;
            *out = self.rho(&s);
        });
        Raster::new(lattice.x0, lattice.y0, lattice.dx, lattice.dy, lattice.nx, lattice.ny, values)
    }
}

/// Planar lattice geometry for rasters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

/// `rho` at heading `theta` over a planar lattice (Dubins state layout).
pub fn export_density_grid(ctl: &FeedbackController, lattice: RasterSpec, theta: f64) -> Result<Raster> {
    let dim = ctl.dict.state_dim();
    let mut slice = vec![0.0; dim];
    if dim > 2 {
        slice[2] = theta;
    }
    ctl.density_raster(lattice, [0, 1], &slice)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn grid_max(dict: &RbfDictionary, v: &[f64], grid: &QuadratureGrid) -> f64 {
    (0..grid.len())
        .into_par_iter()
        .map(|i| dot(&dict.eval(grid.node(i)), v))
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Sets and weights used by closed-loop evaluation.
#[derive(Debug, Clone)]
pub struct EvaluationSetup {
    pub x0: Region,
    pub h0: InitialDensity,
    pub xt: Region,
    pub epsilon: f64,
    pub xu: Option<Region>,
    pub terrain: TraversabilityMap,
    pub alpha: f64,
    pub beta: f64,
}

impl EvaluationSetup {
    /// Samples `count` initial states from `h0` restricted to `X0`. Sample `i`
    /// uses its own ChaCha stream, so the result does not depend on threading.
    pub fn sample_initial_states(&self, sys: &ControlAffineSystem, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let reach = self.h0.radius;
        let c = self.h0.center;
        let d = self.h0.dims;
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                for _ in 0..100_000 {
                    let mut x = sys.domain.sample_uniform(&mut rng);
                    x[d[0]] = c[0] + reach * rng.gen_range(-1.0..=1.0);
                    x[d[1]] = c[1] + reach * rng.gen_range(-1.0..=1.0);
                    let p = self.h0.profile(&x);
                    if p > 0.0 && self.x0.contains(&x) && sys.domain.contains(&x) && rng.gen::<f64>() <= p {
                        return Ok(x);
                    }
                }
                Err(Error::Config(
                    "initial density has no mass inside X0; check the sampling center".into(),
                ))
            })
            .collect()
    }

    pub fn success_region(&self) -> Region {
        self.xt.inflate(self.epsilon)
    }
}

/// Outcome of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub x0: Vec<f64>,
    pub success: bool,
    pub termination: Option<Termination>,
    pub duration: f64,
    pub trav_cost: f64,
    pub weighted_cost: f64,
    pub obstacle_time: f64,
    pub steps: usize,
    pub saturated_steps: usize,
    pub fallback_steps: usize,
    pub max_abs_input: Vec<f64>,
    pub error: Option<String>,
}

/// Aggregate closed-loop metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_samples: usize,
    pub success_rate: f64,
    /// Seconds spent in `Xu`, summed over successful runs.
    pub obstacle_occupancy: f64,
    /// Seconds spent in `Xu`, summed over all runs.
    pub obstacle_occupancy_all: f64,
    pub trav_cost_per_run: Vec<f64>,
    pub weighted_cost_per_run: Vec<f64>,
    pub mean_trav_cost: f64,
    pub mean_weighted_cost: f64,
    pub saturation_fraction: f64,
    pub fallback_fraction: f64,
    pub failed_runs: usize,
}

#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub metrics: RunMetrics,
    pub runs: Vec<RunRecord>,
    pub trajectories: Vec<Trajectory>,
}

/// Runs the closed loop from `n_samples` initial states drawn from `h0`.
/// Simulation failures are recorded per run and count as non-success.
pub fn evaluate_policy(
    sys: &ControlAffineSystem,
    ctl: &FeedbackController,
    setup: &EvaluationSetup,
    n_samples: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<PolicyEvaluation> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::Config(format!("need dt > 0 and t_max > 0, got {dt}, {t_max}")));
    }
    let starts = setup.sample_initial_states(sys, n_samples, seed)?;
    let target = setup.success_region();
    let results: Vec<(RunRecord, Trajectory)> = starts
        .into_par_iter()
        .map(|x0| {
            let mut flags = Vec::new();
            let outcome = simulate_closed_loop(
                sys,
                |x| {
                    let c = ctl.eval_detailed(x);
                    flags.push((c.saturated, c.fallback));
                    c.u
                },
                &x0,
                dt,
                t_max,
                |x| target.contains(x),
            );
            let (traj, error) = match outcome {
                Ok(t) => (t, None),
                Err(Error::Simulation { partial, message, .. }) => (*partial, Some(message)),
                Err(e) => (
                    Trajectory {
                        times: vec![0.0],
                        states: vec![x0.clone()],
                        inputs: Vec::new(),
                        termination: Termination::Timeout,
                    },
                    Some(e.to_string()),
                ),
            };
            (score_run(&traj, &flags, setup, ctl, dt, x0, error), traj)
        })
        .collect();

    let (runs, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let n = runs.len() as f64;
    let steps: usize = runs.iter().map(|r| r.steps).sum();
    let frac = |count: usize| if steps == 0 { 0.0 } else { count as f64 / steps as f64 };
    let trav: Vec<f64> = runs.iter().map(|r| r.trav_cost).collect();
    let weighted: Vec<f64> = runs.iter().map(|r| r.weighted_cost).collect();
    let metrics = RunMetrics {
        n_samples,
        success_rate: runs.iter().filter(|r| r.success).count() as f64 / n,
        obstacle_occupancy: runs.iter().filter(|r| r.success).map(|r| r.obstacle_time).fold(0.0, |a, t| a + t),
        obstacle_occupancy_all: runs.iter().map(|r| r.obstacle_time).fold(0.0, |a, t| a + t),
        mean_trav_cost: trav.iter().sum::<f64>() / n,
        mean_weighted_cost: weighted.iter().sum::<f64>() / n,
        trav_cost_per_run: trav,
        weighted_cost_per_run: weighted,
        saturation_fraction: frac(runs.iter().map(|r| r.saturated_steps).sum()),
        fallback_fraction: frac(runs.iter().map(|r| r.fallback_steps).sum()),
        failed_runs: runs.iter().filter(|r| r.error.is_some()).count(),
    };
    Ok(PolicyEvaluation {
        metrics,
        runs,
        trajectories,
    })
}

fn score_run(
    traj: &Trajectory,
    flags: &[(bool, bool)],
    setup: &EvaluationSetup,
    ctl: &FeedbackController,
    dt: f64,
    x0: Vec<f64>,
    error: Option<String>,
) -> RunRecord {
    let mut trav = 0.0;
    let mut weighted = 0.0;
    let mut obstacle = 0.0;
    let mut max_abs = vec![0.0f64; ctl.inputs()];
    for (x, u) in traj.states.iter().zip(&traj.inputs) {
        let b = setup.terrain.eval(x);
        let u1: f64 = u.iter().map(|v| v.abs()).sum();
        trav += dt * b;
        weighted += dt * (setup.alpha * b + setup.beta * b * u1);
        if setup.xu.as_ref().is_some_and(|r| r.contains(x)) {
            obstacle += dt;
        }
        for (m, v) in max_abs.iter_mut().zip(u) {
            *m = m.max(v.abs());
        }
    }
    let steps = traj.inputs.len();
    let flags = &flags[..steps.min(flags.len())];
    RunRecord {
        x0,
        success: error.is_none() && traj.termination == Termination::Reached,
        termination: error.is_none().then_some(traj.termination),
        duration: traj.duration(),
        trav_cost: trav,
        weighted_cost: weighted,
        obstacle_time: obstacle,
        steps,
        saturated_steps: flags.iter().filter(|f| f.0).count(),
        fallback_steps: flags.iter().filter(|f| f.1).count(),
        max_abs_input: max_abs,
        error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxDomain;

    fn small_dict() -> RbfDictionary {
        let domain = BoxDomain::planar_with_heading((-1.0, 1.0), (-1.0, 1.0));
        RbfDictionary::grid(&domain, &[3, 3, 1], 1.2).unwrap()
    }

    fn controller(v: Vec<f64>, w: Vec<Vec<f64>>, limits: Vec<f64>) -> FeedbackController {
        FeedbackController::new(small_dict(), v, w, 1e-9, limits, Fallback::Zero).unwrap()
    }

    #[test]
    fn zero_rho_bar_gives_zero_input() {
        let n = small_dict().len();
        let c = controller(vec![1.0; n], vec![vec![0.0; n]; 2], vec![3.0, 3.0]);
        assert_eq!(c.eval(&[0.2, -0.3, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn ratio_and_clip() {
        let n = small_dict().len();
        let c = controller(vec![2.0; n], vec![vec![1.0; n], vec![10.0; n]], vec![3.0, 3.0]);
        let u = c.eval_detailed(&[0.1, 0.1, 0.0]);
        assert!((u.u[0] - 0.5).abs() < 1e-12);
        assert_eq!(u.u[1], 3.0);
        assert!(u.saturated);
        assert_eq!(c.saturation_events(), 1);
    }

    #[test]
    fn non_finite_coefficients_are_rejected() {
        let n = small_dict().len();
        let mut v = vec![1.0; n];
        v[3] = f64::NAN;
        let e = FeedbackController::new(small_dict(), v, vec![vec![0.0; n]], 1e-9, vec![1.0], Fallback::Zero);
        assert!(matches!(e, Err(Error::Controller(_))));
    }

    #[test]
    fn fallback_respects_curvature() {
        let n = small_dict().len();
        let fb = Fallback::SteerToTarget {
            target: [0.0, 1.0],
            planar_dims: [0, 1],
            heading_dim: 2,
            gain: 2.0,
        };
        let c = FeedbackController::new(small_dict(), vec![0.0; n], vec![vec![0.0; n]; 2], 1e-9, vec![3.0, 3.0], fb)
            .unwrap()
            .with_curvature(Some(2.0));
        let u = c.eval_detailed(&[0.0, 0.0, 0.0]);
        assert!(u.fallback);
        assert_eq!(u.u[0], 1.5);
        assert!((u.u[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_bump_raster_peaks_at_center() {
        let dict = small_dict();
        let k = 4;
        let center = dict.center(k).unwrap();
        let mut v = vec![0.0; dict.len()];
        v[k] = 1.0;
        let c = controller(v, vec![vec![0.0; dict.len()]], vec![1.0]);
        let spec = RasterSpec {
            x0: -1.0,
            y0: -1.0,
            dx: 0.1,
            dy: 0.1,
            nx: 21,
            ny: 21,
        };
        let r = export_density_grid(&c, spec, center[2]).unwrap();
        let (imax, _) = r
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let (px, py) = (spec.x0 + (imax % 21) as f64 * 0.1, spec.y0 + (imax / 21) as f64 * 0.1);
        assert!((px - center[0]).abs() < 1e-9 && (py - center[1]).abs() < 1e-9);
    }

    #[test]
    fn clipped_first_input_keeps_turn_ratio() {
        let n = small_dict().len();
        let c = controller(vec![1.0; n], vec![vec![5.0; n], vec![2.0; n]], vec![3.0, 3.0]).with_curvature(Some(2.0));
        let u = c.eval_detailed(&[0.0, 0.0, 0.0]);
        assert_eq!(u.u[0], 3.0);
        assert_eq!(u.u[1], 1.5);
        assert!(u.saturated);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coeffs(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
            (
                prop::collection::vec(0.01f64..2.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        }

        proptest! {
            #[test]
            fn inputs_stay_within_limits(
                (v, w1, w2) in coeffs(9),
                x in -1.5f64..1.5, y in -1.5f64..1.5, th in -3.2f64..3.2,
            ) {
                let c = controller(v, vec![w1, w2], vec![3.0, 0.5]);
                let u = c.eval(&[x, y, th]);
                prop_assert!(u[0].abs() <= 3.0 && u[1].abs() <= 0.5);
            }

            #[test]
            fn joint_scaling_leaves_the_law_unchanged(
                (v, w1, w2) in coeffs(9),
                scale in 1e-3f64..1e3,
                x in -1.0f64..1.0, y in -1.0f64..1.0, th in -3.0f64..3.0,
            ) {
                let a = controller(v.clone(), vec![w1.clone(), w2.clone()], vec![3.0, 3.0]);
                let sc = |z: &[f64]| z.iter().map(|t| t * scale).collect::<Vec<_>>();
                let b = controller(sc(&v), vec![sc(&w1), sc(&w2)], vec![3.0, 3.0]);
                let (ua, ub) = (a.eval(&[x, y, th]), b.eval(&[x, y, th]));
                for (p, q) in ua.iter().zip(&ub) {
                    prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
                }
            }

            #[test]
            fn curvature_ratio_holds_after_clipping(
                (v, w1, w2) in coeffs(9),
                cb in 0.5f64..4.0,
                x in -1.0f64..1.0, y in -1.0f64..1.0, th in -3.0f64..3.0,
            ) {
                let w1: Vec<f64> = w1.iter().map(|t| t.abs()).collect();
                let c = controller(v, vec![w1, w2], vec![3.0, 3.0]).with_curvature(Some(cb));
                let u = c.eval(&[x, y, th]);
                prop_assert!(u[1].abs() <= u[0] / cb + 1e-12);
            }
        }
    }
}
