//! Scenario configuration files and the fit / solve / eval pipeline.
//!
//! Artifacts live under the scenario's output directory:
//!
//! ```text
//! <out>/dictionary.json
//! <out>/generators/{M0,M1,..}.bin, generators.json
//! <out>/fit_report.json, fit_report.txt
//! <out>/solution/{v,w1,..,r1,..}.csv, solution.json, m.csv or mu.csv
//! <out>/problem.navlp                 (solve with export_lp, or export-lp)
//! <out>/eval/metrics.json, runs.json, density.trav, traj/run_XXX.csv
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{
    project_density, weighted_integral, BasisCoefficients, Dictionary, Field, InitialDensity, QuadratureGrid,
    RbfDictionary,
};
use crate::controller::{evaluate_policy, export_density_grid, EvaluationSetup, Fallback, FeedbackController, PolicyEvaluation, RasterSpec};
use crate::dynamics::ControlAffineSystem;
use crate::error::{Error, Result};
use crate::geometry::{Region, Shape};
use crate::io;
use crate::navprog::{self, AssembledProgram, Budget, DensitySolution, NavigationProblem, SolverOptions};
use crate::operators::{fit_generators_with, BalanceForm, FitDiagnostics, GeneratorSet};
use crate::terrain::{Hill, Raster, TraversabilityMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Output directory, relative to the config file.
    pub output: PathBuf,
    pub system: SystemConfig,
    pub dictionary: DictionaryConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    #[serde(default)]
    pub operators: OperatorConfig,
    pub terrain: TerrainConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub preset: String,
    pub dt: f64,
    /// Overrides the preset's planar box as `[[x_lo, x_hi], [y_lo, y_hi]]`.
    #[serde(default)]
    pub planar_box: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    pub counts: Vec<usize>,
    pub sigma_ratio: f64,
    /// Separate width per axis instead of one width from the largest spacing.
    #[serde(default)]
    pub anisotropic: bool,
    /// Quadrature nodes per lattice spacing on each axis.
    #[serde(default = "default_per_spacing")]
    pub quadrature_per_spacing: usize,
}

fn default_per_spacing() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Pairs per input channel; defaults to `10 N`.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self { samples: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(default)]
    pub balance: BalanceForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerrainConfig {
    Preset {
        name: String,
    },
    Analytic {
        base_offset: f64,
        hills: Vec<Hill>,
    },
    /// Raster file, path relative to the config file.
    Raster {
        path: PathBuf,
        #[serde(default = "default_base_offset")]
        base_offset: f64,
    },
    BinaryObstacle {
        shapes: Vec<Shape>,
    },
}

fn default_base_offset() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub x0: Vec<Shape>,
    pub xt: Vec<Shape>,
    #[serde(default)]
    pub xu: Vec<Shape>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Budget,
    pub limits: Vec<f64>,
    #[serde(default)]
    pub curvature: Option<f64>,
    pub epsilon: f64,
    #[serde(default = "default_obstacle_threshold")]
    pub obstacle_threshold: f64,
    /// Basis members centered closer than this to a domain face are fixed
    /// to zero; negative disables.
    #[serde(default = "default_boundary_clearance")]
    pub boundary_clearance: f64,
    /// Center of the initial density; defaults to the center of `x0`.
    #[serde(default)]
    pub sample_center: Option<[f64; 2]>,
    /// Support radius of the initial density; defaults to the `x0` radius.
    #[serde(default)]
    pub sample_radius: Option<f64>,
    /// Also write `problem.navlp` when solving.
    #[serde(default)]
    pub export_lp: bool,
}

fn default_obstacle_threshold() -> f64 {
    1e-3
}

fn default_boundary_clearance() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_samples: usize,
    pub t_max: f64,
    pub seed: u64,
    /// Simulation step; defaults to the system `dt`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Heading of the exported density slice.
    #[serde(default)]
    pub theta_slice: f64,
    /// Number of trajectories written as CSV.
    #[serde(default = "default_saved_trajectories")]
    pub save_trajectories: usize,
}

fn default_saved_trajectories() -> usize {
    100
}

/// A parsed configuration together with its base directory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base_dir)
    }

    pub fn from_toml(text: &str, base_dir: PathBuf) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario config: {e}")))?;
        let s = Self { config, base_dir };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if !(c.system.dt > 0.0) {
            return Err(Error::Config(format!("system.dt must be positive, got {}", c.system.dt)));
        }
        if c.problem.x0.is_empty() || c.problem.xt.is_empty() {
            return Err(Error::Config("problem.x0 and problem.xt need at least one shape".into()));
        }
        for r in [self.x0(), self.xt()].into_iter().chain(self.xu()) {
            r.validate()?;
        }
        if !(c.problem.epsilon >= 0.0) {
            return Err(Error::Config("problem.epsilon must be non-negative".into()));
        }
        if c.evaluation.n_samples == 0 {
            return Err(Error::Config("evaluation.n_samples must be at least 1".into()));
        }
        if !(c.evaluation.t_max > 0.0) {
            return Err(Error::Config("evaluation.t_max must be positive".into()));
        }
        if let TerrainConfig::Raster { path, .. } = &c.terrain {
            let p = self.base_dir.join(path);
            if !p.exists() {
                return Err(Error::Config(format!("terrain raster {} does not exist", p.display())));
            }
        }
        let sys = self.system()?;
        if c.dictionary.counts.len() != sys.state_dim {
            return Err(Error::Config(format!(
                "dictionary.counts has {} entries for a {}-dimensional state",
                c.dictionary.counts.len(),
                sys.state_dim
            )));
        }
        if c.problem.limits.len() != sys.input_dim {
            return Err(Error::Config(format!(
                "problem.limits has {} entries for {} inputs",
                c.problem.limits.len(),
                sys.input_dim
            )));
        }
        Ok(())
    }

    /// Replaces every seed (snapshots and evaluation).
    pub fn override_seed(&mut self, seed: u64) {
        self.config.snapshots.seed = seed;
        self.config.evaluation.seed = seed;
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output)
    }

    pub fn system(&self) -> Result<ControlAffineSystem> {
        let sys = ControlAffineSystem::preset(&self.config.system.preset)?;
        match self.config.system.planar_box {
            None => Ok(sys),
            Some([x, y]) => {
                let mut domain = sys.domain.clone();
                domain.lower[0] = x[0];
                domain.upper[0] = x[1];
                domain.lower[1] = y[0];
                domain.upper[1] = y[1];
                let domain = crate::geometry::BoxDomain::with_periodic(domain.lower, domain.upper, domain.periodic)?;
                sys.with_domain(domain)
            }
        }
    }

    pub fn dictionary(&self) -> Result<RbfDictionary> {
        let sys = self.system()?;
        let d = &self.config.dictionary;
        if d.anisotropic {
            RbfDictionary::grid_anisotropic(&sys.domain, &d.counts, d.sigma_ratio)
        } else {
            RbfDictionary::grid(&sys.domain, &d.counts, d.sigma_ratio)
        }
    }

    pub fn terrain(&self) -> Result<TraversabilityMap> {
        match &self.config.terrain {
            TerrainConfig::Preset { name } => TraversabilityMap::preset(name),
            TerrainConfig::Analytic { base_offset, hills } => TraversabilityMap::analytic(*base_offset, hills.clone()),
            TerrainConfig::Raster { path, base_offset } => {
                TraversabilityMap::raster(Raster::load(&self.base_dir.join(path))?, *base_offset)
            }
            TerrainConfig::BinaryObstacle { shapes } => {
                TraversabilityMap::binary_obstacle(region(shapes), &self.system()?.domain)
            }
        }
    }

    pub fn x0(&self) -> Region {
        region(&self.config.problem.x0)
    }

    pub fn xt(&self) -> Region {
        region(&self.config.problem.xt)
    }

    pub fn xu(&self) -> Option<Region> {
        (!self.config.problem.xu.is_empty()).then(|| region(&self.config.problem.xu))
    }

    pub fn initial_density(&self) -> Result<InitialDensity> {
        let x0 = self.x0();
        let radius = match (self.config.problem.sample_radius, &x0.shapes[0]) {
            (Some(r), _) => r,
            (None, Shape::Ball { radius, .. }) => *radius,
            (None, Shape::Rect { lower, upper }) => 0.5 * (upper[0] - lower[0]).min(upper[1] - lower[1]),
        };
        let center = self.config.problem.sample_center.unwrap_or_else(|| x0.anchor());
        Ok(InitialDensity::with_dims(center, radius, x0.dims, &self.system()?.domain))
    }

    pub fn quadrature(&self, dict: &RbfDictionary) -> Result<QuadratureGrid> {
        let excluded = self.xt().inflate(self.config.problem.epsilon);
        QuadratureGrid::for_dictionary(dict, self.config.dictionary.quadrature_per_spacing, Some(&excluded))
    }

    pub fn snapshot_count(&self, dict: &RbfDictionary) -> usize {
        self.config.snapshots.samples.unwrap_or(10 * dict.len())
    }

    pub fn evaluation_setup(&self) -> Result<EvaluationSetup> {
        Ok(EvaluationSetup {
            x0: self.x0(),
            h0: self.initial_density()?,
            xt: self.xt(),
            epsilon: self.config.problem.epsilon,
            xu: self.xu(),
            terrain: self.terrain()?,
            alpha: self.config.problem.alpha,
            beta: self.config.problem.beta,
        })
    }
}

fn region(shapes: &[Shape]) -> Region {
    Region {
        shapes: shapes.to_vec(),
        dims: crate::geometry::default_planar_dims(),
    }
}

/// Fits generators and writes `dictionary.json`, `generators/` and the
/// fit report.
pub fn run_fit(s: &Scenario) -> Result<(GeneratorSet, FitDiagnostics)> {
    let out = s.output_dir();
    let sys = s.system()?;
    let dict = s.dictionary()?;
    let (gens, diag) = fit_generators_with(
        &sys,
        &dict,
        s.snapshot_count(&dict),
        s.config.system.dt,
        s.config.snapshots.seed,
        s.config.operators.balance,
    )?;
    dict.save(&out.join("dictionary.json"))?;
    gens.save(&out.join("generators"))?;
    io::write_json(&out.join("fit_report.json"), &diag)?;
    io::write_bytes(&out.join("fit_report.txt"), diag.report().as_bytes())?;
    Ok((gens, diag))
}

/// Loads the fitted dictionary and generators from the output directory.
pub fn load_fit(s: &Scenario) -> Result<(RbfDictionary, GeneratorSet)> {
    let out = s.output_dir();
    let dict = RbfDictionary::load(&out.join("dictionary.json"))?;
    let gens = GeneratorSet::load(&out.join("generators"))?;
    if gens.dict_id != dict.id() {
        return Err(Error::Config("generators do not belong to the stored dictionary".into()));
    }
    if gens.form != s.config.operators.balance {
        return Err(Error::Config(format!(
            "generators were fitted with the {:?} balance but the config asks for {:?}; rerun fit",
            gens.form, s.config.operators.balance
        )));
    }
    Ok((dict, gens))
}

/// Problem inputs that depend only on the scenario and the dictionary.
#[derive(Debug, Clone)]
pub struct ProblemInputs {
    pub grid: QuadratureGrid,
    /// Projection of `h0` for the transfer balance, moments for Galerkin.
    pub h0: BasisCoefficients,
    pub terrain: TraversabilityMap,
}

pub fn problem_inputs(s: &Scenario, dict: &RbfDictionary) -> Result<ProblemInputs> {
    let grid = s.quadrature(dict)?;
    let h0 = s.initial_density()?;
    let x0 = s.x0();
    let h = |x: &[f64]| if x0.contains(x) { h0.density(x) } else { 0.0 };
    let rhs = match s.config.operators.balance {
        BalanceForm::Transfer => project_density(dict, &grid, h)?,
        BalanceForm::Galerkin => BasisCoefficients::new(weighted_integral(dict, &grid, h), Field::InitialMoments),
    };
    Ok(ProblemInputs {
        grid,
        h0: rhs,
        terrain: s.terrain()?,
    })
}

pub fn navigation_problem<'a>(
    s: &Scenario,
    dict: &'a RbfDictionary,
    gens: &'a GeneratorSet,
    inputs: &'a ProblemInputs,
) -> NavigationProblem<'a> {
    let p = &s.config.problem;
    NavigationProblem {
        x0: s.x0(),
        xt: s.xt(),
        xu: s.xu(),
        terrain: inputs.terrain.clone(),
        alpha: p.alpha,
        beta: p.beta,
        gamma: p.gamma,
        limits: p.limits.clone(),
        curvature: p.curvature,
        epsilon: p.epsilon,
        obstacle_threshold: p.obstacle_threshold,
        boundary_clearance: p.boundary_clearance,
        generators: gens,
        dict,
        grid: &inputs.grid,
        h0: &inputs.h0,
    }
}

/// Solves the navigation program and writes `solution/` (and
/// `problem.navlp` when requested). A non-optimal status is written and
/// then reported as an error.
pub fn run_solve(s: &Scenario) -> Result<(DensitySolution, AssembledProgram)> {
    let out = s.output_dir();
    let (dict, gens) = load_fit(s)?;
    let inputs = problem_inputs(s, &dict)?;
    let problem = navigation_problem(s, &dict, &gens, &inputs);
    let (sol, assembled) = navprog::solve(&problem, &s.config.solver)?;
    sol.save(&out.join("solution"))?;
    let rhs_name = format!("{}.csv", inputs.h0.represents);
    inputs.h0.save_csv(&out.join("solution").join(rhs_name))?;
    if s.config.problem.export_lp {
        assembled.lp.export(&out.join("problem.navlp"))?;
    }
    if sol.status != navprog::SolveStatus::Optimal {
        let cert = sol
            .certificate
            .as_ref()
            .map(|c| format!("; certificate residual {:.3e} ({})", c.residual, c.note))
            .unwrap_or_default();
        return Err(Error::Evaluation(format!(
            "navigation program status {:?} after {} iterations{cert}",
            sol.status, sol.iterations
        )));
    }
    Ok((sol, assembled))
}

/// Assembles the program (pre-solving for an `auto` budget) and writes it
/// in `navlp` format to `path`.
pub fn run_export_lp(s: &Scenario, path: &Path) -> Result<AssembledProgram> {
    let (dict, gens) = load_fit(s)?;
    let inputs = problem_inputs(s, &dict)?;
    let problem = navigation_problem(s, &dict, &gens, &inputs);
    let assembled = match problem.gamma {
        Budget::Value(g) => navprog::assemble(&problem, Some(g))?,
        Budget::Auto(_) => navprog::solve(&problem, &s.config.solver)?.1,
    };
    assembled.lp.export(path)?;
    Ok(assembled)
}

pub fn controller(s: &Scenario, dict: &RbfDictionary, sol: &DensitySolution, grid: &QuadratureGrid) -> Result<FeedbackController> {
    let sys = s.system()?;
    let fallback = Fallback::for_system(&sys, s.xt().anchor());
    Ok(FeedbackController::from_solution(dict, sol, grid, s.config.problem.limits.clone(), fallback)?
        .with_curvature(s.config.problem.curvature))
}

/// Closed-loop evaluation of the stored solution; writes `eval/`.
pub fn run_eval(s: &Scenario) -> Result<PolicyEvaluation> {
    let out = s.output_dir().join("eval");
    let sys = s.system()?;
    let dict = RbfDictionary::load(&s.output_dir().join("dictionary.json"))?;
    let sol = DensitySolution::load(&s.output_dir().join("solution"))?;
    if sol.v.values.len() != dict.len() {
        return Err(Error::Dimension("solution does not match the stored dictionary".into()));
    }
    let grid = s.quadrature(&dict)?;
    let ctl = controller(s, &dict, &sol, &grid)?;
    let ev = &s.config.evaluation;
    let dt = ev.dt.unwrap_or(s.config.system.dt);
    let result = evaluate_policy(&sys, &ctl, &s.evaluation_setup()?, ev.n_samples, dt, ev.t_max, ev.seed)?;

    io::write_json(&out.join("metrics.json"), &result.metrics)?;
    io::write_json(&out.join("runs.json"), &result.runs)?;
    for (i, t) in result.trajectories.iter().take(ev.save_trajectories).enumerate() {
        t.save_csv(&out.join("traj").join(format!("run_{i:03}.csv")))?;
    }
    let d = &sys.domain;
    let spec = RasterSpec {
        x0: d.lower[0],
        y0: d.lower[1],
        dx: d.extent(0) / 120.0,
        dy: d.extent(1) / 120.0,
        nx: 121,
        ny: 121,
    };
    export_density_grid(&ctl, spec, ev.theta_slice)?.save(&out.join("density.trav"))?;
    Ok(result)
}
