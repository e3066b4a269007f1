//! The navigation linear program: assembly from fitted generators and
//! terrain data, solution, and export.
//!
//! Variables are laid out in blocks of `N` (the dictionary size):
//! `v`, then `w_1..w_m`, then `r_1..r_m`.

pub mod ipm;
pub mod lpfile;
pub mod sparse;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ipm::{primal_residuals, solve_lp, Certificate, KktResiduals, LpSolution, SolveStatus, SolverOptions};
pub use sparse::SparseMatrix;

use crate::basis::{weighted_integral, BasisCoefficients, Dictionary, Field, QuadratureGrid, RbfDictionary};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::io;
use crate::operators::GeneratorSet;
use crate::terrain::{indicator, TraversabilityMap};

/// Block layout of the navigation variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub basis: usize,
    pub inputs: usize,
}

impl Layout {
    pub fn vars(&self) -> usize {
        self.basis * (1 + 2 * self.inputs)
    }

    pub fn v(&self, k: usize) -> usize {
        k
    }

    pub fn w(&self, j: usize, k: usize) -> usize {
        (1 + j) * self.basis + k
    }

    pub fn r(&self, j: usize, k: usize) -> usize {
        (1 + self.inputs + j) * self.basis + k
    }
}

/// `min c^T x` s.t. `a_eq x = b_eq`, `a_ineq x <= b_ineq`,
/// `lower <= x <= upper` (infinite bounds allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_eq: SparseMatrix,
    pub b_eq: Vec<f64>,
    pub a_ineq: SparseMatrix,
    pub b_ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub layout: Option<Layout>,
}

impl LinearProgram {
    /// `n` free variables, zero objective, no rows.
    pub fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            a_eq: SparseMatrix::new(n),
            b_eq: Vec::new(),
            a_ineq: SparseMatrix::new(n),
            b_ineq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            layout: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_eq<I: IntoIterator<Item = (usize, f64)>>(&mut self, row: I, rhs: f64) {
        self.a_eq.push_row(row);
        self.b_eq.push(rhs);
    }

    /// Adds `row . x <= rhs`.
    pub fn add_le<I: IntoIterator<Item = (usize, f64)>>(&mut self, row: I, rhs: f64) {
        self.a_ineq.push_row(row);
        self.b_ineq.push(rhs);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        let ok = self.a_eq.ncols == n
            && self.a_ineq.ncols == n
            && self.b_eq.len() == self.a_eq.nrows()
            && self.b_ineq.len() == self.a_ineq.nrows()
            && self.lower.len() == n
            && self.upper.len() == n;
        if !ok {
            return Err(Error::Dimension("inconsistent LP block sizes".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let coef_finite = |m: &SparseMatrix| m.triplets().all(|t| t.2.is_finite());
        if !(finite(&self.c) && finite(&self.b_eq) && finite(&self.b_ineq))
            || !(coef_finite(&self.a_eq) && coef_finite(&self.a_ineq))
            || self.lower.iter().chain(&self.upper).any(|v| v.is_nan())
        {
            return Err(Error::Config("LP data contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        lpfile::write(self, path)
    }

    pub fn import(path: &Path) -> Result<Self> {
        lpfile::read(path)
    }
}

/// Traversability budget `d2^T v <= gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    /// `1.5` times `d2^T v` of the problem solved without the budget row.
    Auto(AutoTag),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Budget {
    pub const AUTO: Budget = Budget::Auto(AutoTag::Auto);
}

/// Multiplier applied to the unconstrained `d2^T v` when the budget is `auto`.
pub const AUTO_BUDGET_FACTOR: f64 = 1.5;

/// Everything needed to assemble the navigation LP.
#[derive(Debug, Clone)]
pub struct NavigationProblem<'a> {
    pub x0: Region,
    pub xt: Region,
    pub xu: Option<Region>,
    pub terrain: TraversabilityMap,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Budget,
    pub limits: Vec<f64>,
    pub curvature: Option<f64>,
    /// Width of the target neighborhood excluded from the integrals.
    pub epsilon: f64,
    /// Entries of `d1` below this fraction of its maximum are dropped.
    pub obstacle_threshold: f64,
    /// Basis members centered closer than this to a non-periodic face of
    /// the domain are fixed to zero (negative disables).
    pub boundary_clearance: f64,
    pub generators: &'a GeneratorSet,
    pub dict: &'a RbfDictionary,
    /// Quadrature over the domain minus the target neighborhood.
    pub grid: &'a QuadratureGrid,
    /// Projection of the initial density.
    pub h0: &'a BasisCoefficients,
}

/// Integrals and index sets produced during assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramData {
    /// `int alpha b Psi`.
    pub cost_v: Vec<f64>,
    /// `int beta b Psi`.
    pub cost_r: Vec<f64>,
    /// `int 1_Xu Psi` after thresholding (all zero without an obstacle).
    pub d1: Vec<f64>,
    /// `int b Psi`.
    pub d2: Vec<f64>,
    /// Basis members centered in the target neighborhood. Their coefficients
    /// are fixed to zero and their balance rows dropped.
    pub sink: Vec<usize>,
    /// Basis members fixed to zero by the boundary clearance.
    pub walled: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct AssembledProgram {
    pub lp: LinearProgram,
    pub data: ProgramData,
    pub gamma: Option<f64>,
}

impl NavigationProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        self.x0.validate()?;
        self.xt.validate()?;
        if let Some(xu) = &self.xu {
            xu.validate()?;
            if !xu.disjoint_from(&self.x0) || !xu.disjoint_from(&self.xt) {
                return Err(Error::Config("obstacle set must not meet X0 or XT".into()));
            }
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::Config(format!(
                "need alpha, beta >= 0 with alpha + beta > 0 (got {}, {})",
                self.alpha, self.beta
            )));
        }
        if let Budget::Value(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        let n = self.dict.len();
        let m = self.generators.inputs();
        if self.generators.size() != n || self.h0.values.len() != n {
            return Err(Error::Dimension(format!(
                "dictionary has {n} members, generators {} and h0 {}",
                self.generators.size(),
                self.h0.values.len()
            )));
        }
        if self.generators.dict_id != self.dict.id() {
            return Err(Error::Config("generators were fitted on a different dictionary".into()));
        }
        if self.limits.len() != m || self.limits.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config(format!(
                "need {m} positive control limits, got {:?}",
                self.limits
            )));
        }
        if let Some(c) = self.curvature {
            if !(c > 0.0) || m < 2 {
                return Err(Error::Config(
                    "curvature bound needs a positive value and two inputs".into(),
                ));
            }
        }
        if self.grid.is_empty() {
            return Err(Error::Config("empty quadrature grid".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            basis: self.dict.len(),
            inputs: self.generators.inputs(),
        }
    }

    /// Integral data and sink set.
    pub fn data(&self) -> ProgramData {
        let b = |x: &[f64]| self.terrain.eval(x);
        let d2 = weighted_integral(self.dict, self.grid, b);
        let cost_v = d2.iter().map(|v| self.alpha * v).collect();
        let cost_r = d2.iter().map(|v| self.beta * v).collect();
        let d1 = match &self.xu {
            Some(xu) => {
                let mut d1 = weighted_integral(self.dict, self.grid, indicator(xu));
                let max = d1.iter().copied().fold(0.0, f64::max);
                d1.iter_mut()
                    .filter(|v| **v < self.obstacle_threshold * max)
                    .for_each(|v| *v = 0.0);
                d1
            }
            None => vec![0.0; self.dict.len()],
        };
        let neighborhood = self.xt.inflate(self.epsilon);
        let mut sink: Vec<usize> = (0..self.dict.len())
            .filter(|&k| neighborhood.contains(&self.dict.center(k).expect("rbf center")))
            .collect();
        if sink.is_empty() {
            let anchor = self.xt.anchor();
            let dist = |k: usize| {
                let c = self.dict.center(k).expect("rbf center");
                let p = self.xt.planar(&c);
                (p[0] - anchor[0]).powi(2) + (p[1] - anchor[1]).powi(2)
            };
            let nearest = (0..self.dict.len())
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                .expect("nonempty dictionary");
            sink.push(nearest);
        }
        let domain = &self.dict.domain;
        let walled = (0..self.dict.len())
            .filter(|k| !sink.contains(k))
            .filter(|&k| {
                let c = self.dict.center(k).expect("rbf center");
                (0..domain.dim()).any(|a| {
                    !domain.is_periodic(a)
                        && (c[a] - domain.lower[a]).min(domain.upper[a] - c[a]) < self.boundary_clearance
                })
            })
            .collect();
        ProgramData {
            cost_v,
            cost_r,
            d1,
            d2,
            sink,
            walled,
        }
    }
}

/// Builds the LP. `gamma = None` omits the budget row.
pub fn assemble(problem: &NavigationProblem, gamma: Option<f64>) -> Result<AssembledProgram> {
    problem.validate()?;
    let data = problem.data();
    Ok(AssembledProgram {
        lp: assemble_with(problem, &data, gamma),
        data,
        gamma,
    })
}

fn assemble_with(problem: &NavigationProblem, data: &ProgramData, gamma: Option<f64>) -> LinearProgram {
    let layout = problem.layout();
    let n = layout.basis;
    let m = layout.inputs;
    let mut lp = LinearProgram::new(layout.vars());
    lp.layout = Some(layout);

    for k in 0..n {
        lp.c[layout.v(k)] = data.cost_v[k];
        for j in 0..m {
            lp.c[layout.r(j, k)] = data.cost_r[k];
        }
        lp.lower[layout.v(k)] = 0.0;
    }
    let mut is_sink = vec![false; n];
    for &k in data.sink.iter().chain(&data.walled) {
        is_sink[k] = data.sink.contains(&k);
        lp.upper[layout.v(k)] = 0.0;
        for j in 0..m {
            for idx in [layout.w(j, k), layout.r(j, k)] {
                lp.lower[idx] = 0.0;
                lp.upper[idx] = 0.0;
            }
        }
    }

    // -M0 v - sum_j Mj wj = m on rows outside the target neighborhood.
    let gens = problem.generators;
    for i in (0..n).filter(|&i| !is_sink[i]) {
        let mut row = Vec::with_capacity(n * (1 + m));
        for k in 0..n {
            row.push((layout.v(k), -gens.m0[(i, k)]));
            for (j, mj) in gens.m.iter().enumerate() {
                row.push((layout.w(j, k), -mj[(i, k)]));
            }
        }
        lp.add_eq(row, problem.h0.values[i]);
    }
    if problem.xu.is_some() {
        lp.add_eq(
            data.d1.iter().enumerate().map(|(k, v)| (layout.v(k), *v)),
            0.0,
        );
    }

    for k in 0..n {
        for j in 0..m {
            let (v, w, r) = (layout.v(k), layout.w(j, k), layout.r(j, k));
            lp.add_le([(w, 1.0), (r, -1.0)], 0.0);
            lp.add_le([(w, -1.0), (r, -1.0)], 0.0);
            lp.add_le([(w, 1.0), (v, -problem.limits[j])], 0.0);
            lp.add_le([(w, -1.0), (v, -problem.limits[j])], 0.0);
        }
        if let Some(cb) = problem.curvature {
            // Forward motion: w1 >= 0 and C r2 <= w1.
            let (w1, r2) = (layout.w(0, k), layout.r(1, k));
            lp.add_le([(r2, cb), (w1, -1.0)], 0.0);
            lp.add_le([(w1, -1.0)], 0.0);
        }
    }
    if let Some(g) = gamma {
        lp.add_le(data.d2.iter().enumerate().map(|(k, v)| (layout.v(k), *v)), g);
    }
    lp
}

/// Solved coefficients and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySolution {
    pub v: BasisCoefficients,
    pub w: Vec<BasisCoefficients>,
    pub r: Vec<BasisCoefficients>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub gamma: Option<f64>,
    /// `d1^T v`.
    pub obstacle_mass: f64,
    /// `d2^T v`.
    pub trav_budget_used: f64,
    pub certificate: Option<Certificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    pub gamma: Option<f64>,
    pub obstacle_mass: f64,
    pub trav_budget_used: f64,
    pub residuals: KktResiduals,
    pub certificate: Option<Certificate>,
}

impl DensitySolution {
    pub fn from_lp(sol: &LpSolution, layout: Layout, data: &ProgramData, gamma: Option<f64>) -> Self {
        let n = layout.basis;
        let block = |start: usize| sol.x[start..start + n].to_vec();
        let v = block(layout.v(0));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Self {
            obstacle_mass: dot(&data.d1, &v),
            trav_budget_used: dot(&data.d2, &v),
            v: BasisCoefficients::new(v, Field::Rho),
            w: (0..layout.inputs)
                .map(|j| BasisCoefficients::new(block(layout.w(j, 0)), Field::RhoBar(j)))
                .collect(),
            r: (0..layout.inputs)
                .map(|j| BasisCoefficients::new(block(layout.r(j, 0)), Field::Slack(j)))
                .collect(),
            objective: sol.objective,
            status: sol.status,
            residuals: sol.residuals,
            iterations: sol.iterations,
            gamma,
            certificate: sol.certificate.clone(),
        }
    }

    pub fn report(&self) -> SolutionReport {
        SolutionReport {
            status: self.status,
            objective: self.objective,
            iterations: self.iterations,
            gamma: self.gamma,
            obstacle_mass: self.obstacle_mass,
            trav_budget_used: self.trav_budget_used,
            residuals: self.residuals,
            certificate: self.certificate.clone(),
        }
    }

    /// Writes `v.csv`, `w<j>.csv`, `r<j>.csv` and `solution.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.v.save_csv(&dir.join("v.csv"))?;
        for c in self.w.iter().chain(&self.r) {
            c.save_csv(&dir.join(format!("{}.csv", c.represents)))?;
        }
        io::write_json(&dir.join("solution.json"), &self.report())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let rep: SolutionReport = io::read_json(&dir.join("solution.json"))?;
        let v = BasisCoefficients::load_csv(&dir.join("v.csv"))?;
        let mut w = Vec::new();
        let mut r = Vec::new();
        for j in 1.. {
            let wp = dir.join(format!("w{j}.csv"));
            if !wp.exists() {
                break;
            }
            w.push(BasisCoefficients::load_csv(&wp)?);
            r.push(BasisCoefficients::load_csv(&dir.join(format!("r{j}.csv")))?);
        }
        if w.iter().chain(&r).any(|c| c.values.len() != v.values.len()) {
            return Err(Error::Dimension("coefficient files have different lengths".into()));
        }
        Ok(Self {
            v,
            w,
            r,
            objective: rep.objective,
            status: rep.status,
            residuals: rep.residuals,
            iterations: rep.iterations,
            gamma: rep.gamma,
            obstacle_mass: rep.obstacle_mass,
            trav_budget_used: rep.trav_budget_used,
            certificate: rep.certificate,
        })
    }
}

/// Assembles and solves, running the budget-free pre-solve first when the
/// budget is `auto`.
pub fn solve(problem: &NavigationProblem, opts: &SolverOptions) -> Result<(DensitySolution, AssembledProgram)> {
    problem.validate()?;
    let data = problem.data();
    let layout = problem.layout();
    let gamma = match problem.gamma {
        Budget::Value(g) => g,
        Budget::Auto(_) => {
            let lp = assemble_with(problem, &data, None);
            let pre = solve_lp(&lp, opts);
            if pre.status != SolveStatus::Optimal {
                let sol = DensitySolution::from_lp(&pre, layout, &data, None);
                return Ok((sol, AssembledProgram { lp, data, gamma: None }));
            }
            let used: f64 = (0..layout.basis).map(|k| data.d2[k] * pre.x[layout.v(k)]).sum();
            AUTO_BUDGET_FACTOR * used
        }
    };
    let lp = assemble_with(problem, &data, Some(gamma));
    let sol = solve_lp(&lp, opts);
    Ok((
        DensitySolution::from_lp(&sol, layout, &data, Some(gamma)),
        AssembledProgram {
            lp,
            data,
            gamma: Some(gamma),
        },
    ))
}
