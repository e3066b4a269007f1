#![allow(dead_code)]

pub mod oracle;

use densnav::basis::RbfDictionary;
use densnav::navprog::NavigationProblem;
use densnav::operators::{fit_generators_with, GeneratorSet};
use densnav::scenario::{navigation_problem, problem_inputs, ProblemInputs, Scenario};

pub const TINY: &str = r#"
name = "tiny"
output = "out"

[system]
preset = "dubins"
dt = 0.01

[dictionary]
counts = [6, 6, 4]
sigma_ratio = 1.2
anisotropic = true
quadrature_per_spacing = 2

[snapshots]
seed = 3
samples = 3000

[terrain]
kind = "preset"
name = "hills-A"

[problem]
x0 = [{ shape = "ball", center = [5.5, 7.5], radius = 1.0 }]
xt = [{ shape = "ball", center = [0.0, 0.0], radius = 1.0 }]
xu = [{ shape = "ball", center = [3.0, 4.0], radius = 1.0 }]
alpha = 1.0
beta = 1.0
gamma = "auto"
limits = [3.0, 3.0]
epsilon = 0.1

[evaluation]
n_samples = 4
t_max = 5.0
seed = 1
"#;

pub struct Fixture {
    pub scenario: Scenario,
    pub dict: RbfDictionary,
    pub gens: GeneratorSet,
    pub inputs: ProblemInputs,
}

impl Fixture {
    pub fn new() -> Self {
        let scenario = Scenario::from_toml(TINY, std::env::temp_dir()).unwrap();
        let dict = scenario.dictionary().unwrap();
        let sys = scenario.system().unwrap();
        let c = &scenario.config;
        let samples = scenario.snapshot_count(&dict);
        let (gens, _) =
            fit_generators_with(&sys, &dict, samples, c.system.dt, c.snapshots.seed, c.operators.balance).unwrap();
        let inputs = problem_inputs(&scenario, &dict).unwrap();
        Self { scenario, dict, gens, inputs }
    }

    pub fn problem(&self) -> NavigationProblem<'_> {
        navigation_problem(&self.scenario, &self.dict, &self.gens, &self.inputs)
    }
}
