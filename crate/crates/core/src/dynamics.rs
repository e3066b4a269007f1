//! Control-affine systems, RK4 stepping, snapshot generation and closed-loop
//! simulation.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxDomain;
use crate::io;

/// `out <- f(x)`.
pub type DriftField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `out <- g(x)` as a row-major `n x m` matrix.
pub type InputField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `xdot = f(x) + g(x) u` on a box domain. Periodic axes of the domain are the
/// angle dimensions.
#[derive(Clone)]
pub struct ControlAffineSystem {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub domain: BoxDomain,
    f: DriftField,
    g: InputField,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        domain: BoxDomain,
        f: DriftField,
        g: InputField,
    ) -> Self {
        Self {
            name: name.into(),
            state_dim: domain.dim(),
            input_dim,
            domain,
            f,
            g,
        }
    }

    /// Unicycle: `xdot = u1 cos(theta)`, `ydot = u1 sin(theta)`, `thetadot = u2`.
    pub fn dubins(x: (f64, f64), y: (f64, f64)) -> Self {
        Self::new(
            "dubins",
            2,
            BoxDomain::planar_with_heading(x, y),
            Arc::new(|_, out| out.fill(0.0)),
            Arc::new(|x, g| {
                let (s, c) = x[2].sin_cos();
                g.copy_from_slice(&[c, 0.0, s, 0.0, 0.0, 1.0]);
            }),
        )
    }

    /// `xdot = -x + u` on `[-2, 2]`.
    pub fn linear1d() -> Self {
        Self::new(
            "linear1d-test",
            1,
            BoxDomain::new(vec![-2.0], vec![2.0]).expect("valid box"),
            Arc::new(|x, out| out[0] = -x[0]),
            Arc::new(|_, g| g[0] = 1.0),
        )
    }

    /// `xdot = u` on `[0, 1.5]`.
    pub fn integrator1d() -> Self {
        Self::new(
            "integrator1d",
            1,
            BoxDomain::new(vec![0.0], vec![1.5]).expect("valid box"),
            Arc::new(|_, out| out[0] = 0.0),
            Arc::new(|_, g| g[0] = 1.0),
        )
    }

    /// Looks up a bundled system. `dubins` uses the planar box
    /// `[-3, 9] x [-3, 9]` unless overridden by the caller.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "dubins" => Ok(Self::dubins((-3.0, 9.0), (-3.0, 9.0))),
            "linear1d-test" => Ok(Self::linear1d()),
            "integrator1d" => Ok(Self::integrator1d()),
            other => Err(Error::Config(format!("unknown system preset '{other}'"))),
        }
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != self.state_dim {
            return Err(Error::Dimension(format!(
                "{} has state dimension {}, domain has {}",
                self.name,
                self.state_dim,
                domain.dim()
            )));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn angle_dims(&self) -> Vec<usize> {
        (0..self.state_dim)
            .filter(|&a| self.domain.is_periodic(a))
            .collect()
    }

    /// `f(x) + g(x) u`.
    pub fn vector_field(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.state_dim;
        let m = self.input_dim;
        (self.f)(x, out);
        let mut g = vec![0.0; n * m];
        (self.g)(x, &mut g);
        for (i, o) in out.iter_mut().enumerate() {
            for (j, uj) in u.iter().enumerate() {
                *o += g[i * m + j] * uj;
            }
        }
    }
}

/// Classical RK4 step with `u` held constant; angle axes are wrapped.
pub fn integrate_step(
    sys: &ControlAffineSystem,
    x: &[f64],
    u: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let n = sys.state_dim;
    if x.len() != n || u.len() != sys.input_dim {
        return Err(Error::Dimension(format!(
            "state/input lengths {}/{} for a {}x{} system",
            x.len(),
            u.len(),
            n,
            sys.input_dim
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Integration(format!("dt must be positive, got {dt}")));
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    sys.vector_field(x, u, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    sys.vector_field(&tmp, u, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    sys.vector_field(&tmp, u, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    sys.vector_field(&tmp, u, &mut k4);

    let mut y: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Integration(format!(
            "component {i} became non-finite stepping from {x:?}"
        )));
    }
    sys.domain.wrap(&mut y);
    Ok(y)
}

/// Which constant input produced a snapshot dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputLabel {
    Zero,
    /// Unit vector `e_i`, zero based.
    Unit(usize),
}

impl InputLabel {
    pub fn input(&self, m: usize) -> Vec<f64> {
        let mut u = vec![0.0; m];
        if let InputLabel::Unit(i) = *self {
            u[i] = 1.0;
        }
        u
    }

    /// Stream offset used to decorrelate the sampling of different labels.
    pub(crate) fn stream(&self) -> u64 {
        match *self {
            InputLabel::Zero => 0,
            InputLabel::Unit(i) => i as u64 + 1,
        }
    }
}

impl fmt::Display for InputLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputLabel::Zero => write!(f, "u=0"),
            InputLabel::Unit(i) => write!(f, "u=e{}", i + 1),
        }
    }
}

/// Paired one-step snapshots, stored row-major (`len * dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dt: f64,
    pub label: InputLabel,
    pub seed: u64,
}

impl SnapshotDataset {
    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn pair(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.dim..(i + 1) * self.dim;
        (&self.x[r.clone()], &self.y[r])
    }

    /// Writes `x1..xn,y1..yn` CSV plus a `<path>.json` metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.dim;
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        header.extend((1..=n).map(|i| format!("y{i}")));
        let rows = (0..self.len()).map(|i| {
            let (x, y) = self.pair(i);
            x.iter().chain(y).copied().collect::<Vec<_>>()
        });
        io::write_csv(path, &header, rows)?;
        let meta = SnapshotMeta {
            dt: self.dt,
            input_label: self.label.to_string(),
            seed: self.seed,
            m: self.len(),
        };
        io::write_json(&io::sidecar_path(path), &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: SnapshotMeta = io::read_json(&io::sidecar_path(path))?;
        let (header, rows) = io::read_csv(path, "snapshot csv")?;
        if header.len() % 2 != 0 || header.is_empty() {
            return Err(Error::Parse {
                what: "snapshot csv",
                line: 1,
                message: format!("expected x1..xn,y1..yn, got {} columns", header.len()),
            });
        }
        let n = header.len() / 2;
        let mut x = Vec::with_capacity(rows.len() * n);
        let mut y = Vec::with_capacity(rows.len() * n);
        for r in &rows {
            x.extend_from_slice(&r[..n]);
            y.extend_from_slice(&r[n..]);
        }
        if rows.len() != meta.m {
            return Err(Error::Parse {
                what: "snapshot csv",
                line: rows.len() + 1,
                message: format!("sidecar declares {} pairs, file has {}", meta.m, rows.len()),
            });
        }
        Ok(Self {
            dim: n,
            x,
            y,
            dt: meta.dt,
            label: parse_label(&meta.input_label)?,
            seed: meta.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotMeta {
    dt: f64,
    input_label: String,
    seed: u64,
    #[serde(rename = "M")]
    m: usize,
}

fn parse_label(s: &str) -> Result<InputLabel> {
    if s == "u=0" {
        return Ok(InputLabel::Zero);
    }
    s.strip_prefix("u=e")
        .and_then(|i| i.parse::<usize>().ok())
        .filter(|&i| i >= 1)
        .map(|i| InputLabel::Unit(i - 1))
        .ok_or_else(|| Error::Config(format!("bad input label '{s}'")))
}

const RESAMPLE_BUDGET: usize = 10_000;

/// Draws `m` initial states uniformly over the domain and advances each by one
/// step under the labeled constant input. Sample `i` uses its own ChaCha
/// stream, so the result does not depend on the thread schedule.
pub fn generate_snapshots(
    sys: &ControlAffineSystem,
    label: InputLabel,
    m: usize,
    dt: f64,
    seed: u64,
) -> Result<SnapshotDataset> {
    if m == 0 {
        return Err(Error::Generation("need at least one sample".into()));
    }
    if let InputLabel::Unit(i) = label {
        if i >= sys.input_dim {
            return Err(Error::Dimension(format!(
                "input channel {i} on a system with {} inputs",
                sys.input_dim
            )));
        }
    }
    let u = label.input(sys.input_dim);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((label.stream() << 40) | i as u64);
            for _ in 0..RESAMPLE_BUDGET {
                let x = sys.domain.sample_uniform(&mut rng);
                let y = integrate_step(sys, &x, &u, dt)?;
                if sys.domain.contains(&y) {
                    return Ok((x, y));
                }
            }
            Err(Error::Generation(format!(
                "sample {i}: no in-domain pair after {RESAMPLE_BUDGET} draws"
            )))
        })
        .collect::<Result<_>>()?;
    let dim = sys.state_dim;
    let mut x = Vec::with_capacity(m * dim);
    let mut y = Vec::with_capacity(m * dim);
    for (xi, yi) in pairs {
        x.extend(xi);
        y.extend(yi);
    }
    Ok(SnapshotDataset {
        dim,
        x,
        y,
        dt,
        label,
        seed,
    })
}

/// Why a closed-loop run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Reached,
    LeftDomain,
    Timeout,
}

/// `states[k]` at `times[k]`; `inputs[k]` was applied on `[times[k], times[k+1])`,
/// so there is one fewer input than states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// CSV `t,x1..xn,u1..um`; the last row leaves the input columns empty.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.inputs.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for i in 1..=n {
            write!(s, ",x{i}").unwrap();
        }
        for j in 1..=m {
            write!(s, ",u{j}").unwrap();
        }
        s.push('\n');
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            write!(s, "{t}").unwrap();
            for v in x {
                write!(s, ",{v}").unwrap();
            }
            match self.inputs.get(k) {
                Some(u) => u.iter().for_each(|v| write!(s, ",{v}").unwrap()),
                None => (0..m).for_each(|_| s.push(',')),
            }
            s.push('\n');
        }
        crate::io::write_bytes(path, s.as_bytes())
    }
}

/// Runs `u = controller(x)` with RK4 until `stop(x)` holds, the state leaves
/// the domain or `t_max` elapses. The stop test is applied before each step,
/// so a start inside the stop set yields a single-state trajectory.
pub fn simulate_closed_loop<C, S>(
    sys: &ControlAffineSystem,
    mut controller: C,
    x0: &[f64],
    dt: f64,
    t_max: f64,
    stop: S,
) -> Result<Trajectory>
where
    C: FnMut(&[f64]) -> Vec<f64>,
    S: Fn(&[f64]) -> bool,
{
    if !sys.domain.contains(x0) {
        return Err(Error::Integration(format!("x0 = {x0:?} is outside the domain")));
    }
    let max_steps = (t_max / dt).round() as usize;
    let mut x = x0.to_vec();
    sys.domain.wrap(&mut x);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        inputs: Vec::new(),
        termination: Termination::Timeout,
    };
    for k in 0..max_steps {
        if stop(&x) {
            traj.termination = Termination::Reached;
            return Ok(traj);
        }
        let u = controller(&x);
        let t = k as f64 * dt;
        if u.len() != sys.input_dim || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                time: t,
                message: format!("controller returned {u:?} at {x:?}"),
                partial: Box::new(traj),
            });
        }
        x = match integrate_step(sys, &x, &u, dt) {
            Ok(y) => y,
            Err(e) => {
                return Err(Error::Simulation {
                    time: t,
                    message: e.to_string(),
                    partial: Box::new(traj),
                })
            }
        };
        traj.inputs.push(u);
        traj.times.push((k + 1) as f64 * dt);
        traj.states.push(x.clone());
        if !sys.domain.contains(&x) {
            traj.termination = Termination::LeftDomain;
            return Ok(traj);
        }
    }
    if stop(&x) {
        traj.termination = Termination::Reached;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dubins_straight_and_rotation() {
        let sys = ControlAffineSystem::preset("dubins").unwrap();
        let y = integrate_step(&sys, &[0.0, 0.0, 0.0], &[1.0, 0.0], 0.01).unwrap();
        assert!((y[0] - 0.01).abs() < 1e-15 && y[1] == 0.0 && y[2] == 0.0);
        let y = integrate_step(&sys, &[0.0, 0.0, 0.0], &[0.0, 1.0], 0.01).unwrap();
        assert!(y[0] == 0.0 && y[1] == 0.0 && (y[2] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn label_round_trip() {
        for l in [InputLabel::Zero, InputLabel::Unit(0), InputLabel::Unit(4)] {
            assert_eq!(parse_label(&l.to_string()).unwrap(), l);
        }
        assert!(parse_label("u=e0").is_err());
    }

    #[test]
    fn non_finite_state_is_an_error() {
        let sys = ControlAffineSystem::linear1d();
        let err = integrate_step(&sys, &[f64::NAN], &[0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Integration(_)));
    }

    #[test]
    fn bad_controller_keeps_partial_trajectory() {
        let sys = ControlAffineSystem::linear1d();
        let mut calls = 0;
        let err = simulate_closed_loop(
            &sys,
            |_| {
                calls += 1;
                if calls > 3 {
                    vec![f64::INFINITY]
                } else {
                    vec![0.0]
                }
            },
            &[1.0],
            0.1,
            5.0,
            |_| false,
        )
        .unwrap_err();
        match err {
            Error::Simulation { partial, time, .. } => {
                assert_eq!(partial.steps(), 3);
                assert!((time - 0.3).abs() < 1e-12);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
