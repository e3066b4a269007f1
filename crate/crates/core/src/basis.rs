//! Function dictionaries, midpoint quadrature over the working domain, and
//! the integrals and projections built on them.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Region};
use crate::io;

/// Rows per work unit in chunked reductions. Fixed so that results do not
/// depend on the number of threads.
pub(crate) const CHUNK: usize = 256;

/// Sums `items` as a balanced binary tree in index order.
pub(crate) fn pairwise_reduce<T, F>(mut items: Vec<T>, add: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(add(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Maps fixed-size chunks of `0..n` in parallel and reduces them pairwise.
pub(crate) fn chunked_reduce<T, M, F>(n: usize, map: M, add: F) -> Option<T>
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync,
    F: Fn(T, T) -> T,
{
    let parts: Vec<T> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| map(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    pairwise_reduce(parts, add)
}

/// A finite set of scalar functions on state space.
pub trait Dictionary: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn state_dim(&self) -> usize;

    /// Writes `Psi(x)` into `out` (length `len()`).
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// True when every member is strictly positive everywhere.
    fn is_positive(&self) -> bool;

    /// Stable content hash used to tie fitted matrices to their dictionary.
    fn id(&self) -> String;

    /// Representative location of member `k`, if it has one.
    fn center(&self, _k: usize) -> Option<Vec<f64>> {
        None
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// `points.len()/dim x N` matrix whose rows are `Psi(x_i)^T`.
    fn eval_rows(&self, points: &[f64]) -> DMatrix<f64> {
        let n = self.state_dim();
        let rows = points.len() / n;
        let mut out = DMatrix::zeros(rows, self.len());
        let mut buf = vec![0.0; self.len()];
        for i in 0..rows {
            self.eval_into(&points[i * n..(i + 1) * n], &mut buf);
            for (k, b) in buf.iter().enumerate() {
                out[(i, k)] = *b;
            }
        }
        out
    }
}

fn hash_id(tag: &str, json: &str) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(json.as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Gaussian RBFs on a lattice. A periodic axis with a single center is
/// dropped from the distance, so the basis is constant along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfDictionary {
    pub domain: BoxDomain,
    pub counts: Vec<usize>,
    /// Width on the axis with the largest spacing.
    pub sigma: f64,
    /// Width per axis (`inf` for dropped axes). All equal to `sigma` for an
    /// isotropic dictionary.
    pub sigmas: Vec<f64>,
    /// Lattice spacing per axis (`inf` for dropped axes).
    pub spacing: Vec<f64>,
    /// Row-major `N x n`.
    pub centers: Vec<f64>,
}

impl RbfDictionary {
    /// Lattice with `counts[a]` centers per axis and `sigma = ratio * d / 3`,
    /// where `d` is the largest spacing. Non-periodic axes place centers on
    /// both faces; periodic axes space them `extent / count` apart starting
    /// at the lower bound. Requires `d_max <= 3 sigma <= 1.5 d_min`.
    pub fn grid(domain: &BoxDomain, counts: &[usize], sigma_ratio: f64) -> Result<Self> {
        Self::build(domain, counts, sigma_ratio, false)
    }

    /// Lattice with a separate width `sigma_a = ratio * d_a / 3` on each axis,
    /// so the spacing rule holds axis by axis.
    pub fn grid_anisotropic(domain: &BoxDomain, counts: &[usize], sigma_ratio: f64) -> Result<Self> {
        Self::build(domain, counts, sigma_ratio, true)
    }

    fn build(domain: &BoxDomain, counts: &[usize], sigma_ratio: f64, anisotropic: bool) -> Result<Self> {
        let n = domain.dim();
        if counts.len() != n {
            return Err(Error::Dimension(format!(
                "{} center counts for a {n}-dimensional domain",
                counts.len()
            )));
        }
        let mut spacing = Vec::with_capacity(n);
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (a, &k) in counts.iter().enumerate() {
            let (lo, ext) = (domain.lower[a], domain.extent(a));
            if domain.is_periodic(a) {
                if k == 0 {
                    return Err(Error::Config(format!("axis {a}: need at least one center")));
                }
                if k == 1 {
                    spacing.push(f64::INFINITY);
                    axes.push(vec![lo + 0.5 * ext]);
                } else {
                    let d = ext / k as f64;
                    spacing.push(d);
                    axes.push((0..k).map(|i| lo + i as f64 * d).collect());
                }
            } else {
                if k < 2 {
                    return Err(Error::Config(format!(
                        "axis {a}: need at least two centers, got {k}"
                    )));
                }
                let d = ext / (k - 1) as f64;
                spacing.push(d);
                axes.push((0..k).map(|i| lo + i as f64 * d).collect());
            }
        }
        let finite: Vec<f64> = spacing.iter().copied().filter(|d| d.is_finite()).collect();
        if finite.is_empty() {
            return Err(Error::Config("dictionary has no active axis".into()));
        }
        let d_max = finite.iter().copied().fold(0.0, f64::max);
        let d_min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma = sigma_ratio * d_max / 3.0;
        let tol = 1e-12 * d_max;
        let rule = if anisotropic {
            sigma_ratio.is_finite() && (1.0 - 1e-12..=1.5 + 1e-12).contains(&sigma_ratio)
        } else {
            sigma_ratio.is_finite() && 3.0 * sigma >= d_max - tol && 3.0 * sigma <= 1.5 * d_min + tol
        };
        if !rule {
            return Err(Error::Config(if anisotropic {
                format!("spacing rule violated: sigma_ratio {sigma_ratio} outside [1, 1.5]")
            } else {
                format!(
                    "spacing rule violated: need {d_max:.4} <= 3 sigma = {:.4} <= {:.4}",
                    3.0 * sigma,
                    1.5 * d_min
                )
            }));
        }

        let total: usize = counts.iter().product();
        let mut centers = Vec::with_capacity(total * n);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            for a in 0..n {
                centers.push(axes[a][idx[a]]);
            }
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let sigmas = spacing
            .iter()
            .map(|&d| match (d.is_finite(), anisotropic) {
                (false, _) => f64::INFINITY,
                (true, true) => sigma_ratio * d / 3.0,
                (true, false) => sigma,
            })
            .collect();
        Ok(Self {
            domain: domain.clone(),
            counts: counts.to_vec(),
            sigma,
            sigmas,
            spacing,
            centers,
        })
    }

    /// Largest finite lattice spacing.
    pub fn max_spacing(&self) -> f64 {
        self.spacing
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    fn active(&self, a: usize) -> bool {
        self.spacing[a].is_finite()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

impl Dictionary for RbfDictionary {
    fn len(&self) -> usize {
        self.centers.len() / self.domain.dim()
    }

    fn state_dim(&self) -> usize {
        self.domain.dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.domain.dim();
        let inv: Vec<f64> = self.sigmas.iter().map(|s| 0.5 / (s * s)).collect();
        for (k, o) in out.iter_mut().enumerate() {
            let c = &self.centers[k * n..(k + 1) * n];
            let mut r2 = 0.0;
            for a in 0..n {
                if self.active(a) {
                    let d = self.domain.axis_diff(a, x[a], c[a]);
                    r2 += d * d * inv[a];
                }
            }
            *o = (-r2).exp();
        }
    }

    fn is_positive(&self) -> bool {
        true
    }

    fn id(&self) -> String {
        hash_id("rbf", &serde_json::to_string(self).expect("serializable"))
    }

    fn center(&self, k: usize) -> Option<Vec<f64>> {
        let n = self.domain.dim();
        Some(self.centers[k * n..(k + 1) * n].to_vec())
    }
}

/// Products of coordinate powers, `prod_a x_a^{e_a}`. Test dictionary for
/// operator fits on analytically solvable systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialDictionary {
    pub dim: usize,
    pub exponents: Vec<Vec<u32>>,
}

impl MonomialDictionary {
    /// `{x, x^2, ..., x^degree}` in one dimension.
    pub fn univariate(degree: u32) -> Self {
        Self {
            dim: 1,
            exponents: (1..=degree).map(|e| vec![e]).collect(),
        }
    }
}

impl Dictionary for MonomialDictionary {
    fn len(&self) -> usize {
        self.exponents.len()
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().zip(x).map(|(&p, xi)| xi.powi(p as i32)).product();
        }
    }

    fn is_positive(&self) -> bool {
        false
    }

    fn id(&self) -> String {
        hash_id("monomial", &serde_json::to_string(self).expect("serializable"))
    }
}

/// Midpoint-rule nodes over a box with an excluded region removed.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub dim: usize,
    pub counts: Vec<usize>,
    /// Row-major node coordinates.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub excluded: Option<Region>,
}

impl QuadratureGrid {
    pub fn midpoint(domain: &BoxDomain, counts: &[usize], excluded: Option<&Region>) -> Result<Self> {
        let n = domain.dim();
        if counts.len() != n || counts.contains(&0) {
            return Err(Error::Config(format!("bad quadrature counts {counts:?}")));
        }
        let h: Vec<f64> = (0..n).map(|a| domain.extent(a) / counts[a] as f64).collect();
        let w: f64 = h.iter().product();
        let total: usize = counts.iter().product();
        let mut nodes = Vec::with_capacity(total * n);
        let mut idx = vec![0usize; n];
        let mut point = vec![0.0; n];
        for _ in 0..total {
            for a in 0..n {
                point[a] = domain.lower[a] + (idx[a] as f64 + 0.5) * h[a];
            }
            if !excluded.is_some_and(|r| r.contains(&point)) {
                nodes.extend_from_slice(&point);
            }
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let len = nodes.len() / n;
        if len == 0 {
            return Err(Error::Config("quadrature grid is empty after exclusion".into()));
        }
        Ok(Self {
            dim: n,
            counts: counts.to_vec(),
            nodes,
            weights: vec![w; len],
            excluded: excluded.cloned(),
        })
    }

    /// `per_spacing` nodes per lattice spacing on each active axis, and
    /// `4 * per_spacing` nodes on dropped periodic axes.
    pub fn for_dictionary(
        dict: &RbfDictionary,
        per_spacing: usize,
        excluded: Option<&Region>,
    ) -> Result<Self> {
        let counts: Vec<usize> = (0..dict.domain.dim())
            .map(|a| {
                let d = dict.spacing[a];
                if d.is_finite() {
                    ((per_spacing as f64) * dict.domain.extent(a) / d).round().max(1.0) as usize
                } else {
                    4 * per_spacing
                }
            })
            .collect();
        Self::midpoint(&dict.domain, &counts, excluded)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature sum of `f` over the nodes.
    pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> f64 {
        chunked_reduce(
            self.len(),
            |r| r.map(|i| self.weights[i] * f(self.node(i))).sum::<f64>(),
            |a, b| a + b,
        )
        .unwrap_or(0.0)
    }
}

/// `sum_i weight(x_i) Psi(x_i) w_i` over the quadrature nodes.
pub fn weighted_integral<D, W>(dict: &D, grid: &QuadratureGrid, weight: W) -> Vec<f64>
where
    D: Dictionary + ?Sized,
    W: Fn(&[f64]) -> f64 + Sync,
{
    let n = dict.len();
    chunked_reduce(
        grid.len(),
        |r| {
            let mut acc = vec![0.0; n];
            let mut buf = vec![0.0; n];
            for i in r {
                let x = grid.node(i);
                let s = weight(x) * grid.weights[i];
                if s != 0.0 {
                    dict.eval_into(x, &mut buf);
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += s * b;
                    }
                }
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        },
    )
    .unwrap_or_else(|| vec![0.0; n])
}

/// What a coefficient vector encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    /// Occupation density `rho` (`v`).
    Rho,
    /// Density-weighted control `rho_bar_j` (`w_j`), zero based.
    RhoBar(usize),
    /// Slack `Gamma_j` (`r_j`), zero based.
    Slack(usize),
    /// Initial density `h0` (`m`).
    InitialDensity,
    /// Moments `int psi_i h0` (`mu`).
    InitialMoments,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Rho => write!(f, "v"),
            Field::RhoBar(j) => write!(f, "w{}", j + 1),
            Field::Slack(j) => write!(f, "r{}", j + 1),
            Field::InitialDensity => write!(f, "m"),
            Field::InitialMoments => write!(f, "mu"),
        }
    }
}

impl std::str::FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let idx = |t: &str| t.parse::<usize>().ok().filter(|&j| j >= 1).map(|j| j - 1);
        match s {
            "v" => Ok(Field::Rho),
            "m" => Ok(Field::InitialDensity),
            "mu" => Ok(Field::InitialMoments),
            _ => s
                .strip_prefix('w')
                .and_then(idx)
                .map(Field::RhoBar)
                .or_else(|| s.strip_prefix('r').and_then(idx).map(Field::Slack))
                .ok_or_else(|| Error::Config(format!("unknown coefficient field '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisCoefficients {
    pub values: Vec<f64>,
    pub represents: Field,
}

impl BasisCoefficients {
    pub fn new(values: Vec<f64>, represents: Field) -> Self {
        Self { values, represents }
    }

    /// `Psi(x)^T c`.
    pub fn evaluate<D: Dictionary + ?Sized>(&self, dict: &D, x: &[f64]) -> f64 {
        dict.eval(x).iter().zip(&self.values).map(|(a, b)| a * b).sum()
    }

    /// One-column CSV whose header names the field (`v`, `w1`, `r2`, `m`).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        io::write_csv(
            path,
            &[self.represents.to_string()],
            self.values.iter().map(|v| vec![*v]),
        )
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let (header, rows) = io::read_csv(path, "coefficient csv")?;
        if header.len() != 1 {
            return Err(Error::Parse {
                what: "coefficient csv",
                line: 1,
                message: format!("expected one column, got {}", header.len()),
            });
        }
        let represents = header[0].parse()?;
        let values: Vec<f64> = rows.into_iter().map(|r| r[0]).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                what: "coefficient csv",
                line: i + 2,
                message: "non-finite coefficient".into(),
            });
        }
        Ok(Self { values, represents })
    }
}

/// Least-squares fit of `h` on the grid:
/// `(G + lambda I) m = sum_i w_i h(x_i) Psi(x_i)` with
/// `G = sum_i w_i Psi(x_i) Psi(x_i)^T` and `lambda = 1e-8 tr(G) / N`.
pub fn project_density<D, H>(dict: &D, grid: &QuadratureGrid, h: H) -> Result<BasisCoefficients>
where
    D: Dictionary + ?Sized,
    H: Fn(&[f64]) -> f64 + Sync,
{
    let n = dict.len();
    let (gram, rhs) = chunked_reduce(
        grid.len(),
        |r| {
            let rows = r.len();
            let pts = &grid.nodes[r.start * grid.dim..r.end * grid.dim];
            let phi = dict.eval_rows(pts);
            let mut weighted = phi.clone();
            let mut rhs = DVector::zeros(n);
            for (li, i) in r.enumerate() {
                let w = grid.weights[i];
                weighted.row_mut(li).scale_mut(w);
                let hw = h(grid.node(i)) * w;
                if hw != 0.0 {
                    rhs += phi.row(li).transpose() * hw;
                }
            }
            debug_assert_eq!(phi.nrows(), rows);
            (phi.tr_mul(&weighted), rhs)
        },
        |(g1, r1), (g2, r2)| (g1 + g2, r1 + r2),
    )
    .ok_or_else(|| Error::Projection {
        message: "empty quadrature grid".into(),
        condition: f64::INFINITY,
    })?;
    if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Projection {
            message: format!("h is not finite against basis member {i}"),
            condition: f64::NAN,
        });
    }
    let lambda = 1e-8 * gram.trace() / n as f64;
    let mut reg = gram.clone();
    for k in 0..n {
        reg[(k, k)] += lambda;
    }
    let condition = || {
        let ev = reg.clone().symmetric_eigenvalues();
        let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    let chol = reg.clone().cholesky().ok_or_else(|| Error::Projection {
        message: "regularized Gram matrix is not positive definite".into(),
        condition: condition(),
    })?;
    let m = chol.solve(&rhs);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Projection {
            message: "solution is not finite".into(),
            condition: condition(),
        });
    }
    Ok(BasisCoefficients::new(m.as_slice().to_vec(), Field::InitialDensity))
}

/// Truncated isotropic Gaussian on the planar coordinates, zero outside a
/// disk, scaled to integrate to one over the full state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDensity {
    pub center: [f64; 2],
    pub radius: f64,
    pub sigma: f64,
    pub dims: [usize; 2],
    /// Volume of the non-planar axes (for example `2 pi` for a heading).
    pub transverse_volume: f64,
}

impl InitialDensity {
    /// `sigma = radius / 2`, centered at `center`.
    pub fn truncated_gaussian(center: [f64; 2], radius: f64, domain: &BoxDomain) -> Self {
        Self::with_dims(center, radius, [0, 1], domain)
    }

    pub fn with_dims(center: [f64; 2], radius: f64, dims: [usize; 2], domain: &BoxDomain) -> Self {
        let transverse_volume = (0..domain.dim())
            .filter(|a| !dims.contains(a))
            .map(|a| domain.extent(a))
            .product();
        Self {
            center,
            radius,
            sigma: radius / 2.0,
            dims,
            transverse_volume,
        }
    }

    /// Unnormalized profile `exp(-r^2 / (2 sigma^2))` inside the disk.
    pub fn profile(&self, x: &[f64]) -> f64 {
        let dx = x[self.dims[0]] - self.center[0];
        let dy = x[self.dims[1]] - self.center[1];
        let r2 = dx * dx + dy * dy;
        if r2 <= self.radius * self.radius {
            (-r2 / (2.0 * self.sigma * self.sigma)).exp()
        } else {
            0.0
        }
    }

    /// Exact integral of the profile over the disk, times the transverse volume.
    pub fn mass_of_profile(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        2.0 * PI * s2 * (1.0 - (-self.radius * self.radius / (2.0 * s2)).exp()) * self.transverse_volume
    }

    /// Normalized density value.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.profile(x) / self.mass_of_profile()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_reduce_order_is_fixed() {
        let v: Vec<f64> = (0..7).map(|i| 0.1 * i as f64).collect();
        let s = pairwise_reduce(v, |a, b| a + b).unwrap();
        let expect: f64 = ((0.0 + 0.1) + (0.2 + 0.30000000000000004)) + ((0.4 + 0.5) + 0.6000000000000001);
        assert_eq!(s.to_bits(), expect.to_bits());
        assert_eq!(pairwise_reduce(Vec::<f64>::new(), |a, b| a + b), None);
    }

    #[test]
    fn field_names_round_trip() {
        for f in [Field::Rho, Field::RhoBar(1), Field::Slack(0), Field::InitialDensity, Field::InitialMoments] {
            assert_eq!(f.to_string().parse::<Field>().unwrap(), f);
        }
        assert!("w0".parse::<Field>().is_err());
        assert!("x".parse::<Field>().is_err());
    }

    #[test]
    fn lattice_order_is_last_axis_fastest() {
        let d = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let dict = RbfDictionary::grid(&d, &[2, 3], 1.2).unwrap();
        assert_eq!(dict.center(1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(dict.center(3).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn single_periodic_center_drops_axis() {
        let d = BoxDomain::planar_with_heading((0.0, 1.0), (0.0, 1.0));
        let dict = RbfDictionary::grid(&d, &[2, 2, 1], 1.2).unwrap();
        let a = dict.eval(&[0.3, 0.4, -3.0]);
        let b = dict.eval(&[0.3, 0.4, 2.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn initial_density_has_unit_mass() {
        let d = BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let h = InitialDensity::truncated_gaussian([0.0, 0.0], 1.0, &d);
        let g = QuadratureGrid::midpoint(&d, &[400, 400], None).unwrap();
        let mass = g.integrate(|x| h.density(x));
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }
}
