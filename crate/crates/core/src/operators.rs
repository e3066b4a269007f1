//! EDMD fits, row normalization, transfer-operator matrices and generator
//! differences.
//!
//! Coefficient vectors are columns. `U` acts on observables, `P = U^T` on
//! density coefficients, and generators are `(P - I) / dt`.
//!
//! [`BalanceForm::Galerkin`] instead stores `K^T` with
//! `K = vol (A - G) / dt`, the generator tested against the dictionary.
//! Its balance rows take moments `int psi_i h0` on the right-hand side.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{chunked_reduce, Dictionary};
use crate::dynamics::{generate_snapshots, ControlAffineSystem, InputLabel, SnapshotDataset};
use crate::error::{Error, Result};
use crate::io;

/// Singular values below `SVD_CUTOFF * sigma_max` are treated as zero.
pub const SVD_CUTOFF: f64 = 1e-8;
/// Rows whose sum is below this in magnitude cannot be normalized.
pub const ROW_SUM_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanMatrix {
    pub u: DMatrix<f64>,
    pub dict_id: String,
    pub dt: f64,
    pub normalized: bool,
}

/// Summary of an EDMD fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub samples: usize,
    pub gram_sigma_max: f64,
    pub gram_sigma_min: f64,
    pub rank: usize,
}

impl FitStats {
    pub fn condition(&self) -> f64 {
        if self.gram_sigma_min > 0.0 {
            self.gram_sigma_max / self.gram_sigma_min
        } else {
            f64::INFINITY
        }
    }
}

/// `G = (1/M) sum Psi(x) Psi(x)^T`, `A = (1/M) sum Psi(x) Psi(y)^T`,
/// `U = G^+ A`.
pub fn edmd_fit<D: Dictionary + ?Sized>(dict: &D, data: &SnapshotDataset) -> Result<KoopmanMatrix> {
    edmd_fit_with_stats(dict, data).map(|(k, _)| k)
}

pub fn edmd_fit_with_stats<D: Dictionary + ?Sized>(
    dict: &D,
    data: &SnapshotDataset,
) -> Result<(KoopmanMatrix, FitStats)> {
    let (g, a) = data_moments(dict, data)?;
    let m = data.len();
    let (g_pinv, stats) = symmetric_pinv(g);
    let u = g_pinv * a;
    Ok((
        KoopmanMatrix {
            u,
            dict_id: dict.id(),
            dt: data.dt,
            normalized: false,
        },
        FitStats { samples: m, ..stats },
    ))
}

/// Sample averages `(G, A)` over a snapshot set.
pub fn data_moments<D: Dictionary + ?Sized>(
    dict: &D,
    data: &SnapshotDataset,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if data.is_empty() {
        return Err(Error::Fit("no snapshot pairs".into()));
    }
    if data.dim != dict.state_dim() {
        return Err(Error::Dimension(format!(
            "snapshots have dimension {}, dictionary expects {}",
            data.dim,
            dict.state_dim()
        )));
    }
    let m = data.len();
    let dim = data.dim;
    let (g, a) = chunked_reduce(
        m,
        |r| {
            let px = dict.eval_rows(&data.x[r.start * dim..r.end * dim]);
            let py = dict.eval_rows(&data.y[r.start * dim..r.end * dim]);
            (px.tr_mul(&px), px.tr_mul(&py))
        },
        |(g1, a1), (g2, a2)| (g1 + g2, a1 + a2),
    )
    .expect("at least one chunk");
    let scale = 1.0 / m as f64;
    let g = g * scale;
    let a = a * scale;
    if g.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite Gram matrix".into()));
    }
    if g.iter().all(|v| *v == 0.0) {
        return Err(Error::Fit("Gram matrix is identically zero".into()));
    }
    Ok((g, a))
}

/// `K = vol (A - G) / dt`: entry `(k, i)` estimates `int psi_k L psi_i`
/// where `L` is the Koopman generator of the sampled channel.
pub fn galerkin_stiffness<D: Dictionary + ?Sized>(
    dict: &D,
    data: &SnapshotDataset,
    volume: f64,
) -> Result<(DMatrix<f64>, FitStats)> {
    let (g, a) = data_moments(dict, data)?;
    let k = (&a - &g) * (volume / data.dt);
    let (_, stats) = symmetric_pinv(g);
    Ok((k, FitStats { samples: data.len(), ..stats }))
}

/// Pseudoinverse of a symmetric matrix by eigendecomposition, with the
/// relative cutoff applied to eigenvalue magnitudes.
fn symmetric_pinv(g: DMatrix<f64>) -> (DMatrix<f64>, FitStats) {
    let eig = SymmetricEigen::new(g);
    let smax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = SVD_CUTOFF * smax;
    let mut smin = f64::INFINITY;
    let mut rank = 0;
    let inv: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l.abs() > cutoff {
                rank += 1;
                smin = smin.min(l.abs());
                1.0 / l
            } else {
                0.0
            }
        })
        .collect();
    let mut vs = eig.eigenvectors.clone();
    for (j, s) in inv.iter().enumerate() {
        vs.column_mut(j).scale_mut(*s);
    }
    let pinv = vs * eig.eigenvectors.transpose();
    let all_min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    (
        pinv,
        FitStats {
            samples: 0,
            gram_sigma_max: smax,
            gram_sigma_min: all_min,
            rank,
        },
    )
}

/// Diagnostics from row normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// `sum |min(U_ij, 0)| / sum |U_ij|` after normalization.
    pub negative_mass_fraction: f64,
    pub row_sum_min: f64,
    pub row_sum_max: f64,
}

/// Divides every row by its sum. Negative entries are kept and reported.
pub fn nsdmd_star(k: &KoopmanMatrix) -> Result<(KoopmanMatrix, NormalizationReport)> {
    let mut u = k.u.clone();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..u.nrows() {
        let s: f64 = u.row(i).sum();
        if !(s.abs() > ROW_SUM_GUARD) {
            return Err(Error::Normalization {
                row: i,
                center: Vec::new(),
                sum: s,
            });
        }
        lo = lo.min(s);
        hi = hi.max(s);
        u.row_mut(i).unscale_mut(s);
    }
    let (neg, total) = u.iter().fold((0.0, 0.0), |(n, t), v| (n + (-v).max(0.0), t + v.abs()));
    Ok((
        KoopmanMatrix {
            u,
            dict_id: k.dict_id.clone(),
            dt: k.dt,
            normalized: true,
        },
        NormalizationReport {
            negative_mass_fraction: if total > 0.0 { neg / total } else { 0.0 },
            row_sum_min: lo,
            row_sum_max: hi,
        },
    ))
}

/// `P = U^T`. Columns of `P` sum to one when `U` is row normalized.
pub fn pf_from_koopman(k: &KoopmanMatrix) -> DMatrix<f64> {
    k.u.transpose()
}

/// How the density balance is discretized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceForm {
    /// Coefficient-space transfer generators `(P - I)/dt` from normalized
    /// EDMD; the right-hand side is the projection of `h0`.
    #[default]
    Transfer,
    /// Tested generators `K^T` straight from the sample averages; the
    /// right-hand side is the moment vector of `h0`.
    Galerkin,
}

/// `M0` for the drift and `M[i]` for input column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSet {
    pub m0: DMatrix<f64>,
    pub m: Vec<DMatrix<f64>>,
    pub dt: f64,
    pub dict_id: String,
    pub form: BalanceForm,
}

#[derive(Serialize, Deserialize)]
struct GeneratorMeta {
    dt: f64,
    dict_id: String,
    inputs: usize,
    size: usize,
    #[serde(default)]
    form: BalanceForm,
}

impl GeneratorSet {
    pub fn size(&self) -> usize {
        self.m0.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.m.len()
    }

    /// Largest absolute column sum over all generators.
    pub fn max_column_sum(&self) -> f64 {
        std::iter::once(&self.m0)
            .chain(&self.m)
            .flat_map(|g| g.column_iter().map(|c| c.sum().abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// Writes `M0.bin`, `M1.bin`, ... and `generators.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_matrix(&dir.join("M0.bin"), &self.m0)?;
        for (i, m) in self.m.iter().enumerate() {
            io::write_matrix(&dir.join(format!("M{}.bin", i + 1)), m)?;
        }
        io::write_json(
            &dir.join("generators.json"),
            &GeneratorMeta {
                dt: self.dt,
                dict_id: self.dict_id.clone(),
                inputs: self.m.len(),
                size: self.size(),
                form: self.form,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: GeneratorMeta = io::read_json(&dir.join("generators.json"))?;
        let m0 = io::read_matrix(&dir.join("M0.bin"))?;
        let m = (1..=meta.inputs)
            .map(|i| io::read_matrix(&dir.join(format!("M{i}.bin"))))
            .collect::<Result<Vec<_>>>()?;
        for g in std::iter::once(&m0).chain(&m) {
            if g.nrows() != meta.size || g.ncols() != meta.size {
                return Err(Error::Dimension(format!(
                    "generator is {}x{}, metadata says {}",
                    g.nrows(),
                    g.ncols(),
                    meta.size
                )));
            }
        }
        Ok(Self {
            m0,
            m,
            dt: meta.dt,
            dict_id: meta.dict_id,
            form: meta.form,
        })
    }
}

/// Per-channel fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagnostics {
    pub label: String,
    pub fit: FitStats,
    pub normalization: Option<NormalizationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub channels: Vec<ChannelDiagnostics>,
    pub max_column_sum: f64,
}

impl FitDiagnostics {
    pub fn max_negative_mass(&self) -> f64 {
        self.channels
            .iter()
            .filter_map(|c| c.normalization.map(|n| n.negative_mass_fraction))
            .fold(0.0, f64::max)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        for c in &self.channels {
            writeln!(s, "[{}]", c.label).unwrap();
            writeln!(s, "  samples              {}", c.fit.samples).unwrap();
            writeln!(s, "  gram rank            {}", c.fit.rank).unwrap();
            writeln!(s, "  gram condition       {:.6e}", c.fit.condition()).unwrap();
            match &c.normalization {
                Some(n) => {
                    writeln!(s, "  row sums before      [{:.6e}, {:.6e}]", n.row_sum_min, n.row_sum_max)
                        .unwrap();
                    writeln!(s, "  negative mass        {:.6e}", n.negative_mass_fraction).unwrap();
                }
                None => writeln!(s, "  normalization        skipped (dictionary not positive)").unwrap(),
            }
        }
        writeln!(s, "max |column sum|       {:.6e}", self.max_column_sum).unwrap();
        s
    }
}

fn fit_channel<D: Dictionary + ?Sized>(
    sys: &ControlAffineSystem,
    dict: &D,
    label: InputLabel,
    samples: usize,
    dt: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, ChannelDiagnostics)> {
    let data = generate_snapshots(sys, label, samples, dt, seed)?;
    let (k, fit) = edmd_fit_with_stats(dict, &data)?;
    let (k, normalization) = if dict.is_positive() {
        let (k, rep) = nsdmd_star(&k).map_err(|e| match e {
            Error::Normalization { row, sum, .. } => Error::Normalization {
                row,
                center: dict.center(row).unwrap_or_default(),
                sum,
            },
            other => other,
        })?;
        (k, Some(rep))
    } else {
        (k, None)
    };
    Ok((
        pf_from_koopman(&k),
        ChannelDiagnostics {
            label: label.to_string(),
            fit,
            normalization,
        },
    ))
}

/// Fits `P^0` under `u = 0` and `P^i` under `u = e_i`, then
/// `M0 = (P^0 - I)/dt` and `M_i = (P^i - I)/dt - M0`.
///
/// Row normalization is applied only for positive dictionaries; for signed
/// test dictionaries the rows carry no probability mass.
pub fn fit_generators<D: Dictionary + ?Sized>(
    sys: &ControlAffineSystem,
    dict: &D,
    samples: usize,
    dt: f64,
    seed: u64,
) -> Result<(GeneratorSet, FitDiagnostics)> {
    fit_generators_with(sys, dict, samples, dt, seed, BalanceForm::Transfer)
}

/// As [`fit_generators`], choosing the balance form. Galerkin generators
/// are `K0^T` and `K_i^T - K0^T`, with the snapshot sets shared with the
/// transfer fit.
pub fn fit_generators_with<D: Dictionary + ?Sized>(
    sys: &ControlAffineSystem,
    dict: &D,
    samples: usize,
    dt: f64,
    seed: u64,
    form: BalanceForm,
) -> Result<(GeneratorSet, FitDiagnostics)> {
    if dict.state_dim() != sys.state_dim {
        return Err(Error::Dimension(format!(
            "dictionary dimension {} vs system dimension {}",
            dict.state_dim(),
            sys.state_dim
        )));
    }
    if !(dt > 0.0) || samples == 0 {
        return Err(Error::Config(format!(
            "need dt > 0 and at least one sample (dt = {dt}, samples = {samples})"
        )));
    }
    let n = dict.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut channels = Vec::with_capacity(sys.input_dim + 1);

    let volume = sys.domain.volume();
    let channel = |label: InputLabel| -> Result<(DMatrix<f64>, ChannelDiagnostics)> {
        match form {
            BalanceForm::Transfer => {
                let (p, diag) = fit_channel(sys, dict, label, samples, dt, seed)?;
                Ok(((p - &eye) / dt, diag))
            }
            BalanceForm::Galerkin => {
                let data = generate_snapshots(sys, label, samples, dt, seed)?;
                let (k, fit) = galerkin_stiffness(dict, &data, volume)?;
                let diag = ChannelDiagnostics {
                    label: label.to_string(),
                    fit,
                    normalization: None,
                };
                Ok((k.transpose(), diag))
            }
        }
    };

    let label = InputLabel::Zero;
    let (m0, diag) = channel(label).map_err(|e| e.in_channel(label.to_string()))?;
    channels.push(diag);

    let mut m = Vec::with_capacity(sys.input_dim);
    for i in 0..sys.input_dim {
        let label = InputLabel::Unit(i);
        let (gi, diag) = channel(label).map_err(|e| e.in_channel(label.to_string()))?;
        channels.push(diag);
        m.push(gi - &m0);
    }
    let set = GeneratorSet {
        m0,
        m,
        dt,
        dict_id: dict.id(),
        form,
    };
    let max_column_sum = set.max_column_sum();
    Ok((
        set,
        FitDiagnostics {
            channels,
            max_column_sum,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn km(rows: usize, data: &[f64]) -> KoopmanMatrix {
        KoopmanMatrix {
            u: DMatrix::from_row_slice(rows, data.len() / rows, data),
            dict_id: String::new(),
            dt: 0.1,
            normalized: false,
        }
    }

    #[test]
    fn normalizes_rows() {
        let (n, rep) = nsdmd_star(&km(2, &[2.0, 2.0, 1.0, 3.0])).unwrap();
        assert_eq!(n.u, DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75]));
        assert_eq!(rep.negative_mass_fraction, 0.0);
        let p = pf_from_koopman(&n);
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.5, 0.75]));
    }

    #[test]
    fn zero_row_sum_is_rejected() {
        let err = nsdmd_star(&km(2, &[1.0, -1.0, 1.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::Normalization { row: 0, .. }));
    }

    #[test]
    fn negative_mass_is_measured() {
        let (_, rep) = nsdmd_star(&km(1, &[1.5, -0.5])).unwrap();
        assert!((rep.negative_mass_fraction - 0.5 / 2.0).abs() < 1e-15);
    }
}
