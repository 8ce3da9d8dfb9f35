//! Empirical and population lagged (cross-)covariance operators of the
//! stacked process `X_k^[L] = (X_k, ..., X_{k-L+1})`.
//!
//! Lag convention: `C^h = C_{X_0, X_h} = E[X_0 ⊗ X_h]`, i.e. the matrix
//! `E[X_h X_0ᵀ]`, and `C^{-h} = (C^h)*`. Block `(a, b)` (0-based) of the
//! stacked covariance is `C^{b-a}`; block `j` of the lag-1 cross-covariance
//! `D` is `C^{j+1}`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::{psd_eigen, EigenSystem};
use crate::error::{HinvError, Result};
use crate::io;
use crate::sim::{ModelKind, ModelSpec, SamplePath};
use crate::space::{BlockOp, LinearOp, Operator};

pub use crate::eigen::{eigen_gap_stats, GapStats};

/// Columns `X_k^[L]` for `k = first..=last` (1-based time indices).
fn stacked_columns(s: &SamplePath, l: usize, first: usize, last: usize) -> DMatrix<f64> {
    let d = s.space().dim();
    let data = s.data();
    let count = last + 1 - first;
    let mut z = DMatrix::zeros(l * d, count);
    for (c, k) in (first..=last).enumerate() {
        for b in 0..l {
            z.view_mut((b * d, c), (d, 1)).copy_from(&data.column(k - 1 - b));
        }
    }
    z
}

/// `Ĉ_{X^[L]} = (N−L+1)^{-1} Σ_{k=L}^{N} X_k^[L] ⊗ X_k^[L]`.
pub fn emp_cov_stacked(s: &SamplePath, l: usize) -> Result<BlockOp> {
    let n = s.len();
    if l == 0 || l > n {
        return Err(HinvError::OutOfRange { what: "L", value: l, min: 1, max: n });
    }
    let z = stacked_columns(s, l, l, n);
    let c = (&z * z.transpose()) / (n - l + 1) as f64;
    BlockOp::from_matrix(s.space(), l, l, c)
}

/// `D̂ = (N−L)^{-1} Σ_{k=L}^{N−1} X_k^[L] ⊗ X_{k+1}`, a `1 x L` block row.
pub fn emp_crosscov_lag1(s: &SamplePath, l: usize) -> Result<BlockOp> {
    let n = s.len();
    if l == 0 || l >= n {
        return Err(HinvError::OutOfRange { what: "L", value: l, min: 1, max: n.saturating_sub(1) });
    }
    let z = stacked_columns(s, l, l, n - 1);
    let y = s.data().columns(l, n - l);
    let dmat = (y * z.transpose()) / (n - l) as f64;
    BlockOp::from_matrix(s.space(), 1, l, dmat)
}

/// Empirical `Ĉ^h`: `(N−h)^{-1} Σ_{k=1}^{N−h} X_k ⊗ X_{k+h}` for `h ≥ 0` and
/// `(Ĉ^{|h|})*` for `h < 0`.
pub fn emp_lag_cov(s: &SamplePath, h: isize) -> Result<LinearOp> {
    let n = s.len();
    let lag = h.unsigned_abs();
    if lag >= n {
        return Err(HinvError::OutOfRange { what: "|h|", value: lag, min: 0, max: n - 1 });
    }
    let x0 = s.data().columns(0, n - lag);
    let xh = s.data().columns(lag, n - lag);
    let c = LinearOp::new(s.space(), (xh * x0.transpose()) / (n - lag) as f64)?;
    Ok(if h < 0 { c.adjoint() } else { c })
}

/// Empirical stacked covariance, lag-1 cross-covariance and the eigen
/// decomposition of the former.
#[derive(Clone, Debug)]
pub struct CovEstimate {
    pub c_stacked: BlockOp,
    pub d_cross: BlockOp,
    pub l: usize,
    pub n: usize,
    pub centered: bool,
    pub eigen: EigenSystem,
}

#[derive(Serialize, Deserialize)]
struct CovMeta {
    l: usize,
    n: usize,
    centered: bool,
    clamped_mass: f64,
    eigenvalues: Vec<f64>,
}

impl CovEstimate {
    /// Estimates from `s`, subtracting the sample mean first when `center` is set.
    pub fn from_sample(s: &SamplePath, l: usize, center: bool) -> Result<Self> {
        let owned;
        let s = if center {
            owned = s.centered();
            &owned
        } else {
            s
        };
        let c_stacked = emp_cov_stacked(s, l)?;
        let d_cross = emp_crosscov_lag1(s, l)?;
        let eigen = psd_eigen(&c_stacked, c_stacked.matrix().nrows())?;
        Ok(Self { c_stacked, d_cross, l, n: s.len(), centered: center, eigen })
    }

    /// Writes `c_stacked.bin`, `d_cross.bin` and `cov.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::write_matrix_bin(dir.join("c_stacked.bin"), self.c_stacked.matrix())?;
        io::write_matrix_bin(dir.join("d_cross.bin"), self.d_cross.matrix())?;
        let meta = CovMeta {
            l: self.l,
            n: self.n,
            centered: self.centered,
            clamped_mass: self.eigen.clamped_mass(),
            eigenvalues: self.eigen.values().to_vec(),
        };
        std::fs::write(dir.join("cov.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// Population operators computed from the causal representation.
#[derive(Clone, Debug)]
pub struct PopulationOperators {
    pub c_stacked: BlockOp,
    pub d_cross: BlockOp,
    /// `C^0, C^1, ..., C^L`.
    pub lag_covs: Vec<LinearOp>,
    /// Number of causal operators kept (including `φ_0 = I`).
    pub truncation: usize,
}

/// Squared HS mass below which the causal series is cut off.
const TAIL_MASS: f64 = 1e-26;
const MAX_TERMS: usize = 1_000_000;

/// `φ_0 = I, φ_1, ...` of the causal representation `X_k = Σ φ_i(ε_{k−i})`,
/// truncated once a window of `max(p, 1)` consecutive terms carries squared
/// HS mass below `1e-26`.
pub fn causal_operators(model: &ModelSpec) -> Result<Vec<LinearOp>> {
    model.validate()?;
    let space = model.space();
    let mut phis = vec![LinearOp::identity(space)];
    match model.kind() {
        ModelKind::CausalLp { .. } => phis.extend(model.lp_ops().iter().cloned()),
        ModelKind::Fma { .. } => phis.extend(model.ma_ops().iter().cloned()),
        ModelKind::Far { .. } | ModelKind::Farma { .. } => {
            let (ar, ma) = (model.ar_ops(), model.ma_ops());
            let window = ar.len().max(1);
            let mut tail = Vec::new();
            for i in 1.. {
                if i > MAX_TERMS {
                    return Err(HinvError::NonConvergent(MAX_TERMS));
                }
                let mut next = ma.get(i - 1).cloned().unwrap_or_else(|| LinearOp::zeros(space));
                for (k, a) in ar.iter().enumerate().take(i) {
                    next = &next + &(a * &phis[i - 1 - k]);
                }
                tail.push(next.hs_norm().powi(2));
                phis.push(next);
                if i > ma.len() && tail.len() >= window {
                    let mass: f64 = tail[tail.len() - window..].iter().sum();
                    if mass < TAIL_MASS {
                        break;
                    }
                }
            }
        }
    }
    Ok(phis)
}

/// Population `C_{X^[L]}` and `D_{X^[L],X}` of a model.
pub fn population_operators(model: &ModelSpec, l: usize) -> Result<PopulationOperators> {
    if l == 0 {
        return Err(HinvError::InvalidArgument("L must be >= 1".into()));
    }
    let space = model.space();
    let phis = causal_operators(model)?;
    let ce = model.noise().covariance();
    let right: Vec<DMatrix<f64>> = phis.iter().map(|p| ce.matrix() * p.matrix().transpose()).collect();
    let lag_covs: Vec<LinearOp> = (0..=l)
        .map(|h| {
            let mut acc = DMatrix::zeros(space.dim(), space.dim());
            for i in 0..phis.len().saturating_sub(h) {
                acc += phis[i + h].matrix() * &right[i];
            }
            LinearOp::new(space, acc)
        })
        .collect::<Result<_>>()?;

    let mut c = BlockOp::zeros(space, l, l);
    for a in 0..l {
        for b in 0..l {
            let blk = if b >= a { lag_covs[b - a].clone() } else { lag_covs[a - b].adjoint() };
            c.set_block(a, b, &blk);
        }
    }
    let mut d = BlockOp::zeros(space, 1, l);
    for j in 0..l {
        d.set_block(0, j, &lag_covs[j + 1]);
    }
    Ok(PopulationOperators { c_stacked: c, d_cross: d, lag_covs, truncation: phis.len() })
}
