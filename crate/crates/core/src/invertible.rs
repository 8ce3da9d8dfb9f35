//! Tikhonov-regularized Yule–Walker estimation of the operators of the
//! inverted representation `X_k = Σ_{j≥1} ψ_j(X_{k−j}) + ε_k`, and the
//! recursion back to the causal operators `φ_i`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cov::{emp_cov_stacked, emp_crosscov_lag1};
use crate::eigen::{
    eigen_gap_stats, psd_eigen, ridge_resolvent_eigen, spectral_projector, trace_fraction_rank, EigenSystem,
};
use crate::error::{HinvError, Result};
use crate::io;
use crate::sim::{ModelKind, ModelSpec, SamplePath};
use crate::space::{BlockOp, LinearOp, Operator};

/// Minimum sample length for data-driven tuning.
pub const MIN_DEFAULT_N: usize = 20;
/// Share of the trace captured by the default spectral truncation.
pub const TRACE_FRACTION: f64 = 0.95;
/// Smallest retained eigenvalue relative to the leading one.
pub const EIGEN_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningPlan {
    /// Stacking depth.
    pub l: usize,
    /// Spectral truncation.
    pub k: usize,
    /// Tikhonov parameter.
    pub theta: f64,
    pub schedule_id: String,
}

impl TuningPlan {
    pub fn new(l: usize, k: usize, theta: f64) -> Self {
        Self { l, k, theta, schedule_id: "manual".into() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.l == 0 {
            return Err(HinvError::InvalidArgument("L must be >= 1".into()));
        }
        let max = self.l * dim;
        if self.k == 0 || self.k > max {
            return Err(HinvError::OutOfRange { what: "K", value: self.k, min: 1, max });
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(HinvError::InvalidArgument(format!("theta must be positive, got {}", self.theta)));
        }
        Ok(())
    }

    pub fn with_l(&self, l: usize) -> Self {
        Self { l, ..self.clone() }
    }
}

/// User-supplied values replacing individual defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TuningOverrides {
    pub l: Option<usize>,
    pub k: Option<usize>,
    pub theta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiDiagnostics {
    pub lambda_k: f64,
    /// Maximal reciprocal gap among the leading `K` eigenvalues; `None` when degenerate.
    pub big_lambda_k: Option<f64>,
    pub clamped_mass: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct PsiEstimate {
    /// `1 x L` block row `Ψ̂_L`.
    pub psi_l: BlockOp,
    /// Blocks of `Ψ̂_L`.
    pub psi: Vec<LinearOp>,
    pub tuning: TuningPlan,
    pub eigen: EigenSystem,
    pub diagnostics: PsiDiagnostics,
}

#[derive(Serialize)]
struct PsiMeta<'a> {
    tuning: &'a TuningPlan,
    diagnostics: &'a PsiDiagnostics,
    eigenvalues: &'a [f64],
    hs_norms: Vec<f64>,
}

impl PsiEstimate {
    /// Writes `psi_L.bin` and `psi.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::write_matrix_bin(dir.join("psi_L.bin"), self.psi_l.matrix())?;
        let meta = PsiMeta {
            tuning: &self.tuning,
            diagnostics: &self.diagnostics,
            eigenvalues: self.eigen.values(),
            hs_norms: self.psi.iter().map(Operator::hs_norm).collect(),
        };
        std::fs::write(dir.join("psi.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// Smallest `L ≥ 1` with `L⁴ ≥ N`.
pub fn default_lag(n: usize) -> usize {
    let mut l = (n as f64).powf(0.25).ceil().max(1.0) as usize;
    while l > 1 && (l - 1).pow(4) >= n {
        l -= 1;
    }
    while l.pow(4) < n {
        l += 1;
    }
    l
}

/// `K` capturing [`TRACE_FRACTION`] of the trace (subject to [`EIGEN_FLOOR`])
/// and `θ = λ_K N^{-1/2}`, falling back to `N^{-1/2}` for a null spectrum.
pub fn spectral_defaults(n: usize, eigen: &EigenSystem) -> (usize, f64) {
    let k = trace_fraction_rank(eigen.values(), TRACE_FRACTION, EIGEN_FLOOR).min(eigen.len());
    let lambda = eigen.values()[k - 1];
    let scale = (n as f64).sqrt().recip();
    let theta = if lambda > 0.0 { lambda * scale } else { scale };
    (k, theta)
}

/// Default schedule for a sample of length `n` and the decomposition of its
/// stacked covariance.
pub fn default_tuning(n: usize, dim: usize, eigen: &EigenSystem) -> Result<TuningPlan> {
    if n < MIN_DEFAULT_N {
        return Err(HinvError::TooShort { required: MIN_DEFAULT_N, found: n });
    }
    let l = default_lag(n);
    let (k, theta) = spectral_defaults(n, eigen);
    Ok(TuningPlan { l, k: k.min(l * dim), theta, schedule_id: "default".into() })
}

fn check_sample(s: &SamplePath, tuning: &TuningPlan) -> Result<()> {
    tuning.validate(s.space().dim())?;
    if s.len() <= tuning.l {
        return Err(HinvError::TooShort { required: tuning.l + 1, found: s.len() });
    }
    Ok(())
}

/// `Ψ̂_L = D̂ (Ĉ + θI)^{-1} Π_K` from the empirical operators of `s`.
pub fn fit_psi(s: &SamplePath, tuning: &TuningPlan) -> Result<PsiEstimate> {
    check_sample(s, tuning)?;
    let c = emp_cov_stacked(s, tuning.l)?;
    let d = emp_crosscov_lag1(s, tuning.l)?;
    fit_psi_operators(&c, &d, tuning)
}

/// As [`fit_psi`], with the stacked covariance and cross-covariance supplied
/// directly (e.g. population operators).
pub fn fit_psi_operators(c: &BlockOp, d: &BlockOp, tuning: &TuningPlan) -> Result<PsiEstimate> {
    let eigen = psd_eigen(c, tuning.k)?;
    fit_psi_eigen(d, eigen, tuning)
}

/// As [`fit_psi_operators`], with the decomposition of the stacked
/// covariance supplied.
pub fn fit_psi_eigen(d: &BlockOp, eigen: EigenSystem, tuning: &TuningPlan) -> Result<PsiEstimate> {
    tuning.validate(eigen.space().dim())?;
    if eigen.blocks() != tuning.l || d.rows() != 1 || d.cols() != tuning.l {
        return Err(HinvError::DimensionMismatch { expected: tuning.l, found: eigen.blocks() });
    }
    eigen.space().check(&d.space())?;
    let resolvent = ridge_resolvent_eigen(&eigen, tuning.theta)?;
    let projector = spectral_projector(&eigen, tuning.k)?;
    let psi_l = d * &(&resolvent * &projector);
    let psi = psi_l.row_blocks(0);
    let gaps = eigen_gap_stats(&eigen, tuning.k)?;
    let diagnostics = PsiDiagnostics {
        lambda_k: eigen.values()[tuning.k - 1],
        big_lambda_k: gaps.lambda_k,
        clamped_mass: eigen.clamped_mass(),
        degenerate: gaps.degenerate,
    };
    Ok(PsiEstimate { psi_l, psi, tuning: tuning.clone(), eigen, diagnostics })
}

/// Fits `Ψ̂_L` with defaults for every unset override. `min_l` raises the
/// default stacking depth.
pub fn fit_psi_auto(s: &SamplePath, overrides: &TuningOverrides, min_l: usize) -> Result<PsiEstimate> {
    let n = s.len();
    let all_set = overrides.l.is_some() && overrides.k.is_some() && overrides.theta.is_some();
    if !all_set && n < MIN_DEFAULT_N {
        return Err(HinvError::TooShort { required: MIN_DEFAULT_N, found: n });
    }
    let l = overrides.l.unwrap_or_else(|| default_lag(n).max(min_l));
    if n <= l {
        return Err(HinvError::TooShort { required: l + 1, found: n });
    }
    let c = emp_cov_stacked(s, l)?;
    let d = emp_crosscov_lag1(s, l)?;
    let eigen = psd_eigen(&c, c.matrix().nrows())?;
    let (k, theta) = spectral_defaults(n, &eigen);
    let schedule_id = if *overrides == TuningOverrides::default() { "default" } else { "default+overrides" };
    let tuning = TuningPlan {
        l,
        k: overrides.k.unwrap_or(k),
        theta: overrides.theta.unwrap_or(theta),
        schedule_id: schedule_id.into(),
    };
    fit_psi_eigen(&d, eigen, &tuning)
}

/// Exact `ψ_1, ..., ψ_{j_max}` of a model.
///
/// fARMA: `ψ_i = α_i + β_i − Σ_{j=1}^{min(i−1,q)} β_j ψ_{i−j}`. Causal linear
/// processes: `ψ_i = φ_i − Σ_{j=1}^{i−1} ψ_j φ_{i−j}`.
pub fn population_psi(model: &ModelSpec, j_max: usize) -> Result<Vec<LinearOp>> {
    model.validate()?;
    let space = model.space();
    let zero = LinearOp::zeros(space);
    let mut psi: Vec<LinearOp> = Vec::with_capacity(j_max);
    match model.kind() {
        ModelKind::CausalLp { .. } => {
            let phi = model.lp_ops();
            let bound: f64 = phi.iter().map(|p| p.norms().map(|n| n.op)).sum::<Result<f64>>()?;
            if bound >= 1.0 {
                return Err(HinvError::Stationarity { what: "sum of linear-process operator norms", value: bound });
            }
            for i in 1..=j_max {
                let mut next = phi.get(i - 1).cloned().unwrap_or_else(|| zero.clone());
                for j in 1..i {
                    if let Some(p) = phi.get(i - j - 1) {
                        next = &next - &(&psi[j - 1] * p);
                    }
                }
                psi.push(next);
            }
        }
        _ => {
            let (ar, ma) = (model.ar_ops(), model.ma_ops());
            for i in 1..=j_max {
                let mut next = ar.get(i - 1).cloned().unwrap_or_else(|| zero.clone());
                if let Some(b) = ma.get(i - 1) {
                    next = &next + b;
                }
                for (j, b) in ma.iter().enumerate().take(i - 1) {
                    next = &next - &(b * &psi[i - j - 2]);
                }
                psi.push(next);
            }
        }
    }
    Ok(psi)
}

/// `φ̂_0 = I`, `φ̂_i = Σ_{j=1}^{i} ψ̂_j φ̂_{i−j}` for `i ≤ i_max`; `ψ̂_j = 0`
/// beyond the supplied list. Returns `φ̂_0, ..., φ̂_{i_max}`.
pub fn phi_from_psi(psi: &[LinearOp], i_max: usize) -> Result<Vec<LinearOp>> {
    let space = psi
        .first()
        .map(|p| p.space())
        .ok_or_else(|| HinvError::InvalidArgument("empty psi list".into()))?;
    for p in psi {
        space.check(&p.space())?;
    }
    let mut phi = vec![LinearOp::identity(space)];
    for i in 1..=i_max {
        let mut next = LinearOp::zeros(space);
        for (j, p) in psi.iter().enumerate().take(i) {
            next = &next + &(p * &phi[i - j - 1]);
        }
        phi.push(next);
    }
    Ok(phi)
}
