//! fAR(p), fMA(q) and fARMA(p,q) estimators built on `ψ̂_j` and `φ̂_i`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigen::{psd_eigen, ridge_resolvent_eigen, spectral_projector, trace_fraction_rank, EigenSystem, GapStats};
use crate::error::{HinvError, Result};
use crate::invertible::{
    default_lag, fit_psi, fit_psi_auto, phi_from_psi, PsiEstimate, TuningOverrides, TuningPlan, EIGEN_FLOOR,
    TRACE_FRACTION,
};
use crate::io;
use crate::sim::SamplePath;
use crate::space::{BlockOp, LinearOp, Operator};

/// `ζ̂_M / ζ̂_1` below which the block-Hankel operator is reported as near-singular.
pub const IDENTIFIABILITY_RATIO: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmaTuning {
    pub base: TuningPlan,
    /// Second-stage spectral truncation; trace-fraction default when unset.
    pub m: Option<usize>,
    /// Second-stage Tikhonov parameter; `ζ̂_M N^{-1/2}` when unset.
    pub gamma: Option<f64>,
}

impl ArmaTuning {
    pub fn new(base: TuningPlan) -> Self {
        Self { base, m: None, gamma: None }
    }

    pub fn with_second_stage(base: TuningPlan, m: usize, gamma: f64) -> Self {
        Self { base, m: Some(m), gamma: Some(gamma) }
    }
}

/// Eigen-analysis and regularization of the second (MA) stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondStage {
    pub m: usize,
    pub gamma: f64,
    /// Eigenvalues of `ψ̂_1ψ̂_1*` or `Π̂Π̂*`.
    pub eigenvalues: Vec<f64>,
    pub gaps: GapStats,
    /// `ζ̂_M / ζ̂_1`.
    pub conditioning: f64,
    pub warning: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ArmaFit {
    pub alpha: Vec<LinearOp>,
    pub beta: Vec<LinearOp>,
    pub psi_source: Option<PsiEstimate>,
    pub pi_hat: Option<BlockOp>,
    pub second_stage: Option<SecondStage>,
}

#[derive(Serialize)]
struct FitMeta<'a> {
    p: usize,
    q: usize,
    tuning: Option<&'a TuningPlan>,
    psi_diagnostics: Option<&'a crate::invertible::PsiDiagnostics>,
    second_stage: Option<&'a SecondStage>,
    alpha_hs: Vec<f64>,
    beta_hs: Vec<f64>,
}

impl ArmaFit {
    /// Writes `alpha_i.{bin,csv}`, `beta_j.{bin,csv}` and `diagnostics.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, ops) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            for (i, op) in ops.iter().enumerate() {
                io::write_matrix_bin(dir.join(format!("{name}_{}.bin", i + 1)), op.matrix())?;
                io::write_matrix_csv(dir.join(format!("{name}_{}.csv", i + 1)), op.matrix())?;
            }
        }
        let meta = FitMeta {
            p: self.alpha.len(),
            q: self.beta.len(),
            tuning: self.psi_source.as_ref().map(|p| &p.tuning),
            psi_diagnostics: self.psi_source.as_ref().map(|p| &p.diagnostics),
            second_stage: self.second_stage.as_ref(),
            alpha_hs: self.alpha.iter().map(Operator::hs_norm).collect(),
            beta_hs: self.beta.iter().map(Operator::hs_norm).collect(),
        };
        std::fs::write(dir.join("diagnostics.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// fAR(p): `α̂_i` are the blocks of `Ψ̂_p`, i.e. [`fit_psi`] with `L = p`.
/// `K` is capped at `p · dim`.
pub fn fit_far(s: &SamplePath, p: usize, tuning: &TuningPlan) -> Result<ArmaFit> {
    if p == 0 {
        return Err(HinvError::InvalidArgument("fAR order must be >= 1".into()));
    }
    let mut plan = tuning.with_l(p);
    plan.k = plan.k.min(p * s.space().dim());
    let psi = fit_psi(s, &plan)?;
    Ok(ArmaFit { alpha: psi.psi.clone(), beta: Vec::new(), psi_source: Some(psi), pi_hat: None, second_stage: None })
}

/// fMA(q): `β̂_j = φ̂_j` computed from the blocks of `Ψ̂_L`.
pub fn fit_fma(s: &SamplePath, q: usize, tuning: &TuningPlan, l_override: Option<usize>) -> Result<ArmaFit> {
    let tuning = l_override.map_or_else(|| tuning.clone(), |l| tuning.with_l(l));
    let psi = fit_psi(s, &tuning)?;
    fma_from_estimate(psi, q)
}

fn fma_from_estimate(psi: PsiEstimate, q: usize) -> Result<ArmaFit> {
    if q == 0 {
        return Err(HinvError::InvalidArgument("fMA order must be >= 1".into()));
    }
    let beta = fma_from_psi(&psi.psi, q)?;
    Ok(ArmaFit { alpha: Vec::new(), beta, psi_source: Some(psi), pi_hat: None, second_stage: None })
}

/// `β̂_1, ..., β̂_q` of an fMA(q) from `ψ̂` components.
pub fn fma_from_psi(psi: &[LinearOp], q: usize) -> Result<Vec<LinearOp>> {
    Ok(phi_from_psi(psi, q)?.split_off(1))
}

/// `(ρ̂_j, f̂_j)` / `(ζ̂_j, ĥ_j)` analysis of a PSD second-stage operator and
/// resolution of `M` and `γ`.
fn second_stage(g: &BlockOp, m: Option<usize>, gamma: Option<f64>, n: usize) -> Result<(EigenSystem, SecondStage)> {
    let es = psd_eigen(g, g.matrix().nrows())?;
    let m = m.unwrap_or_else(|| trace_fraction_rank(es.values(), TRACE_FRACTION, EIGEN_FLOOR));
    if m == 0 || m > es.len() {
        return Err(HinvError::OutOfRange { what: "M", value: m, min: 1, max: es.len() });
    }
    let zeta_m = es.values()[m - 1];
    let gamma = gamma.unwrap_or_else(|| {
        let scale = (n.max(1) as f64).sqrt().recip();
        if zeta_m > 0.0 {
            zeta_m * scale
        } else {
            scale
        }
    });
    let gaps = crate::eigen::eigen_gap_stats(&es, m)?;
    let lead = es.values()[0];
    let conditioning = if lead > 0.0 { zeta_m / lead } else { 0.0 };
    let warning = (conditioning < IDENTIFIABILITY_RATIO).then(|| {
        format!("second-stage operator is near-singular (zeta_M/zeta_1 = {conditioning:e}); MA operators may not be identifiable")
    });
    let stage = SecondStage { m, gamma, eigenvalues: es.values().to_vec(), gaps, conditioning, warning };
    Ok((es, stage))
}

/// `(G + γI)^{-1} Π_M` for the decomposition of `G`.
fn regularized_inverse(es: &EigenSystem, stage: &SecondStage) -> Result<BlockOp> {
    let resolvent = ridge_resolvent_eigen(es, stage.gamma)?;
    let projector = spectral_projector(es, stage.m)?;
    Ok(&resolvent * &projector)
}

fn require_psi(psi: &[LinearOp], needed: usize) -> Result<()> {
    if psi.len() < needed {
        return Err(HinvError::InvalidArgument(format!(
            "need at least {needed} psi operators, got {}",
            psi.len()
        )));
    }
    Ok(())
}

/// fARMA(1,1) from `ψ̂_1, ψ̂_2`:
/// `β̂_1 = −ψ̂_2ψ̂_1*(ψ̂_1ψ̂_1* + γI)^{-1}Π_M`, `α̂_1 = ψ̂_1 − β̂_1`.
pub fn farma11_from_psi(
    psi: &[LinearOp],
    m: Option<usize>,
    gamma: Option<f64>,
    n: usize,
) -> Result<(LinearOp, LinearOp, SecondStage)> {
    farma11_from_psi_with(psi, m, gamma, n, |es| es)
}

/// As [`farma11_from_psi`], with the decomposition of `ψ̂_1ψ̂_1*` passed
/// through `adjust` before use (e.g. to flip eigenvector signs).
pub fn farma11_from_psi_with(
    psi: &[LinearOp],
    m: Option<usize>,
    gamma: Option<f64>,
    n: usize,
    adjust: impl FnOnce(EigenSystem) -> EigenSystem,
) -> Result<(LinearOp, LinearOp, SecondStage)> {
    require_psi(psi, 2)?;
    let (psi1, psi2) = (&psi[0], &psi[1]);
    let psi1_adj = BlockOp::from(psi1.adjoint());
    let g = &BlockOp::from(psi1.clone()) * &psi1_adj;
    let (es, stage) = second_stage(&g, m, gamma, n)?;
    let inverse = regularized_inverse(&adjust(es), &stage)?;
    let cross = &BlockOp::from(psi2.clone()) * &psi1_adj;
    let beta = (&(&cross * &inverse) * -1.0).to_linear_op().expect("1x1 block");
    let alpha = psi1 - &beta;
    Ok((alpha, beta, stage))
}

/// fARMA(1,1) from a sample.
pub fn fit_farma11(s: &SamplePath, tuning: &ArmaTuning) -> Result<ArmaFit> {
    if tuning.base.l < 2 {
        return Err(HinvError::OutOfRange { what: "L", value: tuning.base.l, min: 2, max: usize::MAX });
    }
    let psi = fit_psi(s, &tuning.base)?;
    let (alpha, beta, stage) = farma11_from_psi(&psi.psi, tuning.m, tuning.gamma, s.len())?;
    Ok(ArmaFit {
        alpha: vec![alpha],
        beta: vec![beta],
        psi_source: Some(psi),
        pi_hat: None,
        second_stage: Some(stage),
    })
}

/// `q x q` block-Hankel operator with block `(r, c)` (1-based) equal to `ψ̂_{p+2q−r−c}`.
pub fn build_pi_hat(psi: &[LinearOp], p: usize, q: usize) -> Result<BlockOp> {
    if p == 0 || q == 0 {
        return Err(HinvError::InvalidArgument("block-Hankel operator needs p, q >= 1".into()));
    }
    require_psi(psi, p + 2 * q - 2)?;
    let space = psi[0].space();
    let mut pi = BlockOp::zeros(space, q, q);
    for r in 1..=q {
        for c in 1..=q {
            pi.set_block(r - 1, c - 1, &psi[p + 2 * q - r - c - 1]);
        }
    }
    Ok(pi)
}

/// `Ψ̂'_{[q]} = (ψ̂_{p+2q−1} ⋯ ψ̂_{p+q})`.
fn shifted_psi_row(psi: &[LinearOp], p: usize, q: usize) -> BlockOp {
    let mut row = BlockOp::zeros(psi[0].space(), 1, q);
    for c in 0..q {
        row.set_block(0, c, &psi[p + 2 * q - 2 - c]);
    }
    row
}

/// Result of the MA stage of fARMA(p,q).
#[derive(Clone, Debug)]
pub struct BqFit {
    /// `1 x q` block row `(β̂_1 ⋯ β̂_q)`.
    pub b_hat: BlockOp,
    pub pi_hat: BlockOp,
    pub eigen: EigenSystem,
    pub stage: SecondStage,
}

/// `B̂_q = −Ψ̂'_{[q]} Π̂*(Π̂Π̂* + γI)^{-1} Π_M`.
pub fn fit_bq(psi: &[LinearOp], p: usize, q: usize, m: Option<usize>, gamma: Option<f64>, n: usize) -> Result<BqFit> {
    fit_bq_from_psi_with(psi, p, q, m, gamma, n, |es| es)
}

/// As [`fit_bq`], with the decomposition of `Π̂Π̂*` passed through `adjust`
/// before use.
#[allow(clippy::too_many_arguments)]
pub fn fit_bq_from_psi_with(
    psi: &[LinearOp],
    p: usize,
    q: usize,
    m: Option<usize>,
    gamma: Option<f64>,
    n: usize,
    adjust: impl FnOnce(EigenSystem) -> EigenSystem,
) -> Result<BqFit> {
    let pi_hat = build_pi_hat(psi, p, q)?;
    require_psi(psi, p + 2 * q - 1)?;
    let pi_adj = pi_hat.adjoint();
    let g = &pi_hat * &pi_adj;
    let (es, stage) = second_stage(&g, m, gamma, n)?;
    let es = adjust(es);
    let inverse = regularized_inverse(&es, &stage)?;
    let cross = &shifted_psi_row(psi, p, q) * &pi_adj;
    let b_hat = &(&cross * &inverse) * -1.0;
    Ok(BqFit { b_hat, pi_hat, eigen: es, stage })
}

/// `α̂_i = ψ̂_i + Σ_{j=1}^{min(i−1,q)} β̂_j ψ̂_{i−j} − β̂_i`, `i = 1..p`.
pub fn alpha_from_psi_beta(psi: &[LinearOp], beta: &[LinearOp], p: usize) -> Result<Vec<LinearOp>> {
    require_psi(psi, p)?;
    let mut alpha = Vec::with_capacity(p);
    for i in 1..=p {
        let mut a = psi[i - 1].clone();
        for (j, b) in beta.iter().enumerate().take(i - 1) {
            a = &a + &(b * &psi[i - j - 2]);
        }
        if let Some(b) = beta.get(i - 1) {
            a = &a - b;
        }
        alpha.push(a);
    }
    Ok(alpha)
}

/// fARMA(p,q) operators from `ψ̂` components.
pub fn farma_pq_from_psi(
    psi: &[LinearOp],
    p: usize,
    q: usize,
    m: Option<usize>,
    gamma: Option<f64>,
    n: usize,
) -> Result<(Vec<LinearOp>, Vec<LinearOp>, BqFit)> {
    let bq = fit_bq(psi, p, q, m, gamma, n)?;
    let beta = bq.b_hat.row_blocks(0);
    let alpha = alpha_from_psi_beta(psi, &beta, p)?;
    Ok((alpha, beta, bq))
}

/// Default stacking depth for fARMA(p,q): `max(default, p + 2q + 3)`.
pub fn farma_default_lag(n: usize, p: usize, q: usize) -> usize {
    default_lag(n).max(p + 2 * q + 3)
}

/// fARMA(p,q) from a sample. `q = 0` delegates to [`fit_far`], `p = 0` to [`fit_fma`].
pub fn fit_farma_pq(s: &SamplePath, p: usize, q: usize, tuning: &ArmaTuning) -> Result<ArmaFit> {
    match (p, q) {
        (0, 0) => Err(HinvError::InvalidArgument("fARMA orders must not both be zero".into())),
        (_, 0) => fit_far(s, p, &tuning.base),
        (0, _) => fit_fma(s, q, &tuning.base, None),
        _ => {
            let needed = p + 2 * q - 1;
            if tuning.base.l < needed {
                return Err(HinvError::OutOfRange { what: "L", value: tuning.base.l, min: needed, max: usize::MAX });
            }
            let psi = fit_psi(s, &tuning.base)?;
            farma_from_estimate(psi, p, q, tuning.m, tuning.gamma, s.len())
        }
    }
}

fn farma_from_estimate(
    psi: PsiEstimate,
    p: usize,
    q: usize,
    m: Option<usize>,
    gamma: Option<f64>,
    n: usize,
) -> Result<ArmaFit> {
    let (alpha, beta, bq) = farma_pq_from_psi(&psi.psi, p, q, m, gamma, n)?;
    Ok(ArmaFit { alpha, beta, psi_source: Some(psi), pi_hat: Some(bq.pi_hat), second_stage: Some(bq.stage) })
}

/// Which estimator [`fit_auto`] dispatches to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFamily {
    Far { p: usize },
    Fma { q: usize },
    Farma { p: usize, q: usize },
}

/// Fits with data-driven defaults for every tuning value not overridden.
pub fn fit_auto(
    s: &SamplePath,
    family: FitFamily,
    overrides: &TuningOverrides,
    m: Option<usize>,
    gamma: Option<f64>,
) -> Result<ArmaFit> {
    let n = s.len();
    match family {
        FitFamily::Far { p } => {
            if p == 0 {
                return Err(HinvError::InvalidArgument("fAR order must be >= 1".into()));
            }
            let psi = fit_psi_auto(s, &TuningOverrides { l: Some(p), ..*overrides }, p)?;
            Ok(ArmaFit { alpha: psi.psi.clone(), beta: Vec::new(), psi_source: Some(psi), pi_hat: None, second_stage: None })
        }
        FitFamily::Fma { q } => fma_from_estimate(fit_psi_auto(s, overrides, q)?, q),
        FitFamily::Farma { p: 0, q } => fit_auto(s, FitFamily::Fma { q }, overrides, m, gamma),
        FitFamily::Farma { p, q: 0 } => fit_auto(s, FitFamily::Far { p }, overrides, m, gamma),
        FitFamily::Farma { p, q } => {
            let psi = fit_psi_auto(s, overrides, p + 2 * q + 3)?;
            if psi.tuning.l < p + 2 * q - 1 {
                return Err(HinvError::OutOfRange { what: "L", value: psi.tuning.l, min: p + 2 * q - 1, max: usize::MAX });
            }
            farma_from_estimate(psi, p, q, m, gamma, n)
        }
    }
}
