//! Exact-recovery checks with population operators in place of empirical ones.

use hinv_core::arma::{build_pi_hat, farma11_from_psi, farma_pq_from_psi, fma_from_psi};
use hinv_core::cov::{causal_operators, population_operators};
use hinv_core::invertible::{fit_psi_operators, phi_from_psi, population_psi, TuningPlan};
use hinv_core::sim::{ModelKind, ModelSpec, NoiseSpec};
use hinv_core::{BasisSpace, BlockOp, LinearOp, Operator};
use serde::Serialize;

/// Tikhonov parameter of the population checks.
pub const TINY_RIDGE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), error, tolerance, passed: error <= tolerance }
    }

    fn failed(name: impl Into<String>, reason: &hinv_core::HinvError) -> Self {
        let name = format!("{} ({reason})", name.into());
        Self { name, error: f64::INFINITY, tolerance: 0.0, passed: false }
    }
}

fn max_hs_error(est: &[LinearOp], truth: &[LinearOp]) -> f64 {
    let zero = LinearOp::zeros(truth.first().or(est.first()).map(|o| o.space()).expect("non-empty"));
    let len = est.len().max(truth.len());
    (0..len)
        .map(|i| (est.get(i).unwrap_or(&zero) - truth.get(i).unwrap_or(&zero)).hs_norm())
        .fold(0.0, f64::max)
}

/// `α̂` from population `C_{X^[L]}`, `D` with `L = depth`, full `K`, tiny `θ`.
pub fn far_injection_error(model: &ModelSpec, depth: usize) -> hinv_core::Result<f64> {
    let pop = population_operators(model, depth)?;
    let tuning = TuningPlan::new(depth, depth * model.space().dim(), TINY_RIDGE);
    let est = fit_psi_operators(&pop.c_stacked, &pop.d_cross, &tuning)?;
    Ok(max_hs_error(&est.psi, model.ar_ops()))
}

/// `(α̂, β̂)` from exact `ψ` with full `M` and tiny `γ`.
pub fn farma_injection_error(model: &ModelSpec) -> hinv_core::Result<f64> {
    let (p, q) = (model.ar_ops().len(), model.ma_ops().len());
    let psi = population_psi(model, p + 2 * q + 1)?;
    let (alpha, beta, _) = farma_pq_from_psi(&psi, p, q, Some(q * model.space().dim()), Some(TINY_RIDGE), 1)?;
    Ok(max_hs_error(&alpha, model.ar_ops()).max(max_hs_error(&beta, model.ma_ops())))
}

/// `‖Ψ'_{[q]} + B_q Π‖` on exact `ψ`.
pub fn hankel_identity_error(model: &ModelSpec) -> hinv_core::Result<f64> {
    let (p, q) = (model.ar_ops().len(), model.ma_ops().len());
    let psi = population_psi(model, p + 2 * q)?;
    let pi = build_pi_hat(&psi, p, q)?;
    let space = model.space();
    let mut shifted = BlockOp::zeros(space, 1, q);
    let mut b = BlockOp::zeros(space, 1, q);
    for c in 0..q {
        shifted.set_block(0, c, &psi[p + 2 * q - 2 - c]);
        b.set_block(0, c, &model.ma_ops()[c]);
    }
    Ok((&shifted + &(&b * &pi)).hs_norm())
}

/// `φ` from exact `ψ` against the causal power series, up to lag `depth`.
pub fn duality_error(model: &ModelSpec, depth: usize) -> hinv_core::Result<f64> {
    let phi = phi_from_psi(&population_psi(model, depth)?, depth)?;
    let mut series = causal_operators(model)?;
    series.truncate(depth + 1);
    Ok(max_hs_error(&phi, &series))
}

fn record(out: &mut Vec<Check>, name: &str, tolerance: f64, r: hinv_core::Result<f64>) {
    out.push(match r {
        Ok(e) => Check::new(name, e, tolerance),
        Err(e) => Check::failed(name, &e),
    });
}

fn scalar_model(ar: &[f64], ma: &[f64]) -> hinv_core::Result<ModelSpec> {
    let noise = NoiseSpec::new(BasisSpace::fourier(1)?, vec![1.0], 0)?;
    let ops = |v: &[f64]| v.iter().map(|x| LinearOp::scalar(*x)).collect::<Vec<_>>();
    if ma.is_empty() {
        ModelSpec::far(ops(ar), noise)
    } else if ar.is_empty() {
        ModelSpec::fma(ops(ma), noise)
    } else {
        ModelSpec::farma(ops(ar), ops(ma), noise)
    }
}

fn matrix_op(space: BasisSpace, rows: &[[f64; 2]; 2]) -> hinv_core::Result<LinearOp> {
    LinearOp::from_rows(space, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn dim2_farma21() -> hinv_core::Result<ModelSpec> {
    let space = BasisSpace::fourier(2)?;
    let ar = vec![matrix_op(space, &[[0.4, 0.1], [0.0, 0.3]])?, matrix_op(space, &[[0.2, 0.0], [0.05, -0.2]])?];
    let ma = vec![matrix_op(space, &[[0.5, 0.1], [-0.1, 0.4]])?];
    ModelSpec::farma(ar, ma, NoiseSpec::inverse_square(space, 0))
}

/// Checks on fixed small models.
pub fn builtin_checks() -> Vec<Check> {
    let mut out = Vec::new();
    record(&mut out, "scalar fAR(1) alpha=0.5, L=2", 1e-8, scalar_model(&[0.5], &[]).and_then(|m| far_injection_error(&m, 2)));
    record(&mut out, "scalar fAR(2), L=2", 1e-7, scalar_model(&[0.5, -0.3], &[]).and_then(|m| far_injection_error(&m, 2)));
    record(
        &mut out,
        "scalar fMA(1) beta=0.5, L=40",
        1e-6,
        scalar_model(&[], &[0.5]).and_then(|m| {
            let pop = population_operators(&m, 40)?;
            let est = fit_psi_operators(&pop.c_stacked, &pop.d_cross, &TuningPlan::new(40, 40, TINY_RIDGE))?;
            Ok(max_hs_error(&fma_from_psi(&est.psi, 1)?, m.ma_ops()))
        }),
    );
    record(
        &mut out,
        "scalar fARMA(1,1) alpha=0.5 beta=0.3 (1,1) path",
        1e-6,
        scalar_model(&[0.5], &[0.3]).and_then(|m| {
            let psi = population_psi(&m, 2)?;
            let (a, b, _) = farma11_from_psi(&psi, Some(1), Some(TINY_RIDGE), 1)?;
            Ok(max_hs_error(&[a], m.ar_ops()).max(max_hs_error(&[b], m.ma_ops())))
        }),
    );
    record(&mut out, "scalar fARMA(1,1) (p,q) path", 1e-6, scalar_model(&[0.5], &[0.3]).and_then(|m| farma_injection_error(&m)));
    record(&mut out, "dim-2 fARMA(2,1)", 1e-6, dim2_farma21().and_then(|m| farma_injection_error(&m)));
    record(&mut out, "dim-2 fARMA(2,1) duality", 1e-9, dim2_farma21().and_then(|m| duality_error(&m, 60)));
    out
}

/// Checks applicable to a configured model.
pub fn model_checks(label: &str, model: &ModelSpec) -> Vec<Check> {
    let mut out = Vec::new();
    let (p, q) = (model.ar_ops().len(), model.ma_ops().len());
    match model.kind() {
        ModelKind::Far { .. } if p > 0 => {
            record(&mut out, &format!("{label}: exact recovery, L=p"), 1e-7, far_injection_error(model, p));
            record(&mut out, &format!("{label}: exact recovery, L=p+2"), 1e-7, far_injection_error(model, p + 2));
        }
        ModelKind::Farma { .. } if p > 0 && q > 0 => {
            record(&mut out, &format!("{label}: Hankel identity"), 1e-10, hankel_identity_error(model));
        }
        _ => {}
    }
    record(&mut out, &format!("{label}: psi/phi duality"), 1e-9, duality_error(model, 60));
    out
}
