//! Monte Carlo replication of simulate-then-fit experiments.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use hinv_core::arma::fit_auto;
use hinv_core::cov::causal_operators;
use hinv_core::invertible::{fit_psi_auto, phi_from_psi, population_psi, PsiEstimate};
use hinv_core::io::format_f64;
use hinv_core::sim::{simulate, ModelSpec};
use hinv_core::{LinearOp, Operator};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelConfig};
use crate::CliError;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "HINV_THREADS";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at sample size `n`.
pub fn replication_seed(seed_base: u64, n: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed_base) ^ n as u64) ^ rep as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub target: &'static str,
    /// 1-based operator index.
    pub index: usize,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepResult {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    /// `None` on success, otherwise the failure message.
    pub failure: Option<String>,
    pub l: Option<usize>,
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub m: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda_k: Option<f64>,
    pub degenerate: bool,
    pub warning: Option<String>,
    pub errors: Vec<ErrorRecord>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub failures: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

/// Lower-quantile convention: `sorted[floor(p (n − 1))]`.
pub fn lower_quantile(sorted: &[f64], p: f64) -> f64 {
    sorted[(p * (sorted.len() - 1) as f64).floor() as usize]
}

impl Stats {
    fn from_values(mut v: Vec<f64>, failures: usize) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (lower_quantile(&v, 0.25), lower_quantile(&v, 0.5), lower_quantile(&v, 0.75));
        Some(Self { count: v.len(), failures, median, q1, q3, iqr: q3 - q1 })
    }
}

#[derive(Clone, Debug)]
pub struct MCReport {
    pub config: ExperimentConfig,
    pub model_hash: String,
    /// Ordered by `(N, rep)`.
    pub results: Vec<RepResult>,
}

impl MCReport {
    /// Target keys (`"alpha_1"`, `"psi_2"`, ...) in sorted order.
    pub fn targets(&self) -> Vec<String> {
        let mut keys: Vec<String> =
            self.results.iter().flat_map(|r| r.errors.iter().map(|e| format!("{}_{}", e.target, e.index))).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    /// Per target, per `N` error statistics over successful replications.
    pub fn summary(&self) -> BTreeMap<String, BTreeMap<usize, Stats>> {
        let mut out = BTreeMap::new();
        for key in self.targets() {
            let mut per_n = BTreeMap::new();
            for &n in &self.config.ns {
                let rows: Vec<&RepResult> = self.results.iter().filter(|r| r.n == n).collect();
                let failures = rows.iter().filter(|r| r.failure.is_some()).count();
                let values: Vec<f64> = rows
                    .iter()
                    .flat_map(|r| r.errors.iter().filter(|e| format!("{}_{}", e.target, e.index) == key))
                    .map(|e| e.error)
                    .collect();
                if let Some(stats) = Stats::from_values(values, failures) {
                    per_n.insert(n, stats);
                }
            }
            out.insert(key, per_n);
        }
        out
    }

    /// `(N, median)` for one target key.
    pub fn medians(&self, key: &str) -> Vec<(usize, f64)> {
        self.summary().get(key).map(|m| m.iter().map(|(n, s)| (*n, s.median)).collect()).unwrap_or_default()
    }
}

struct Truth {
    model: ModelSpec,
    psi: Vec<LinearOp>,
    phi: Vec<LinearOp>,
}

fn op_or_zero(ops: &[LinearOp], i: usize, zero: &LinearOp) -> LinearOp {
    ops.get(i).cloned().unwrap_or_else(|| zero.clone())
}

fn run_rep(cfg: &ExperimentConfig, mc: &ModelConfig, truth: &Truth, n: usize, rep: usize) -> RepResult {
    let seed = replication_seed(cfg.seed_base, n, rep);
    let mut row = RepResult {
        n,
        rep,
        seed,
        failure: None,
        l: None,
        k: None,
        theta: None,
        m: None,
        gamma: None,
        lambda_k: None,
        degenerate: false,
        warning: None,
        errors: Vec::new(),
        seconds: 0.0,
    };
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| fit_rep(cfg, mc, truth, n, seed, &mut row)));
    row.seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(Ok(())) => {}
        Ok(Err(e)) => row.failure = Some(e.to_string()),
        Err(_) => row.failure = Some("fit panicked".into()),
    }
    if row.failure.is_some() {
        row.errors.clear();
    }
    row
}

fn fit_rep(
    cfg: &ExperimentConfig,
    mc: &ModelConfig,
    truth: &Truth,
    n: usize,
    seed: u64,
    row: &mut RepResult,
) -> hinv_core::Result<()> {
    let mut s = simulate(&truth.model.with_seed(seed), n, None)?;
    if cfg.center {
        s = s.centered();
    }
    let overrides = cfg.tuning.overrides();
    let (psi_est, alpha, beta, stage): (PsiEstimate, Vec<LinearOp>, Vec<LinearOp>, _) = match mc.fit_family() {
        Some(family) => {
            let fit = fit_auto(&s, family, &overrides, cfg.tuning.m, cfg.tuning.gamma)?;
            let psi = fit.psi_source.expect("estimators keep their first stage");
            (psi, fit.alpha, fit.beta, fit.second_stage)
        }
        None => (fit_psi_auto(&s, &overrides, 1)?, Vec::new(), Vec::new(), None),
    };
    row.l = Some(psi_est.tuning.l);
    row.k = Some(psi_est.tuning.k);
    row.theta = Some(psi_est.tuning.theta);
    row.lambda_k = Some(psi_est.diagnostics.lambda_k);
    row.degenerate = psi_est.diagnostics.degenerate;
    if let Some(stage) = stage {
        row.m = Some(stage.m);
        row.gamma = Some(stage.gamma);
        row.degenerate |= stage.gaps.degenerate;
        row.warning = stage.warning;
    }

    let zero = LinearOp::zeros(truth.model.space());
    let depth = cfg.report;
    for j in 0..depth.psi_depth {
        let err = (&op_or_zero(&psi_est.psi, j, &zero) - &truth.psi[j]).hs_norm();
        row.errors.push(ErrorRecord { target: "psi", index: j + 1, error: err });
    }
    if depth.phi_depth > 0 {
        let phi = phi_from_psi(&psi_est.psi, depth.phi_depth)?;
        for (i, est) in phi.iter().enumerate().skip(1) {
            let err = (est - &op_or_zero(&truth.phi, i, &zero)).hs_norm();
            row.errors.push(ErrorRecord { target: "phi", index: i, error: err });
        }
    }
    for (i, a) in alpha.iter().enumerate() {
        let err = (a - &op_or_zero(truth.model.ar_ops(), i, &zero)).hs_norm();
        row.errors.push(ErrorRecord { target: "alpha", index: i + 1, error: err });
    }
    for (j, b) in beta.iter().enumerate() {
        let err = (b - &op_or_zero(truth.model.ma_ops(), j, &zero)).hs_norm();
        row.errors.push(ErrorRecord { target: "beta", index: j + 1, error: err });
    }
    Ok(())
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|t| *t > 0)
}

/// Runs every `(N, rep)` replication of `cfg`. Fit failures are recorded in
/// the affected rows; only an invalid configuration is an error.
pub fn run_mc(cfg: &ExperimentConfig) -> Result<MCReport, CliError> {
    cfg.validate()?;
    let mc = cfg.model_config()?;
    let model = mc.to_spec()?;
    let truth = Truth {
        psi: population_psi(&model, cfg.report.psi_depth)?,
        phi: causal_operators(&model)?,
        model,
    };
    let tasks: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_cap() {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    let results: Vec<RepResult> =
        pool.install(|| tasks.par_iter().map(|&(n, r)| run_rep(cfg, mc, &truth, n, r)).collect());
    Ok(MCReport { config: cfg.clone(), model_hash: truth.model.fingerprint(), results })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    model_hash: &'a str,
    ns: &'a [usize],
    reps: usize,
    seed_base: u64,
    failures: usize,
    degenerate: usize,
    targets: BTreeMap<String, BTreeMap<usize, Stats>>,
    rates: Option<Vec<crate::rate::RateRow>>,
}

/// Writes `errors.csv`, `fits.csv`, `summary.json` (and `rates.csv` with at
/// least three sample sizes) into `dir`. Wall-clock times go to `timing.csv`
/// so that the other files are reproducible byte for byte.
pub fn write_report(report: &MCReport, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let out = &report.config.output;
    let rates = crate::rate::rate_table(report).ok();
    if out.csv {
        let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
        w.write_record(["n", "rep", "seed", "target", "index", "error"])?;
        for r in &report.results {
            for e in &r.errors {
                w.write_record([
                    r.n.to_string(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    e.target.to_string(),
                    e.index.to_string(),
                    format_f64(e.error),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("fits.csv"))?;
        w.write_record([
            "n", "rep", "seed", "status", "L", "K", "theta", "M", "gamma", "lambda_K", "degenerate", "message",
        ])?;
        for r in &report.results {
            let status = if r.failure.is_some() { "failed" } else { "ok" };
            let message = r.failure.clone().or_else(|| r.warning.clone()).unwrap_or_default();
            w.write_record([
                r.n.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                status.to_string(),
                opt(r.l),
                opt(r.k),
                opt_f64(r.theta),
                opt(r.m),
                opt_f64(r.gamma),
                opt_f64(r.lambda_k),
                r.degenerate.to_string(),
                message,
            ])?;
        }
        w.flush()?;

        if let Some(rates) = &rates {
            let mut w = csv::Writer::from_path(dir.join("rates.csv"))?;
            w.write_record(["target", "slope", "intercept"])?;
            for r in rates {
                w.write_record([r.target.clone(), opt_f64(r.slope), opt_f64(r.intercept)])?;
            }
            w.flush()?;
        }
    }

    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["n", "rep", "seconds"])?;
    for r in &report.results {
        w.write_record([r.n.to_string(), r.rep.to_string(), format!("{:.6}", r.seconds)])?;
    }
    w.flush()?;

    if out.json {
        let summary = SummaryJson {
            model_hash: &report.model_hash,
            ns: &report.config.ns,
            reps: report.config.reps,
            seed_base: report.config.seed_base,
            failures: report.results.iter().filter(|r| r.failure.is_some()).count(),
            degenerate: report.results.iter().filter(|r| r.degenerate).count(),
            targets: report.summary(),
            rates,
        };
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        std::fs::write(dir.join("summary.json"), text)?;
    }
    Ok(())
}
