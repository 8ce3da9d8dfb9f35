//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion; run with `--nocapture` to see them.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hinv::config::ExperimentConfig;
use hinv::mc::{run_mc, write_report};
use hinv::rate::rate_table;
use hinv_core::arma::{
    farma11_from_psi, farma11_from_psi_with, farma_pq_from_psi, fit_bq_from_psi_with, fit_farma11, fit_farma_pq,
    ArmaTuning,
};
use hinv_core::cov::{emp_cov_stacked, emp_crosscov_lag1, emp_lag_cov, population_operators};
use hinv_core::eigen::{psd_eigen, sym_eigen};
use hinv_core::invertible::{fit_psi_eigen, fit_psi_operators, phi_from_psi, population_psi, TuningPlan};
use hinv_core::sim::{random_hs_operator, simulate, ModelSpec, NoiseSpec};
use hinv_core::space::block_assemble;
use hinv_core::{BasisSpace, LinearOp, Operator};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(id: u32, name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("{tag} criterion {id}: {name} ({detail})");
    assert!(passed, "criterion {id} failed: {detail}");
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scalar_noise() -> NoiseSpec {
    NoiseSpec::new(BasisSpace::fourier(1).unwrap(), vec![1.0], 0).unwrap()
}

fn ops(rows: &[&[&[f64]]]) -> Vec<LinearOp> {
    let space = BasisSpace::fourier(rows[0].len()).unwrap();
    rows.iter()
        .map(|m| LinearOp::from_rows(space, &m.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
        .collect()
}

fn hs_diff(a: &LinearOp, b: &LinearOp) -> f64 {
    (a.matrix() - b.matrix()).norm()
}

#[test]
fn criterion_1_population_exact_recovery_far() {
    let start = Instant::now();
    let dim3 = BasisSpace::fourier(3).unwrap();
    let models = vec![
        ModelSpec::far(vec![LinearOp::scalar(0.5)], scalar_noise()).unwrap(),
        ModelSpec::far(vec![LinearOp::scalar(0.6), LinearOp::scalar(-0.3)], scalar_noise()).unwrap(),
        ModelSpec::far(
            ops(&[&[&[0.4, 0.1, 0.0], &[0.0, 0.3, 0.1], &[0.05, 0.0, 0.2]]]),
            NoiseSpec::inverse_square(dim3, 0),
        )
        .unwrap(),
        ModelSpec::far(
            vec![random_hs_operator(dim3, 0.5, 11).unwrap(), random_hs_operator(dim3, 0.35, 12).unwrap()],
            NoiseSpec::new(dim3, vec![1.0, 0.5, 0.25], 0).unwrap(),
        )
        .unwrap(),
    ];
    let mut worst = 0.0f64;
    for m in &models {
        let p = m.ar_ops().len();
        for l in [p, p + 2] {
            let pop = population_operators(m, l).unwrap();
            let tuning = TuningPlan::new(l, l * m.space().dim(), 1e-12);
            let est = fit_psi_operators(&pop.c_stacked, &pop.d_cross, &tuning).unwrap();
            for (j, psi) in est.psi.iter().enumerate() {
                let truth = m.ar_ops().get(j).cloned().unwrap_or_else(|| LinearOp::zeros(m.space()));
                worst = worst.max(hs_diff(psi, &truth));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "population exact recovery, fAR",
        worst <= 1e-7 && elapsed < Duration::from_secs(1),
        &format!("max HS error {worst:.2e} <= 1e-7, {:.3}s < 1s", elapsed.as_secs_f64()),
    );
}

/// `ψ` of an fARMA model by formal power-series division `B(z)^{-1} A(z)`:
/// `I − Ψ(z) = B(z)^{-1}(I − Σ α_i z^i)`.
fn psi_by_series(ar: &[DMatrix<f64>], ma: &[DMatrix<f64>], dim: usize, len: usize) -> Vec<DMatrix<f64>> {
    // G(z) = B(z)^{-1}: G_0 = I, G_i = −Σ_{j=1}^{min(i,q)} β_j G_{i−j}
    let mut g = vec![DMatrix::identity(dim, dim)];
    for i in 1..=len {
        let mut gi = DMatrix::zeros(dim, dim);
        for (j, b) in ma.iter().enumerate().take(i) {
            gi -= b * &g[i - j - 1];
        }
        g.push(gi);
    }
    // coefficient i of G(z) A(z) is G_i − Σ_k G_{i−k} α_k, and ψ_i is its negative
    (1..=len)
        .map(|i| {
            let mut c = g[i].clone();
            for (k, a) in ar.iter().enumerate().take(i) {
                c -= &g[i - k - 1] * a;
            }
            -c
        })
        .collect()
}

#[test]
fn criterion_2_population_exact_recovery_farma() {
    let start = Instant::now();
    let scalar = ModelSpec::farma(vec![LinearOp::scalar(0.5)], vec![LinearOp::scalar(0.3)], scalar_noise()).unwrap();
    let dim2 = BasisSpace::fourier(2).unwrap();
    let farma21 = ModelSpec::farma(
        ops(&[&[&[0.4, 0.1], &[0.0, 0.3]], &[&[0.2, 0.0], &[0.05, -0.2]]]),
        ops(&[&[&[0.5, 0.1], &[-0.1, 0.4]]]),
        NoiseSpec::inverse_square(dim2, 0),
    )
    .unwrap();

    let mut worst = 0.0f64;
    let mut recursion_gap = 0.0f64;
    for m in [&scalar, &farma21] {
        let (p, q, d) = (m.ar_ops().len(), m.ma_ops().len(), m.space().dim());
        let psi = population_psi(m, p + 2 * q + 1).unwrap();
        let mats = |v: &[LinearOp]| v.iter().map(|o| o.matrix().clone()).collect::<Vec<_>>();
        let series = psi_by_series(&mats(m.ar_ops()), &mats(m.ma_ops()), d, psi.len());
        for (a, b) in psi.iter().zip(&series) {
            recursion_gap = recursion_gap.max((a.matrix() - b).norm());
        }
        let (alpha, beta, _) = farma_pq_from_psi(&psi, p, q, Some(q * d), Some(1e-12), 1).unwrap();
        for (est, truth) in alpha.iter().zip(m.ar_ops()).chain(beta.iter().zip(m.ma_ops())) {
            worst = worst.max(hs_diff(est, truth));
        }
    }
    let psi = population_psi(&scalar, 2).unwrap();
    let (a11, b11, _) = farma11_from_psi(&psi, Some(1), Some(1e-12), 1).unwrap();
    worst = worst.max((a11.matrix()[(0, 0)] - 0.5).abs()).max((b11.matrix()[(0, 0)] - 0.3).abs());

    let elapsed = start.elapsed();
    verdict(
        2,
        "population exact recovery, fARMA",
        worst <= 1e-6 && recursion_gap <= 1e-12 && elapsed < Duration::from_secs(1),
        &format!(
            "max error {worst:.2e} <= 1e-6, psi recursion vs series {recursion_gap:.1e}, {:.3}s < 1s",
            elapsed.as_secs_f64()
        ),
    );
}

/// `φ(z) = A(z)^{-1} B(z)`: `φ_i = β_i + Σ_{k=1}^{min(i,p)} α_k φ_{i−k}`.
fn phi_by_series(ar: &[DMatrix<f64>], ma: &[DMatrix<f64>], dim: usize, len: usize) -> Vec<DMatrix<f64>> {
    let mut phi = vec![DMatrix::identity(dim, dim)];
    for i in 1..=len {
        let mut next = ma.get(i - 1).cloned().unwrap_or_else(|| DMatrix::zeros(dim, dim));
        for (k, a) in ar.iter().enumerate().take(i) {
            next += a * &phi[i - k - 1];
        }
        phi.push(next);
    }
    phi
}

#[test]
fn criterion_3_psi_phi_duality() {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let dim = 1 + (i % 5) as usize;
        let p = 1 + (i / 5 % 2) as usize;
        let q = 1 + (i / 10 % 3) as usize;
        let space = BasisSpace::fourier(dim).unwrap();
        let ar: Vec<LinearOp> =
            (0..p).map(|k| random_hs_operator(space, 0.85 / p as f64, 1000 * i + k as u64).unwrap()).collect();
        let ma: Vec<LinearOp> =
            (0..q).map(|k| random_hs_operator(space, 0.85 / q as f64, 1000 * i + 500 + k as u64).unwrap()).collect();
        let m = ModelSpec::farma(ar.clone(), ma.clone(), NoiseSpec::inverse_square(space, i)).unwrap();
        let phi = phi_from_psi(&population_psi(&m, 60).unwrap(), 60).unwrap();
        let mats = |v: &[LinearOp]| v.iter().map(|o| o.matrix().clone()).collect::<Vec<_>>();
        let oracle = phi_by_series(&mats(&ar), &mats(&ma), dim, 60);
        for (a, b) in phi.iter().zip(&oracle) {
            worst = worst.max((a.matrix() - b).norm());
        }
    }
    verdict(3, "psi/phi duality on 50 random fARMA models", worst <= 1e-9, &format!("max HS error {worst:.2e} <= 1e-9"));
}

#[test]
fn criterion_4_monte_carlo_consistency() {
    let start = Instant::now();
    let runs = [("exp_far1.toml", &["alpha_1"][..]), ("exp_fma1.toml", &["beta_1"]), ("exp_farma11.toml", &["alpha_1", "beta_1"])];
    let mut ok = true;
    let mut detail = Vec::new();
    for (file, targets) in runs {
        let cfg = ExperimentConfig::load(&configs_dir().join(file)).unwrap();
        let report = run_mc(&cfg).unwrap();
        assert!(report.results.iter().all(|r| r.failure.is_none()), "{file}: failed replications");
        let dim = cfg.model_config().unwrap().dim;
        assert!((10..=15).contains(&dim) && cfg.reps == 20 && cfg.ns == [250, 1000, 4000]);
        let rates = rate_table(&report).unwrap();
        for t in targets {
            let med = report.medians(t);
            let decreasing = med.len() == 3 && med.windows(2).all(|w| w[1].1 < w[0].1);
            ok &= decreasing;
            let slope = rates.iter().find(|r| r.target == *t).and_then(|r| r.slope).unwrap_or(f64::NAN);
            let cells: Vec<String> = med.iter().map(|(n, m)| format!("{n}:{m:.3}")).collect();
            detail.push(format!("{file} {t} [{}] slope {slope:+.2}", cells.join(" ")));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    verdict(
        4,
        "Monte Carlo medians strictly decreasing in N",
        ok,
        &format!("{}; {:.1}s < 600s", detail.join("; "), elapsed.as_secs_f64()),
    );
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose()
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let e = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&e + e.transpose()) * (0.5 * scale)
}

#[test]
fn criterion_5_eigen_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut weyl_ok = true;
    let mut vec_ok = true;
    let mut checked_vectors = 0;
    let mut worst_ratio = 0.0f64;
    for trial in 0..100 {
        let n = 2 + trial % 7;
        let a = random_psd(&mut rng, n);
        let scale = 10f64.powi(-((trial % 4) as i32) - 1);
        let a_hat = &a + random_symmetric(&mut rng, n, scale);
        let space = BasisSpace::fourier(n).unwrap();
        let es = sym_eigen(&LinearOp::new(space, a.clone()).unwrap(), n).unwrap();
        let es_hat = sym_eigen(&LinearOp::new(space, a_hat.clone()).unwrap(), n).unwrap();
        let gap_op = (&a_hat - &a).singular_values().max();

        let shift = es.values().iter().zip(es_hat.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        weyl_ok &= shift <= gap_op * (1.0 + 1e-12) + 1e-12;

        if es.gaps().degenerate {
            continue;
        }
        // aligned eigenvector bound, gaps of the unperturbed spectrum
        let vals = es.values();
        for j in 0..n {
            let upper = if j > 0 { vals[j - 1] - vals[j] } else { f64::INFINITY };
            let lower = if j + 1 < n { vals[j] - vals[j + 1] } else { vals[j] };
            let alpha_j = upper.min(lower);
            let c = es.vectors().column(j);
            let c_hat = es_hat.vectors().column(j);
            let sign = c.dot(&c_hat).signum();
            let err = (c_hat - c * sign).norm();
            let bound = 2.0 * 2f64.sqrt() / alpha_j * gap_op;
            vec_ok &= err <= bound * (1.0 + 1e-12) + 1e-12;
            worst_ratio = worst_ratio.max(err / bound);
            checked_vectors += 1;
        }
    }
    verdict(
        5,
        "eigen-perturbation invariants on 100 random PSD pairs",
        weyl_ok && vec_ok && checked_vectors > 0,
        &format!("eigenvalue bound {weyl_ok}, eigenvector bound {vec_ok} on {checked_vectors} vectors, max error/bound {worst_ratio:.3}"),
    );
}

#[test]
fn criterion_6_structural_identities() {
    let mut failures = Vec::new();
    let mut check = |name: &str, value: f64, tol: f64| {
        if value.is_nan() || value > tol {
            failures.push(format!("{name}: {value:.2e} > {tol:.0e}"));
        }
    };

    let space = BasisSpace::fourier(3).unwrap();
    let grid: Vec<Vec<LinearOp>> = (0..3)
        .map(|i| (0..4).map(|j| random_hs_operator(space, 0.3 + 0.1 * (i + j) as f64, (10 * i + j) as u64).unwrap()).collect())
        .collect();
    let block = block_assemble(&grid).unwrap();
    let sum: f64 = grid.iter().flatten().map(|b| b.hs_norm().powi(2)).sum();
    check("block HS identity", (block.hs_norm().powi(2) - sum).abs() / sum, 1e-14);

    let m = ModelSpec::farma(
        vec![random_hs_operator(space, 0.5, 1).unwrap()],
        vec![random_hs_operator(space, 0.4, 2).unwrap()],
        NoiseSpec::inverse_square(space, 3),
    )
    .unwrap();
    let s = simulate(&m, 600, None).unwrap();
    let n = s.len();
    for l in 1..=4 {
        let c = emp_cov_stacked(&s, l).unwrap();
        let direct: f64 = (l..=n)
            .map(|k| (0..l).map(|b| s.data().column(k - 1 - b).norm_squared()).sum::<f64>())
            .sum::<f64>()
            / (n - l + 1) as f64;
        check("trace identity", (c.trace() - direct).abs() / direct, 1e-13);
    }
    for h in 1..4usize {
        let direct = (0..n - h).fold(DMatrix::zeros(3, 3), |acc, k| {
            acc + s.data().column(k) * s.data().column(k + h).transpose()
        }) / (n - h) as f64;
        let neg = emp_lag_cov(&s, -(h as isize)).unwrap();
        check("adjoint lag covariance", (neg.matrix() - &direct).norm() / direct.norm(), 1e-13);
        check("adjoint pair", (neg.matrix() - emp_lag_cov(&s, h as isize).unwrap().matrix().transpose()).norm(), 0.0);
    }

    let l = 3;
    let c = emp_cov_stacked(&s, l).unwrap();
    let d = emp_crosscov_lag1(&s, l).unwrap();
    let tuning = TuningPlan::new(l, 6, 1e-3);
    let eigen = psd_eigen(&c, 6).unwrap();
    let base = fit_psi_eigen(&d, eigen.clone(), &tuning).unwrap();
    let flipped = fit_psi_eigen(&d, eigen.with_flipped_sign(0).with_flipped_sign(4).with_flipped_sign(8), &tuning).unwrap();
    check("fit_psi sign invariance", (base.psi_l.matrix() - flipped.psi_l.matrix()).abs().max(), 0.0);

    let psi = &base.psi;
    let (_, b0, _) = farma11_from_psi_with(psi, Some(2), Some(1e-4), n, |e| e).unwrap();
    let (_, b1, _) = farma11_from_psi_with(psi, Some(2), Some(1e-4), n, |e| e.with_flipped_sign(0).with_flipped_sign(1)).unwrap();
    check("fit_farma11 sign invariance", (b0.matrix() - b1.matrix()).abs().max(), 0.0);
    let q0 = fit_bq_from_psi_with(psi, 1, 1, Some(2), Some(1e-4), n, |e| e).unwrap();
    let q1 = fit_bq_from_psi_with(psi, 1, 1, Some(2), Some(1e-4), n, |e| e.with_flipped_sign(1).with_flipped_sign(2)).unwrap();
    check("fit_Bq sign invariance", (q0.b_hat.matrix() - q1.b_hat.matrix()).abs().max(), 0.0);

    let arma = ArmaTuning::with_second_stage(TuningPlan::new(4, 9, 1e-3), 2, 1e-3);
    let a = fit_farma11(&s, &arma).unwrap();
    let b = fit_farma_pq(&s, 1, 1, &arma).unwrap();
    check("(1,1) paths agree", hs_diff(&a.alpha[0], &b.alpha[0]).max(hs_diff(&a.beta[0], &b.beta[0])), 1e-12);

    verdict(
        6,
        "structural identities at machine precision",
        failures.is_empty(),
        &if failures.is_empty() { "block HS, trace, adjoint lags, sign invariance x3, (1,1) agreement".into() } else { failures.join("; ") },
    );
}

#[test]
fn criterion_7_determinism() {
    let config = configs_dir().join("exp_quick.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let code = hinv::cli_main_with(
            ["hinv", "mc", "--config", config.to_str().unwrap(), "--out", d.path().to_str().unwrap()],
            &mut Vec::new(),
            &mut Vec::new(),
        );
        assert_eq!(code, 0);
    }
    let lib_dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&config).unwrap();
    write_report(&run_mc(&cfg).unwrap(), lib_dir.path()).unwrap();

    let mut mismatched = Vec::new();
    for f in ["errors.csv", "fits.csv", "summary.json", "rates.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        if a.is_empty() || a != std::fs::read(dirs[1].path().join(f)).unwrap() || a != std::fs::read(lib_dir.path().join(f)).unwrap() {
            mismatched.push(f);
        }
    }
    verdict(
        7,
        "byte-identical mc reruns",
        mismatched.is_empty(),
        &format!("errors.csv, fits.csv, summary.json, rates.csv compared over 3 runs; mismatched {mismatched:?}"),
    );
}
