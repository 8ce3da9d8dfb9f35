//! Least-squares slopes of log median error against log sample size.

use serde::Serialize;

use crate::mc::MCReport;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub target: String,
    /// `None` when a median is not positive.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Ordinary least-squares fit `y = intercept + slope · x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope and intercept of `ln e` against `ln N`.
pub fn log_log_fit(ns: &[usize], errors: &[f64]) -> Result<Option<(f64, f64)>, CliError> {
    if ns.len() < 3 || ns.len() != errors.len() {
        return Err(CliError::Usage(format!("a rate fit needs at least 3 sample sizes, got {}", ns.len())));
    }
    if errors.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return Ok(None);
    }
    let x: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(Some(least_squares(&x, &y)))
}

/// One slope per estimated operator. Display only.
pub fn rate_table(report: &MCReport) -> Result<Vec<RateRow>, CliError> {
    if report.config.ns.len() < 3 {
        return Err(CliError::Usage(format!(
            "a rate table needs at least 3 sample sizes, got {}",
            report.config.ns.len()
        )));
    }
    let summary = report.summary();
    let mut rows = Vec::new();
    for (target, per_n) in summary {
        let (ns, med): (Vec<usize>, Vec<f64>) = per_n.iter().map(|(n, s)| (*n, s.median)).unzip();
        let fit = if ns.len() >= 3 { log_log_fit(&ns, &med)? } else { None };
        rows.push(RateRow { target, slope: fit.map(|f| f.0), intercept: fit.map(|f| f.1) });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let ns = [250, 1000, 4000, 16000];
        let errs: Vec<f64> = ns.iter().map(|n| 3.0 * (*n as f64).powf(-0.5)).collect();
        let (slope, intercept) = log_log_fit(&ns, &errs).unwrap().unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
        assert!((intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_errors_have_zero_slope() {
        let (slope, _) = log_log_fit(&[10, 20, 40], &[0.3, 0.3, 0.3]).unwrap().unwrap();
        assert!(slope.abs() < 1e-15);
    }

    #[test]
    fn too_few_sizes_or_zero_errors() {
        assert!(log_log_fit(&[10, 20], &[1.0, 0.5]).is_err());
        assert_eq!(log_log_fit(&[10, 20, 40], &[1.0, 0.0, 0.5]).unwrap(), None);
    }
}
