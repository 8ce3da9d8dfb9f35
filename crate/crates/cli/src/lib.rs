//! Command-line harness: simulation, fitting, Monte Carlo experiments and
//! population-oracle checks.

pub mod config;
pub mod mc;
pub mod oracle;
pub mod rate;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hinv_core::arma::{fit_auto, FitFamily};
use hinv_core::cov::emp_cov_stacked;
use hinv_core::eigen::{eigen_gap_stats, psd_eigen, sym_eigen};
use hinv_core::invertible::{default_lag, spectral_defaults, TuningOverrides};
use hinv_core::io::read_matrix;
use hinv_core::sim::{simulate, SamplePath};
use hinv_core::{BasisKind, BasisSpace, HinvError, LinearOp};

use crate::config::{ExperimentConfig, ModelConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] HinvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0} oracle check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// 1 for usage and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(HinvError::Io(_) | HinvError::Format(_) | HinvError::Json(_)) => 1,
            Self::Core(_) | Self::ChecksFailed(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hinv", version, about = "Estimation of invertible functional time series")]
struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitModel {
    Far,
    Fma,
    Farma,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BasisArg {
    Fourier,
    IndicatorGrid,
}

impl From<BasisArg> for BasisKind {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Fourier => BasisKind::Fourier,
            BasisArg::IndicatorGrid => BasisKind::IndicatorGrid,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a sample path from a model config.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit fAR, fMA or fARMA operators to a sample CSV.
    Fit {
        #[arg(long, value_enum)]
        model: FitModel,
        #[arg(long, default_value_t = 0)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        q: usize,
        #[arg(long = "L")]
        l: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        center: bool,
        #[arg(long, value_enum, default_value = "fourier")]
        basis: BasisArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues and gap statistics of a stacked sample covariance or a matrix.
    Eigen {
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        input: Option<PathBuf>,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long = "L")]
        l: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        center: bool,
    },
    /// Population-operator exact-recovery checks.
    OracleCheck {
        /// Model or experiment configs; defaults to every config under `configs/`.
        #[arg(long)]
        config: Vec<PathBuf>,
    },
}

fn resolve(workdir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workdir.join(p)
    }
}

/// Runs the CLI, returning the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let wd = cli.workdir;
    match cli.command {
        Command::Simulate { model, n, seed, burnin, out: path } => {
            let cfg = ModelConfig::load(&resolve(&wd, &model))?;
            let mut spec = cfg.to_spec()?;
            if let Some(seed) = seed {
                spec = spec.with_seed(seed);
            }
            let s = simulate(&spec, n, burnin)?;
            let path = resolve(&wd, &path);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            s.write_csv(&path)?;
            let mut sidecar = path.clone().into_os_string();
            sidecar.push(".json");
            s.write_sidecar(PathBuf::from(sidecar))?;
            writeln!(out, "wrote {} curves of dimension {} to {}", s.len(), s.space().dim(), path.display())?;
        }
        Command::Fit { model, p, q, l, k, theta, m, gamma, center, basis, input, out: dir } => {
            let family = match model {
                FitModel::Far => FitFamily::Far { p: p.max(1) },
                FitModel::Fma => FitFamily::Fma { q: q.max(1) },
                FitModel::Farma => FitFamily::Farma { p, q },
            };
            let s = read_sample(&resolve(&wd, &input), basis.into())?;
            let s = if center { s.centered() } else { s };
            let fit = fit_auto(&s, family, &TuningOverrides { l, k, theta }, m, gamma)?;
            let dir = resolve(&wd, &dir);
            fit.write(&dir)?;
            if let Some(psi) = &fit.psi_source {
                psi.write(&dir)?;
                let t = &psi.tuning;
                writeln!(out, "L={} K={} theta={:e}", t.l, t.k, t.theta)?;
            }
            if let Some(stage) = &fit.second_stage {
                writeln!(out, "M={} gamma={:e} conditioning={:e}", stage.m, stage.gamma, stage.conditioning)?;
                if let Some(w) = &stage.warning {
                    writeln!(out, "warning: {w}")?;
                }
            }
            writeln!(out, "wrote {} alpha and {} beta operators to {}", fit.alpha.len(), fit.beta.len(), dir.display())?;
        }
        Command::Mc { config, out: dir } => {
            let cfg = ExperimentConfig::load(&resolve(&wd, &config))?;
            let report = mc::run_mc(&cfg)?;
            let dir = resolve(&wd, dir.as_deref().unwrap_or(&cfg.output.dir));
            mc::write_report(&report, &dir)?;
            let failed = report.results.iter().filter(|r| r.failure.is_some()).count();
            writeln!(out, "{} replications ({failed} failed), report in {}", report.results.len(), dir.display())?;
            for (target, per_n) in report.summary() {
                let cells: Vec<String> = per_n.iter().map(|(n, s)| format!("N={n}: {:.4e}", s.median)).collect();
                writeln!(out, "  {target:<8} {}", cells.join("  "))?;
            }
            if let Ok(rates) = rate::rate_table(&report) {
                for r in rates {
                    if let Some(slope) = r.slope {
                        writeln!(out, "  slope {:<8} {slope:+.3}", r.target)?;
                    }
                }
            }
        }
        Command::Eigen { input, matrix, l, k, center } => {
            let (es, n) = match (input, matrix) {
                (Some(input), _) => {
                    let s = read_sample(&resolve(&wd, &input), BasisKind::Fourier)?;
                    let s = if center { s.centered() } else { s };
                    let l = l.unwrap_or_else(|| default_lag(s.len()));
                    (psd_eigen(&emp_cov_stacked(&s, l)?, 1)?, Some(s.len()))
                }
                (None, Some(matrix)) => {
                    let m = read_matrix(resolve(&wd, &matrix))?;
                    let op = LinearOp::new(BasisSpace::fourier(m.nrows())?, m)?;
                    (sym_eigen(&op, 1)?, None)
                }
                (None, None) => return Err(CliError::Usage("--input or --matrix is required".into())),
            };
            let (k_default, theta_default) = spectral_defaults(n.unwrap_or(1), &es);
            let k = k.unwrap_or(k_default);
            let gaps = eigen_gap_stats(&es, k)?;
            let json = serde_json::json!({
                "eigenvalues": es.values(),
                "trace": es.trace(),
                "clamped_mass": es.clamped_mass(),
                "default_k": k_default,
                "default_theta": n.map(|_| theta_default),
                "gaps": gaps,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&json)?)?;
        }
        Command::OracleCheck { config } => {
            let paths = if config.is_empty() { shipped_configs(&wd)? } else { config };
            let mut checks = oracle::builtin_checks();
            for path in &paths {
                let path = resolve(&wd, path);
                let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let model = load_any_model(&path)?;
                checks.extend(oracle::model_checks(&label, &model.to_spec()?));
            }
            let mut failed = 0;
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                failed += usize::from(!c.passed);
                writeln!(out, "{status} {} (error {:.3e}, tolerance {:.0e})", c.name, c.error, c.tolerance)?;
            }
            writeln!(out, "{} of {} checks passed", checks.len() - failed, checks.len())?;
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
    }
    Ok(())
}

fn read_sample(path: &Path, basis: BasisKind) -> Result<SamplePath, CliError> {
    let raw = SamplePath::read_csv(path, None)?;
    let space = BasisSpace::new(raw.space().dim(), basis)?;
    Ok(SamplePath::new(space, raw.data().clone())?)
}

fn shipped_configs(wd: &Path) -> Result<Vec<PathBuf>, CliError> {
    let dir = wd.join("configs");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// A model config, or the model of an experiment config.
fn load_any_model(path: &Path) -> Result<ModelConfig, CliError> {
    match ModelConfig::load(path) {
        Ok(m) => Ok(m),
        Err(model_err) => match ExperimentConfig::load(path) {
            Ok(exp) => Ok(exp.model_config()?.clone()),
            Err(_) => Err(model_err),
        },
    }
}
