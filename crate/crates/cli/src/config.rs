//! TOML model and experiment configurations.

use std::path::{Path, PathBuf};

use hinv_core::arma::FitFamily;
use hinv_core::invertible::TuningOverrides;
use hinv_core::sim::{random_hs_operator, ModelSpec, NoiseSpec};
use hinv_core::{BasisKind, BasisSpace, LinearOp};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Far,
    Fma,
    Farma,
    Lp,
    Wn,
}

/// An operator either drawn at random or given entry by entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorConfig {
    Random { hs_norm: f64, seed: u64 },
    Matrix { matrix: Vec<Vec<f64>> },
}

impl OperatorConfig {
    fn build(&self, space: BasisSpace) -> Result<LinearOp, CliError> {
        Ok(match self {
            Self::Random { hs_norm, seed } => random_hs_operator(space, *hs_norm, *seed)?,
            Self::Matrix { matrix } => LinearOp::from_rows(space, matrix)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseConfig {
    /// `"inverse-square"`: eigenvalues `j^{-2}`.
    Named(String),
    Eigenvalues(Vec<f64>),
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::Named("inverse-square".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub dim: usize,
    #[serde(default)]
    pub basis: BasisKind,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ar: Vec<OperatorConfig>,
    #[serde(default)]
    pub ma: Vec<OperatorConfig>,
    #[serde(default)]
    pub lp: Vec<OperatorConfig>,
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn space(&self) -> Result<BasisSpace, CliError> {
        Ok(BasisSpace::new(self.dim, self.basis)?)
    }

    pub fn to_spec(&self) -> Result<ModelSpec, CliError> {
        let space = self.space()?;
        let noise = match &self.noise {
            NoiseConfig::Named(name) if name == "inverse-square" => NoiseSpec::inverse_square(space, self.seed),
            NoiseConfig::Named(name) => return Err(CliError::Usage(format!("unknown noise spectrum `{name}`"))),
            NoiseConfig::Eigenvalues(eig) => NoiseSpec::new(space, eig.clone(), self.seed)?,
        };
        let build = |ops: &[OperatorConfig]| ops.iter().map(|o| o.build(space)).collect::<Result<Vec<_>, _>>();
        let (ar, ma, lp) = (build(&self.ar)?, build(&self.ma)?, build(&self.lp)?);
        let unused = |name: &str, ops: &[LinearOp]| {
            if ops.is_empty() {
                Ok(())
            } else {
                Err(CliError::Usage(format!("`{name}` operators are not used by family {:?}", self.family)))
            }
        };
        Ok(match self.family {
            Family::Far => {
                unused("ma", &ma)?;
                unused("lp", &lp)?;
                ModelSpec::far(ar, noise)?
            }
            Family::Fma => {
                unused("ar", &ar)?;
                unused("lp", &lp)?;
                ModelSpec::fma(ma, noise)?
            }
            Family::Farma => {
                unused("lp", &lp)?;
                ModelSpec::farma(ar, ma, noise)?
            }
            Family::Lp => {
                unused("ar", &ar)?;
                unused("ma", &ma)?;
                ModelSpec::causal_lp(lp, noise)?
            }
            Family::Wn => {
                unused("ar", &ar)?;
                unused("ma", &ma)?;
                unused("lp", &lp)?;
                ModelSpec::white_noise(noise)
            }
        })
    }

    /// Estimator matching the model family; `None` fits `ψ̂` only.
    pub fn fit_family(&self) -> Option<FitFamily> {
        let (p, q) = (self.ar.len(), self.ma.len());
        match self.family {
            Family::Far if p > 0 => Some(FitFamily::Far { p }),
            Family::Fma if q > 0 => Some(FitFamily::Fma { q }),
            Family::Farma if p + q > 0 => Some(FitFamily::Farma { p, q }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(Box<ModelConfig>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub theta: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub gamma: Option<f64>,
}

impl TuningConfig {
    pub fn overrides(&self) -> TuningOverrides {
        TuningOverrides { l: self.l, k: self.k, theta: self.theta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Number of `ψ_j` compared against the truth.
    #[serde(default = "default_depth")]
    pub psi_depth: usize,
    /// Number of `φ_i` compared against the truth.
    #[serde(default = "default_depth")]
    pub phi_depth: usize,
}

fn default_depth() -> usize {
    3
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { psi_depth: default_depth(), phi_depth: default_depth() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("mc-out"), csv: true, json: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    pub ns: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub center: bool,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses a config; a model given by path is resolved relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        if let ModelRef::Path(p) = &cfg.model {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            cfg.model = ModelRef::Inline(Box::new(ModelConfig::load(&path)?));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.reps == 0 {
            return Err(CliError::Usage("reps must be >= 1".into()));
        }
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Usage("ns must be non-empty and strictly increasing".into()));
        }
        self.model_config()?.to_spec()?;
        Ok(())
    }

    pub fn model_config(&self) -> Result<&ModelConfig, CliError> {
        match &self.model {
            ModelRef::Inline(m) => Ok(m),
            ModelRef::Path(p) => Err(CliError::Usage(format!("model {} was not resolved", p.display()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hinv_core::Operator;

    const FAR1: &str = r#"
family = "far"
dim = 4
seed = 3
[[ar]]
hs_norm = 0.5
seed = 11
"#;

    #[test]
    fn parses_random_and_matrix_operators() {
        let m: ModelConfig = toml::from_str(FAR1).unwrap();
        let spec = m.to_spec().unwrap();
        assert_eq!(spec.ar_ops().len(), 1);
        assert!((spec.ar_ops()[0].hs_norm() - 0.5).abs() < 1e-12);
        assert_eq!(m.fit_family(), Some(FitFamily::Far { p: 1 }));

        let m: ModelConfig = toml::from_str(
            "family = \"fma\"\ndim = 2\nnoise = [1.0, 0.5]\n[[ma]]\nmatrix = [[0.3, 0.0], [0.1, 0.2]]\n",
        )
        .unwrap();
        let spec = m.to_spec().unwrap();
        assert_eq!(spec.ma_ops()[0].matrix()[(1, 0)], 0.1);
        assert_eq!(spec.noise().eig(), &[1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_models() {
        let bad: ModelConfig = toml::from_str("family = \"far\"\ndim = 1\n[[ar]]\nmatrix = [[1.5]]\n").unwrap();
        assert!(bad.to_spec().is_err());
        let bad: ModelConfig = toml::from_str("family = \"wn\"\ndim = 1\n[[ar]]\nmatrix = [[0.5]]\n").unwrap();
        assert!(bad.to_spec().is_err());
        assert!(toml::from_str::<ModelConfig>("family = \"far\"\ndim = 1\nbogus = 1\n").is_err());
    }

    #[test]
    fn experiment_validation() {
        let model = FAR1.replace("[[ar]]", "[[model.ar]]");
        let inline = format!("ns = [100, 200]\nreps = 2\n[model]\n{model}");
        let cfg = ExperimentConfig::from_toml(&inline, Path::new(".")).unwrap();
        assert_eq!(cfg.report.psi_depth, 3);
        let bad = format!("ns = [200, 100]\nreps = 2\n[model]\n{model}");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = format!("ns = [100]\nreps = 0\n[model]\n{model}");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn model_path_resolved_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.toml"), FAR1).unwrap();
        let cfg = ExperimentConfig::from_toml("model = \"m.toml\"\nns = [50]\nreps = 1\n", dir.path()).unwrap();
        assert_eq!(cfg.model_config().unwrap().dim, 4);
    }
}
