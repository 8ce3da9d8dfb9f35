//! Simulation of functional white noise, causal linear processes and
//! fAR / fMA / fARMA models.
//!
//! Innovations are i.i.d. centered Gaussian curves whose coefficients are
//! independent with variances `eig_j` (a diagonal `C_ε`). Noise is drawn for
//! the output times `1..=N` first and then for pre-sample times `0, -1, ...`,
//! so models that share a seed share the innovations of the reported path.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HinvError, Result};
use crate::io;
use crate::space::{BasisSpace, Curve, LinearOp, Operator};

/// Diagonal innovation covariance and RNG seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    space: BasisSpace,
    eig: Vec<f64>,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(space: BasisSpace, eig: Vec<f64>, seed: u64) -> Result<Self> {
        if eig.len() != space.dim() {
            return Err(HinvError::DimensionMismatch { expected: space.dim(), found: eig.len() });
        }
        if eig.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(HinvError::InvalidArgument("noise eigenvalues must be positive and finite".into()));
        }
        if eig.windows(2).any(|w| w[0] < w[1]) {
            return Err(HinvError::InvalidArgument("noise eigenvalues must be sorted descending".into()));
        }
        Ok(Self { space, eig, seed })
    }

    /// `eig_j = j^{-2}`.
    pub fn inverse_square(space: BasisSpace, seed: u64) -> Self {
        let eig = (1..=space.dim()).map(|j| (j as f64).powi(-2)).collect();
        Self { space, eig, seed }
    }

    pub fn space(&self) -> BasisSpace {
        self.space
    }

    pub fn eig(&self) -> &[f64] {
        &self.eig
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// `C_ε` as an operator.
    pub fn covariance(&self) -> LinearOp {
        LinearOp::diagonal(self.space, &self.eig).expect("validated noise spec")
    }
}

/// Model family and orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelKind {
    Far { p: usize },
    Fma { q: usize },
    Farma { p: usize, q: usize },
    CausalLp { j: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    kind: ModelKind,
    ar_ops: Vec<LinearOp>,
    ma_ops: Vec<LinearOp>,
    lp_ops: Vec<LinearOp>,
    noise: NoiseSpec,
}

fn op_norm_sum(ops: &[LinearOp]) -> Result<f64> {
    ops.iter().map(|o| o.norms().map(|n| n.op)).sum()
}

impl ModelSpec {
    pub fn far(ar: Vec<LinearOp>, noise: NoiseSpec) -> Result<Self> {
        Self::build(ModelKind::Far { p: ar.len() }, ar, Vec::new(), Vec::new(), noise)
    }

    pub fn fma(ma: Vec<LinearOp>, noise: NoiseSpec) -> Result<Self> {
        Self::build(ModelKind::Fma { q: ma.len() }, Vec::new(), ma, Vec::new(), noise)
    }

    pub fn farma(ar: Vec<LinearOp>, ma: Vec<LinearOp>, noise: NoiseSpec) -> Result<Self> {
        Self::build(ModelKind::Farma { p: ar.len(), q: ma.len() }, ar, ma, Vec::new(), noise)
    }

    pub fn causal_lp(lp: Vec<LinearOp>, noise: NoiseSpec) -> Result<Self> {
        Self::build(ModelKind::CausalLp { j: lp.len() }, Vec::new(), Vec::new(), lp, noise)
    }

    /// White noise, i.e. a causal linear process without lagged terms.
    pub fn white_noise(noise: NoiseSpec) -> Self {
        Self::causal_lp(Vec::new(), noise).expect("white noise is always valid")
    }

    fn build(
        kind: ModelKind,
        ar_ops: Vec<LinearOp>,
        ma_ops: Vec<LinearOp>,
        lp_ops: Vec<LinearOp>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let spec = Self { kind, ar_ops, ma_ops, lp_ops, noise };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks operator spaces and the sufficient stationarity / invertibility bounds.
    pub fn validate(&self) -> Result<()> {
        let space = self.noise.space;
        for op in self.ar_ops.iter().chain(&self.ma_ops).chain(&self.lp_ops) {
            space.check(&op.space())?;
        }
        let ar = op_norm_sum(&self.ar_ops)?;
        if ar >= 1.0 {
            return Err(HinvError::Stationarity { what: "sum of AR operator norms", value: ar });
        }
        let ma = op_norm_sum(&self.ma_ops)?;
        if ma >= 1.0 {
            return Err(HinvError::Stationarity { what: "sum of MA operator norms", value: ma });
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn space(&self) -> BasisSpace {
        self.noise.space
    }

    pub fn ar_ops(&self) -> &[LinearOp] {
        &self.ar_ops
    }

    pub fn ma_ops(&self) -> &[LinearOp] {
        &self.ma_ops
    }

    pub fn lp_ops(&self) -> &[LinearOp] {
        &self.lp_ops
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { noise: self.noise.with_seed(seed), ..self.clone() }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("model spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Burn-in used when none is given.
    ///
    /// Recursive models use the smallest `b` with `s^{b/p} < 1e-8`,
    /// `s = Σ‖α_i‖`, but at least 500. With all `α_i = 0` the recursion has
    /// finite memory and the burn-in is the MA order (zero for fAR).
    pub fn default_burnin(&self) -> Result<usize> {
        Ok(match self.kind {
            ModelKind::Fma { .. } | ModelKind::CausalLp { .. } => 0,
            ModelKind::Far { p } | ModelKind::Farma { p, .. } => {
                let s = op_norm_sum(&self.ar_ops)?;
                if s == 0.0 || p == 0 {
                    self.ma_ops.len()
                } else {
                    let b = (p as f64 * 1e-8f64.ln() / s.ln()).floor() as usize + 1;
                    b.max(500)
                }
            }
        })
    }
}

/// Where a simulated path came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: String,
    pub seed: u64,
    pub burnin: usize,
    pub model: ModelSpec,
}

/// `N` curves `X_1, ..., X_N`, stored as the columns of a `dim x N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    space: BasisSpace,
    data: DMatrix<f64>,
    provenance: Option<Provenance>,
}

impl SamplePath {
    pub fn new(space: BasisSpace, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != space.dim() {
            return Err(HinvError::DimensionMismatch { expected: space.dim(), found: data.nrows() });
        }
        if data.ncols() == 0 {
            return Err(HinvError::InvalidArgument("a sample path needs at least one curve".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(HinvError::NonFinite("sample path"));
        }
        Ok(Self { space, data, provenance: None })
    }

    pub fn from_curves(curves: &[Curve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| HinvError::InvalidArgument("a sample path needs at least one curve".into()))?;
        let space = first.space();
        for c in curves {
            space.check(&c.space())?;
        }
        let cols: Vec<_> = curves.iter().map(|c| c.coeffs().clone()).collect();
        Self::new(space, DMatrix::from_columns(&cols))
    }

    /// Scalar (`dim = 1`) path from plain values.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(BasisSpace::fourier(1)?, DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn space(&self) -> BasisSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Curve at 0-based time index `k`.
    pub fn curve(&self, k: usize) -> Curve {
        Curve::from_vector(self.space, self.data.column(k).into_owned()).expect("finite by construction")
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.data.column_mean()
    }

    /// Path with the sample mean curve subtracted.
    pub fn centered(&self) -> Self {
        let mean = self.mean();
        let mut data = self.data.clone();
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }
        Self { space: self.space, data, provenance: self.provenance.clone() }
    }

    /// CSV with one row per time index and `dim` columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_matrix_csv(path, &self.data.transpose())
    }

    pub fn read_csv(path: impl AsRef<Path>, space: Option<BasisSpace>) -> Result<Self> {
        let m = io::read_matrix_csv(path)?;
        let space = match space {
            Some(s) => s,
            None => BasisSpace::fourier(m.ncols())?,
        };
        Self::new(space, m.transpose())
    }

    /// JSON sidecar holding the provenance record.
    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&serde_json::json!({
            "space": self.space,
            "n": self.len(),
            "provenance": self.provenance,
        }))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

fn draw_noise(spec: &NoiseSpec, count: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let sd: Vec<f64> = spec.eig.iter().map(|v| v.sqrt()).collect();
    let d = spec.space.dim();
    let mut out = DMatrix::zeros(d, count);
    for k in 0..count {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            out[(j, k)] = sd[j] * z;
        }
    }
    out
}

/// `N` i.i.d. Gaussian curves with covariance `diag(eig)`.
pub fn draw_white_noise(spec: &NoiseSpec, n: usize) -> Result<SamplePath> {
    if n == 0 {
        return Err(HinvError::InvalidArgument("N must be >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    SamplePath::new(spec.space, draw_noise(spec, n, &mut rng))
}

/// Simulates `N` curves of `model` after `burnin` discarded steps (default
/// [`ModelSpec::default_burnin`]). Recursions start from a zero state; fMA
/// and causal linear processes are computed exactly from their finite memory.
pub fn simulate(model: &ModelSpec, n: usize, burnin: Option<usize>) -> Result<SamplePath> {
    model.validate()?;
    if n == 0 {
        return Err(HinvError::InvalidArgument("N must be >= 1".into()));
    }
    let burnin = match burnin {
        Some(b) => b,
        None => model.default_burnin()?,
    };
    let memory = match model.kind {
        ModelKind::Fma { .. } => model.ma_ops.len(),
        ModelKind::CausalLp { .. } => model.lp_ops.len(),
        ModelKind::Far { .. } | ModelKind::Farma { .. } => burnin,
    };

    let mut rng = ChaCha20Rng::seed_from_u64(model.noise.seed);
    let main = draw_noise(&model.noise, n, &mut rng);
    let pre = draw_noise(&model.noise, memory, &mut rng);
    let d = model.space().dim();
    // Column t of `eps` holds time t + 1 - memory; pre-sample draws run backwards in time.
    let mut eps = DMatrix::zeros(d, memory + n);
    for i in 0..memory {
        eps.set_column(memory - 1 - i, &pre.column(i));
    }
    eps.columns_mut(memory, n).copy_from(&main);

    let total = memory + n;
    let data = match model.kind {
        ModelKind::Fma { .. } | ModelKind::CausalLp { .. } => {
            let ops = if matches!(model.kind, ModelKind::Fma { .. }) { &model.ma_ops } else { &model.lp_ops };
            let mut out = DMatrix::zeros(d, n);
            for t in memory..total {
                let mut x = eps.column(t).into_owned();
                for (j, op) in ops.iter().enumerate() {
                    x += op.matrix() * eps.column(t - j - 1);
                }
                out.set_column(t - memory, &x);
            }
            out
        }
        ModelKind::Far { .. } | ModelKind::Farma { .. } => {
            let mut xs = DMatrix::zeros(d, total);
            for t in 0..total {
                let mut x = eps.column(t).into_owned();
                for (i, op) in model.ar_ops.iter().enumerate() {
                    if t > i {
                        x += op.matrix() * xs.column(t - i - 1);
                    }
                }
                for (j, op) in model.ma_ops.iter().enumerate() {
                    if t > j {
                        x += op.matrix() * eps.column(t - j - 1);
                    }
                }
                xs.set_column(t, &x);
            }
            xs.columns(memory, n).into_owned()
        }
    };
    let mut path = SamplePath::new(model.space(), data)?;
    path.provenance = Some(Provenance {
        model_hash: model.fingerprint(),
        seed: model.noise.seed,
        burnin,
        model: model.clone(),
    });
    Ok(path)
}

/// Random operator with entries `z_ij / (i j)` (1-based, `z_ij` standard
/// normal), rescaled to Hilbert–Schmidt norm `target_hs_norm`.
pub fn random_hs_operator(space: BasisSpace, target_hs_norm: f64, seed: u64) -> Result<LinearOp> {
    if !(target_hs_norm > 0.0 && target_hs_norm.is_finite()) {
        return Err(HinvError::InvalidArgument(format!("target HS norm must be positive, got {target_hs_norm}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = z / ((i + 1) * (j + 1)) as f64;
        }
    }
    let hs = m.norm();
    if hs == 0.0 {
        return Err(HinvError::InvalidArgument("degenerate random draw".into()));
    }
    LinearOp::new(space, m * (target_hs_norm / hs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sp(d: usize) -> BasisSpace {
        BasisSpace::fourier(d).unwrap()
    }

    fn scalar_noise(seed: u64) -> NoiseSpec {
        NoiseSpec::new(sp(1), vec![1.0], seed).unwrap()
    }

    fn lag_stats(path: &SamplePath) -> (f64, f64) {
        let x: Vec<f64> = path.data().row(0).iter().copied().collect();
        let n = x.len() as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / n;
        let lag1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        (var, lag1)
    }

    #[test]
    fn white_noise_variance_and_independence() {
        let p = draw_white_noise(&scalar_noise(1), 100_000).unwrap();
        let (var, _) = lag_stats(&p);
        assert!((var - 1.0).abs() < 0.05, "var {var}");

        let spec = NoiseSpec::new(sp(2), vec![1.0, 0.25], 2).unwrap();
        let p = draw_white_noise(&spec, 100_000).unwrap();
        let cross = p.data().row(0).dot(&p.data().row(1)) / 100_000.0;
        assert!(cross.abs() <= 0.02, "cross {cross}");
        let v2 = p.data().row(1).norm_squared() / 100_000.0;
        assert!((v2 - 0.25).abs() < 0.0125);
    }

    #[test]
    fn white_noise_is_deterministic() {
        let spec = NoiseSpec::inverse_square(sp(4), 99);
        assert_eq!(draw_white_noise(&spec, 50).unwrap(), draw_white_noise(&spec, 50).unwrap());
        assert_ne!(draw_white_noise(&spec, 50).unwrap(), draw_white_noise(&spec.with_seed(100), 50).unwrap());
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::new(sp(2), vec![1.0], 0).is_err());
        assert!(NoiseSpec::new(sp(2), vec![1.0, 0.0], 0).is_err());
        assert!(NoiseSpec::new(sp(2), vec![0.5, 1.0], 0).is_err());
    }

    #[test]
    fn fma1_moments() {
        let m = ModelSpec::fma(vec![LinearOp::scalar(0.5)], scalar_noise(3)).unwrap();
        let (var, lag1) = lag_stats(&simulate(&m, 200_000, None).unwrap());
        assert!((var / 1.25 - 1.0).abs() < 0.03, "var {var}");
        assert!((lag1 / 0.5 - 1.0).abs() < 0.03, "lag1 {lag1}");
    }

    #[test]
    fn far1_moments() {
        let m = ModelSpec::far(vec![LinearOp::scalar(0.5)], scalar_noise(4)).unwrap();
        let (var, lag1) = lag_stats(&simulate(&m, 200_000, None).unwrap());
        assert!((var / (4.0 / 3.0) - 1.0).abs() < 0.03, "var {var}");
        assert!((lag1 / (2.0 / 3.0) - 1.0).abs() < 0.03, "lag1 {lag1}");
    }

    #[test]
    fn degenerate_models_reproduce_simpler_paths() {
        let s = sp(3);
        let noise = NoiseSpec::inverse_square(s, 17);
        let wn = draw_white_noise(&noise, 300).unwrap();
        let zero = LinearOp::zeros(s);

        let far0 = simulate(&ModelSpec::far(vec![zero.clone()], noise.clone()).unwrap(), 300, None).unwrap();
        assert_eq!(far0.data(), wn.data());
        let lp0 = simulate(&ModelSpec::causal_lp(vec![zero.clone(); 3], noise.clone()).unwrap(), 300, None).unwrap();
        assert_eq!(lp0.data(), wn.data());

        let a = random_hs_operator(s, 0.4, 1).unwrap();
        let b = random_hs_operator(s, 0.3, 2).unwrap();
        let far = simulate(&ModelSpec::far(vec![a.clone()], noise.clone()).unwrap(), 300, None).unwrap();
        let farma_b0 =
            simulate(&ModelSpec::farma(vec![a.clone()], vec![zero.clone()], noise.clone()).unwrap(), 300, None).unwrap();
        assert_eq!(far.data(), farma_b0.data());

        let fma = simulate(&ModelSpec::fma(vec![b.clone()], noise.clone()).unwrap(), 300, None).unwrap();
        let farma_a0 = simulate(&ModelSpec::farma(vec![zero], vec![b], noise).unwrap(), 300, None).unwrap();
        assert_eq!(fma.data(), farma_a0.data());
    }

    #[test]
    fn stationarity_is_enforced() {
        let err = ModelSpec::far(vec![LinearOp::scalar(0.6), LinearOp::scalar(0.5)], scalar_noise(0));
        match err {
            Err(HinvError::Stationarity { what, value }) => {
                assert!(what.contains("AR"));
                assert_abs_diff_eq!(value, 1.1, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ModelSpec::fma(vec![LinearOp::scalar(-1.0)], scalar_noise(0)).is_err());
    }

    #[test]
    fn burnin_rule() {
        let m = ModelSpec::far(vec![LinearOp::scalar(0.5)], scalar_noise(0)).unwrap();
        assert_eq!(m.default_burnin().unwrap(), 500);
        let m = ModelSpec::far(vec![LinearOp::scalar(0.99)], scalar_noise(0)).unwrap();
        let b = m.default_burnin().unwrap();
        assert!(0.99f64.powi(b as i32) < 1e-8 && 0.99f64.powi(b as i32 - 1) >= 1e-8);
        let m = ModelSpec::fma(vec![LinearOp::scalar(0.5)], scalar_noise(0)).unwrap();
        assert_eq!(m.default_burnin().unwrap(), 0);
        let p = simulate(&m, 10, None).unwrap();
        assert_eq!(p.provenance().unwrap().burnin, 0);
    }

    #[test]
    fn long_far_path_is_stationary() {
        let s = sp(4);
        let a = random_hs_operator(s, 0.7, 5).unwrap();
        let m = ModelSpec::far(vec![a], NoiseSpec::inverse_square(s, 6)).unwrap();
        let p = simulate(&m, 100_000, None).unwrap();
        let row = p.data().row(0);
        let half = 50_000;
        let v1 = row.columns(0, half).norm_squared() / half as f64;
        let v2 = row.columns(half, half).norm_squared() / half as f64;
        assert!((v1 / v2 - 1.0).abs() < 0.05, "{v1} vs {v2}");
    }

    #[test]
    fn random_operator_properties() {
        let s = sp(4);
        let a = random_hs_operator(s, 1.0, 1).unwrap();
        assert_abs_diff_eq!(a.hs_norm(), 1.0, epsilon = 1e-12);
        assert_ne!(a, random_hs_operator(s, 1.0, 2).unwrap());
        assert!(random_hs_operator(s, 0.0, 1).is_err());
        for seed in 0..100 {
            let n = random_hs_operator(sp(6), 0.8, seed).unwrap().norms().unwrap();
            assert!(n.op <= n.hs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn centering_and_csv() {
        let p = SamplePath::scalar(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.centered().data().row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let m = ModelSpec::far(vec![LinearOp::scalar(0.3)], scalar_noise(7)).unwrap();
        let p = simulate(&m, 25, None).unwrap();
        let path = dir.path().join("s.csv");
        p.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 25);
        assert_eq!(SamplePath::read_csv(&path, None).unwrap().data(), p.data());
        p.write_sidecar(dir.path().join("s.json")).unwrap();
    }
}
