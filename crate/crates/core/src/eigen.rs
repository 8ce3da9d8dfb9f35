//! Symmetric eigendecomposition, eigen-gap statistics, Tikhonov resolvents
//! and spectral projectors.
//!
//! Eigenvalues are sorted in descending order. Each eigenvector is normalized
//! so that its first nonzero entry is positive; exactly equal eigenvalues are
//! ordered by the lexicographically larger (normalized) eigenvector.
//!
//! Gap statistics treat the spectrum as extended by zeros, i.e. `λ_{n+1} = 0`
//! for an `n`-dimensional operator: in the discretized space every further
//! eigenvalue of a PSD operator vanishes.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{HinvError, Result};
use crate::space::{BasisSpace, BlockOp, Operator};

/// Relative asymmetry tolerated before symmetrization.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Gaps below `DEGENERATE_GAP · λ_1` mark the spectrum as degenerate.
pub const DEGENERATE_GAP: f64 = 1e-12;
/// Negative eigenvalues down to `-PSD_TOL · max|λ|` count as round-off.
pub const PSD_TOL: f64 = 1e-8;

/// Eigen-gap statistics for the leading `k` eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub k: usize,
    /// `Λ_k = max_{j≤k} (λ_j − λ_{j+1})^{-1}`; `None` when degenerate.
    pub lambda_k: Option<f64>,
    /// `α_1 = λ_1 − λ_2`, `α_j = min(λ_{j−1} − λ_j, λ_j − λ_{j+1})`.
    pub alphas: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    space: BasisSpace,
    blocks: usize,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    gaps: GapStats,
    k_clamped: bool,
    clamped_mass: f64,
}

impl EigenSystem {
    pub fn space(&self) -> BasisSpace {
        self.space
    }

    /// Number of `H` blocks of the decomposed operator.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Orthonormal eigenvectors as columns, aligned with [`values`](Self::values).
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn gaps(&self) -> &GapStats {
        &self.gaps
    }

    /// True when the requested `k_max` exceeded the dimension.
    pub fn k_clamped(&self) -> bool {
        self.k_clamped
    }

    /// Sum of the magnitudes of negative eigenvalues zeroed by [`clamp_psd`](Self::clamp_psd).
    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn trace(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Zeroes negative (round-off) eigenvalues, failing if any is beyond [`PSD_TOL`].
    pub fn clamp_psd(mut self) -> Result<Self> {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut mass = 0.0;
        for v in &mut self.values {
            if *v < 0.0 {
                if *v < -PSD_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(HinvError::NotPsd(*v));
                }
                mass += -*v;
                *v = 0.0;
            }
        }
        self.clamped_mass += mass;
        self.gaps = eigen_gap_stats(&self, self.gaps.k)?;
        Ok(self)
    }

    /// Returns a copy with the sign of eigenvector `j` flipped.
    pub fn with_flipped_sign(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.vectors.column_mut(j).neg_mut();
        out
    }
}

/// Full symmetric eigendecomposition of `a`, with gap statistics for `j ≤ k_max`.
pub fn sym_eigen<O: Operator + ?Sized>(a: &O, k_max: usize) -> Result<EigenSystem> {
    let (rows, cols) = a.block_shape();
    if rows != cols {
        return Err(HinvError::DimensionMismatch { expected: rows, found: cols });
    }
    let m = a.matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HinvError::NonFinite("operator"));
    }
    let scale = m.norm();
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * scale {
        return Err(HinvError::NotSymmetric(asym / scale));
    }
    let sym = (m + m.transpose()) * 0.5;
    let n = sym.nrows();
    let SymmetricEigen { eigenvalues, mut eigenvectors } = SymmetricEigen::new(sym);

    for mut col in eigenvectors.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
        let first = col.iter().copied().find(|v| v.abs() > f64::EPSILON).unwrap_or(0.0);
        if first < 0.0 {
            col.neg_mut();
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap_or(Ordering::Equal).then_with(|| {
            let (ci, cj) = (eigenvectors.column(i), eigenvectors.column(j));
            cj.iter()
                .zip(ci.iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    let values: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eigenvectors.column(i)).collect::<Vec<_>>());

    let k_clamped = k_max > n;
    let k = k_max.clamp(1, n);
    let mut es = EigenSystem {
        space: a.space(),
        blocks: rows,
        values,
        vectors,
        gaps: GapStats { k, lambda_k: None, alphas: Vec::new(), degenerate: false },
        k_clamped,
        clamped_mass: 0.0,
    };
    es.gaps = eigen_gap_stats(&es, k)?;
    Ok(es)
}

/// Eigendecomposition of an operator that is PSD by construction, with
/// round-off negative eigenvalues clamped to zero.
pub fn psd_eigen<O: Operator + ?Sized>(a: &O, k_max: usize) -> Result<EigenSystem> {
    sym_eigen(a, k_max)?.clamp_psd()
}

/// `Λ_K`, the gaps `α_j` and the degeneracy flag for `1 ≤ K ≤ n`.
pub fn eigen_gap_stats(es: &EigenSystem, k: usize) -> Result<GapStats> {
    let n = es.values.len();
    if k == 0 || k > n {
        return Err(HinvError::OutOfRange { what: "K", value: k, min: 1, max: n });
    }
    let lam = |j: usize| if j < n { es.values[j] } else { 0.0 };
    let lead = lam(0);
    let diffs: Vec<f64> = (0..k).map(|j| lam(j) - lam(j + 1)).collect();
    let degenerate = lead <= 0.0 || diffs.iter().any(|g| *g < DEGENERATE_GAP * lead);
    let alphas = (0..k)
        .map(|j| if j == 0 { diffs[0] } else { (lam(j - 1) - lam(j)).min(diffs[j]) })
        .collect();
    let lambda_k = (!degenerate).then(|| diffs.iter().map(|g| g.recip()).fold(0.0, f64::max));
    Ok(GapStats { k, lambda_k, alphas, degenerate })
}

fn spectral_sum(es: &EigenSystem, count: usize, weight: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = es.vectors.columns(0, count);
    let w = DVector::from_iterator(count, es.values[..count].iter().map(|&l| weight(l)));
    let scaled = DMatrix::from_fn(v.nrows(), count, |i, j| v[(i, j)] * w[j]);
    scaled * v.transpose()
}

/// `(A + θI)^{-1}` for symmetric PSD `a`.
pub fn ridge_resolvent<O: Operator + ?Sized>(a: &O, theta: f64) -> Result<BlockOp> {
    check_theta(theta)?;
    let es = psd_eigen(a, 1)?;
    ridge_resolvent_eigen(&es, theta)
}

/// `(A + θI)^{-1}` assembled from an existing decomposition of `A`.
pub fn ridge_resolvent_eigen(es: &EigenSystem, theta: f64) -> Result<BlockOp> {
    check_theta(theta)?;
    let mat = spectral_sum(es, es.len(), |l| (l + theta).recip());
    Ok(BlockOp::from_parts(es.space, es.blocks, es.blocks, mat))
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(HinvError::InvalidArgument(format!("regularization parameter must be positive, got {theta}")))
    }
}

/// Orthogonal projector onto the span of the leading `k` eigenvectors.
pub fn spectral_projector(es: &EigenSystem, k: usize) -> Result<BlockOp> {
    let n = es.len();
    if k == 0 || k > n {
        return Err(HinvError::OutOfRange { what: "K", value: k, min: 1, max: n });
    }
    let v = es.vectors.columns(0, k);
    let mat = v * v.transpose();
    Ok(BlockOp::from_parts(es.space, es.blocks, es.blocks, mat))
}

/// Smallest `k` whose leading eigenvalues capture `fraction` of the trace,
/// capped so that `λ_k ≥ rel_floor · λ_1`.
pub fn trace_fraction_rank(values: &[f64], fraction: f64, rel_floor: f64) -> usize {
    let total: f64 = values.iter().filter(|v| **v > 0.0).sum();
    if values.is_empty() || total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    let mut k = values.len();
    for (j, v) in values.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= fraction * total {
            k = j + 1;
            break;
        }
    }
    let floor = rel_floor * values[0];
    let cap = values.iter().take_while(|v| **v >= floor).count().max(1);
    k.min(cap)
}
