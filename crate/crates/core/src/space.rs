//! Discretized Hilbert-space algebra.
//!
//! The Hilbert space `H` is represented by its first `dim` coefficients with
//! respect to a fixed orthonormal basis, so inner products are Euclidean dot
//! products and every bounded operator is a dense `dim x dim` matrix acting
//! on coefficient vectors (`y = A x`). Operators between Cartesian powers
//! `H^m -> H^n` are [`BlockOp`]s: an `n x m` grid of `dim x dim` blocks kept
//! in one flat matrix.
//!
//! The tensor product follows the convention `x ⊗ y = <x, .> y`, which in
//! coefficients is the outer product `y xᵀ`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HinvError, Result};

/// Orthonormal basis of `L²[0,1]` used when curves are evaluated on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `1, √2 sin(2πt), √2 cos(2πt), √2 sin(4πt), ...`
    #[default]
    Fourier,
    /// `√dim · 1[t ∈ [j/dim, (j+1)/dim)]`
    IndicatorGrid,
}

/// A finite-resolution model of `H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpace {
    dim: usize,
    basis: BasisKind,
}

impl BasisSpace {
    pub fn new(dim: usize, basis: BasisKind) -> Result<Self> {
        if dim == 0 {
            return Err(HinvError::InvalidArgument("space dimension must be >= 1".into()));
        }
        Ok(Self { dim, basis })
    }

    pub fn fourier(dim: usize) -> Result<Self> {
        Self::new(dim, BasisKind::Fourier)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub(crate) fn check(&self, other: &BasisSpace) -> Result<()> {
        if self.dim != other.dim {
            return Err(HinvError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.basis != other.basis {
            return Err(HinvError::BasisMismatch);
        }
        Ok(())
    }

    /// Value of basis function `j` (0-based) at `t ∈ [0,1]`.
    pub fn basis_value(&self, j: usize, t: f64) -> f64 {
        match self.basis {
            BasisKind::Fourier => {
                if j == 0 {
                    1.0
                } else {
                    let freq = j.div_ceil(2) as f64;
                    let arg = 2.0 * PI * freq * t;
                    if j % 2 == 1 {
                        2f64.sqrt() * arg.sin()
                    } else {
                        2f64.sqrt() * arg.cos()
                    }
                }
            }
            BasisKind::IndicatorGrid => {
                let n = self.dim as f64;
                let cell = ((t * n).floor() as usize).min(self.dim - 1);
                if cell == j {
                    n.sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Evaluates the function with coefficients `coeffs` at each point of `grid`.
    pub fn evaluate(&self, coeffs: &[f64], grid: &[f64]) -> Vec<f64> {
        grid.iter()
            .map(|&t| coeffs.iter().enumerate().map(|(j, c)| c * self.basis_value(j, t)).sum())
            .collect()
    }
}

fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &'static str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(HinvError::NonFinite(what))
    }
}

/// An element of `H`, stored as its basis coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    space: BasisSpace,
    coeffs: DVector<f64>,
}

impl Curve {
    pub fn new(space: BasisSpace, coeffs: Vec<f64>) -> Result<Self> {
        Self::from_vector(space, DVector::from_vec(coeffs))
    }

    pub fn from_vector(space: BasisSpace, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(HinvError::DimensionMismatch { expected: space.dim(), found: coeffs.len() });
        }
        ensure_finite(coeffs.iter(), "curve")?;
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: BasisSpace) -> Self {
        Self { space, coeffs: DVector::zeros(space.dim()) }
    }

    /// The `j`-th basis element (0-based).
    pub fn unit(space: BasisSpace, j: usize) -> Self {
        let mut c = Self::zeros(space);
        c.coeffs[j] = 1.0;
        c
    }

    pub fn space(&self) -> BasisSpace {
        self.space
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn dot(&self, other: &Curve) -> Result<f64> {
        self.space.check(&other.space)?;
        Ok(self.coeffs.dot(&other.coeffs))
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    /// Function values on a grid of `[0,1]`.
    pub fn evaluate(&self, grid: &[f64]) -> Vec<f64> {
        self.space.evaluate(self.coeffs.as_slice(), grid)
    }
}

/// `X_k^[L] = (X_k, X_{k-1}, ..., X_{k-L+1})`, an element of `H^L`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedCurve {
    space: BasisSpace,
    depth: usize,
    coeffs: DVector<f64>,
}

impl StackedCurve {
    /// Stacks `curves` in the given order; `curves[0]` is the most recent.
    pub fn from_curves(curves: &[Curve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| HinvError::InvalidArgument("cannot stack zero curves".into()))?;
        let space = first.space;
        let d = space.dim();
        let mut coeffs = DVector::zeros(d * curves.len());
        for (b, c) in curves.iter().enumerate() {
            space.check(&c.space)?;
            coeffs.rows_mut(b * d, d).copy_from(&c.coeffs);
        }
        Ok(Self { space, depth: curves.len(), coeffs })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn block(&self, b: usize) -> Curve {
        let d = self.space.dim();
        Curve { space: self.space, coeffs: self.coeffs.rows(b * d, d).into_owned() }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }
}

/// Norm triple of an operator, all computed from singular values except `hs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub op: f64,
    pub hs: f64,
    pub nuclear: f64,
}

/// Shared view of [`LinearOp`] and [`BlockOp`] as matrices over a space.
pub trait Operator {
    fn space(&self) -> BasisSpace;
    fn matrix(&self) -> &DMatrix<f64>;
    /// Block grid shape `(rows, cols)`.
    fn block_shape(&self) -> (usize, usize);

    fn hs_norm(&self) -> f64 {
        self.matrix().norm()
    }

    fn norms(&self) -> Result<Norms> {
        norms(self)
    }
}

/// Operator, Hilbert–Schmidt and nuclear norms.
pub fn norms<O: Operator + ?Sized>(a: &O) -> Result<Norms> {
    let m = a.matrix();
    ensure_finite(m.iter(), "operator")?;
    let hs = m.norm();
    if hs == 0.0 {
        return Ok(Norms { op: 0.0, hs: 0.0, nuclear: 0.0 });
    }
    let sv = m.clone().singular_values();
    let op = sv.iter().cloned().fold(0.0, f64::max);
    let nuclear = sv.iter().sum();
    Ok(Norms { op, hs, nuclear })
}

/// A bounded operator on `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOp {
    space: BasisSpace,
    mat: DMatrix<f64>,
}

impl LinearOp {
    pub fn new(space: BasisSpace, mat: DMatrix<f64>) -> Result<Self> {
        let d = space.dim();
        if mat.nrows() != d || mat.ncols() != d {
            let found = if mat.nrows() != d { mat.nrows() } else { mat.ncols() };
            return Err(HinvError::DimensionMismatch { expected: d, found });
        }
        ensure_finite(mat.iter(), "operator")?;
        Ok(Self { space, mat })
    }

    /// Builds an operator from row-major nested rows.
    pub fn from_rows(space: BasisSpace, rows: &[Vec<f64>]) -> Result<Self> {
        let d = space.dim();
        if rows.len() != d {
            return Err(HinvError::DimensionMismatch { expected: d, found: rows.len() });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(HinvError::DimensionMismatch { expected: d, found: bad.len() });
        }
        Self::new(space, DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn zeros(space: BasisSpace) -> Self {
        Self { space, mat: DMatrix::zeros(space.dim(), space.dim()) }
    }

    pub fn identity(space: BasisSpace) -> Self {
        Self { space, mat: DMatrix::identity(space.dim(), space.dim()) }
    }

    pub fn diagonal(space: BasisSpace, diag: &[f64]) -> Result<Self> {
        if diag.len() != space.dim() {
            return Err(HinvError::DimensionMismatch { expected: space.dim(), found: diag.len() });
        }
        Self::new(space, DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn scalar(value: f64) -> Self {
        Self { space: BasisSpace { dim: 1, basis: BasisKind::Fourier }, mat: DMatrix::from_element(1, 1, value) }
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.mat.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn apply(&self, x: &Curve) -> Result<Curve> {
        self.space.check(&x.space)?;
        Ok(Curve { space: self.space, coeffs: &self.mat * &x.coeffs })
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space, mat: self.mat.transpose() }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LinearOp) -> Self {
        assert_eq!(self.space, other.space, "composing operators on different spaces");
        Self { space: self.space, mat: &self.mat * &other.mat }
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|v| *v == 0.0)
    }
}

impl Operator for LinearOp {
    fn space(&self) -> BasisSpace {
        self.space
    }
    fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }
    fn block_shape(&self) -> (usize, usize) {
        (1, 1)
    }
}

impl<'a> Add<&'a LinearOp> for &'a LinearOp {
    type Output = LinearOp;
    fn add(self, rhs: &'a LinearOp) -> LinearOp {
        assert_eq!(self.space, rhs.space, "adding operators on different spaces");
        LinearOp { space: self.space, mat: &self.mat + &rhs.mat }
    }
}

impl<'a> Sub<&'a LinearOp> for &'a LinearOp {
    type Output = LinearOp;
    fn sub(self, rhs: &'a LinearOp) -> LinearOp {
        assert_eq!(self.space, rhs.space, "subtracting operators on different spaces");
        LinearOp { space: self.space, mat: &self.mat - &rhs.mat }
    }
}

impl<'a> Mul<&'a LinearOp> for &'a LinearOp {
    type Output = LinearOp;
    fn mul(self, rhs: &'a LinearOp) -> LinearOp {
        self.compose(rhs)
    }
}

impl Mul<f64> for &LinearOp {
    type Output = LinearOp;
    fn mul(self, rhs: f64) -> LinearOp {
        LinearOp { space: self.space, mat: &self.mat * rhs }
    }
}

impl Neg for &LinearOp {
    type Output = LinearOp;
    fn neg(self) -> LinearOp {
        LinearOp { space: self.space, mat: -&self.mat }
    }
}

#[derive(Serialize, Deserialize)]
struct LinearOpRepr {
    space: BasisSpace,
    rows: Vec<Vec<f64>>,
}

impl Serialize for LinearOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LinearOpRepr { space: self.space, rows: self.rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearOp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = LinearOpRepr::deserialize(d)?;
        LinearOp::from_rows(repr.space, &repr.rows).map_err(serde::de::Error::custom)
    }
}

/// `x ⊗ y = <x, .> y`; in coefficients the matrix `y xᵀ`.
pub fn tensor_product(x: &Curve, y: &Curve) -> Result<LinearOp> {
    x.space.check(&y.space)?;
    Ok(LinearOp { space: x.space, mat: &y.coeffs * x.coeffs.transpose() })
}

/// Operator `H^cols -> H^rows` stored as one `(rows·dim) x (cols·dim)` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOp {
    space: BasisSpace,
    rows: usize,
    cols: usize,
    mat: DMatrix<f64>,
}

impl BlockOp {
    pub fn from_matrix(space: BasisSpace, rows: usize, cols: usize, mat: DMatrix<f64>) -> Result<Self> {
        let d = space.dim();
        if rows == 0 || cols == 0 {
            return Err(HinvError::RaggedBlocks("empty block grid".into()));
        }
        if mat.nrows() != rows * d {
            return Err(HinvError::DimensionMismatch { expected: rows * d, found: mat.nrows() });
        }
        if mat.ncols() != cols * d {
            return Err(HinvError::DimensionMismatch { expected: cols * d, found: mat.ncols() });
        }
        ensure_finite(mat.iter(), "block operator")?;
        Ok(Self { space, rows, cols, mat })
    }

    pub(crate) fn from_parts(space: BasisSpace, rows: usize, cols: usize, mat: DMatrix<f64>) -> Self {
        debug_assert_eq!(mat.shape(), (rows * space.dim(), cols * space.dim()));
        Self { space, rows, cols, mat }
    }

    pub fn zeros(space: BasisSpace, rows: usize, cols: usize) -> Self {
        let d = space.dim();
        Self { space, rows, cols, mat: DMatrix::zeros(rows * d, cols * d) }
    }

    pub fn identity(space: BasisSpace, n: usize) -> Self {
        let d = space.dim();
        Self { space, rows: n, cols: n, mat: DMatrix::identity(n * d, n * d) }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Block `(i, j)`, 0-based.
    pub fn block(&self, i: usize, j: usize) -> LinearOp {
        assert!(i < self.rows && j < self.cols, "block index out of range");
        let d = self.space.dim();
        LinearOp { space: self.space, mat: self.mat.view((i * d, j * d), (d, d)).into_owned() }
    }

    pub fn set_block(&mut self, i: usize, j: usize, op: &LinearOp) {
        assert!(i < self.rows && j < self.cols, "block index out of range");
        assert_eq!(self.space, op.space, "block from a different space");
        let d = self.space.dim();
        self.mat.view_mut((i * d, j * d), (d, d)).copy_from(&op.mat);
    }

    /// Blocks of a single block row, left to right.
    pub fn row_blocks(&self, i: usize) -> Vec<LinearOp> {
        (0..self.cols).map(|j| self.block(i, j)).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space, rows: self.cols, cols: self.rows, mat: self.mat.transpose() }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &BlockOp) -> Self {
        assert_eq!(self.space, other.space, "composing operators on different spaces");
        assert_eq!(self.cols, other.rows, "block shapes do not chain");
        Self { space: self.space, rows: self.rows, cols: other.cols, mat: &self.mat * &other.mat }
    }

    pub fn apply(&self, x: &StackedCurve) -> Result<StackedCurve> {
        self.space.check(&x.space)?;
        if x.depth != self.cols {
            return Err(HinvError::DimensionMismatch { expected: self.cols, found: x.depth });
        }
        Ok(StackedCurve { space: self.space, depth: self.rows, coeffs: &self.mat * &x.coeffs })
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn to_linear_op(&self) -> Option<LinearOp> {
        (self.rows == 1 && self.cols == 1).then(|| LinearOp { space: self.space, mat: self.mat.clone() })
    }
}

impl Operator for BlockOp {
    fn space(&self) -> BasisSpace {
        self.space
    }
    fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }
    fn block_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

impl From<LinearOp> for BlockOp {
    fn from(op: LinearOp) -> Self {
        Self { space: op.space, rows: 1, cols: 1, mat: op.mat }
    }
}

impl<'a> Add<&'a BlockOp> for &'a BlockOp {
    type Output = BlockOp;
    fn add(self, rhs: &'a BlockOp) -> BlockOp {
        assert_eq!((self.space, self.rows, self.cols), (rhs.space, rhs.rows, rhs.cols));
        self.with_matrix(&self.mat + &rhs.mat)
    }
}

impl<'a> Sub<&'a BlockOp> for &'a BlockOp {
    type Output = BlockOp;
    fn sub(self, rhs: &'a BlockOp) -> BlockOp {
        assert_eq!((self.space, self.rows, self.cols), (rhs.space, rhs.rows, rhs.cols));
        self.with_matrix(&self.mat - &rhs.mat)
    }
}

impl<'a> Mul<&'a BlockOp> for &'a BlockOp {
    type Output = BlockOp;
    fn mul(self, rhs: &'a BlockOp) -> BlockOp {
        self.compose(rhs)
    }
}

impl Mul<f64> for &BlockOp {
    type Output = BlockOp;
    fn mul(self, rhs: f64) -> BlockOp {
        self.with_matrix(&self.mat * rhs)
    }
}

impl BlockOp {
    fn with_matrix(&self, mat: DMatrix<f64>) -> BlockOp {
        BlockOp { space: self.space, rows: self.rows, cols: self.cols, mat }
    }
}

/// Assembles a rectangular grid of operators into one block operator.
pub fn block_assemble(grid: &[Vec<LinearOp>]) -> Result<BlockOp> {
    let rows = grid.len();
    let cols = grid.first().map(Vec::len).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(HinvError::RaggedBlocks("empty block grid".into()));
    }
    if let Some((i, r)) = grid.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(HinvError::RaggedBlocks(format!("row {i} has {} blocks, expected {cols}", r.len())));
    }
    let space = grid[0][0].space;
    let mut out = BlockOp::zeros(space, rows, cols);
    for (i, row) in grid.iter().enumerate() {
        for (j, op) in row.iter().enumerate() {
            space.check(&op.space)?;
            out.set_block(i, j, op);
        }
    }
    Ok(out)
}

/// Block `(i, j)` (0-based) of `b`.
pub fn block_extract(b: &BlockOp, i: usize, j: usize) -> Result<LinearOp> {
    if i >= b.rows {
        return Err(HinvError::OutOfRange { what: "block row", value: i, min: 0, max: b.rows - 1 });
    }
    if j >= b.cols {
        return Err(HinvError::OutOfRange { what: "block column", value: j, min: 0, max: b.cols - 1 });
    }
    Ok(b.block(i, j))
}
