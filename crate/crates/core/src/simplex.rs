//! Simplex geometry: closure, the Helmert sub-matrix, the alpha-transformation
//! family with its log-ratio limits, and the twice-KL fit divergence.
//!
//! Row-level operations work on [`Composition`]; the batch variants operate on
//! the rows of a [`CompositionBatch`] and reuse one Helmert matrix per call.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CodaError, Result};

/// Parts of a closed composition must sum to one within this tolerance.
pub const CLOSURE_TOL: f64 = 1e-9;

/// A point on the simplex: `D >= 2` nonnegative parts summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    parts: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl Composition {
    /// Validates `parts` and re-closes them when the sum drifts from one.
    pub fn new(parts: Vec<f64>) -> Result<Self> {
        let closed = close(&parts)?;
        Ok(closed)
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(CodaError::InvalidDimension(format!(
                "a composition needs at least 2 parts, got {dim}"
            )));
        }
        Ok(Self {
            parts: vec![1.0 / dim as f64; dim],
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.parts.len() {
            return Err(CodaError::DimensionMismatch(format!(
                "{} labels for {} parts",
                labels.len(),
                self.parts.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.parts.len()
    }

    pub fn has_zero(&self) -> bool {
        self.parts.contains(&0.0)
    }

    pub fn into_parts(self) -> Vec<f64> {
        self.parts
    }
}

/// Rescales a nonnegative vector so that it sums to one.
pub fn close(raw: &[f64]) -> Result<Composition> {
    if raw.len() < 2 {
        return Err(CodaError::InvalidDimension(format!(
            "a composition needs at least 2 parts, got {}",
            raw.len()
        )));
    }
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(CodaError::NegativePart { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(CodaError::AllZeroVector);
    }
    let parts = raw.iter().map(|v| v / total).collect();
    Ok(Composition {
        parts,
        labels: None,
    })
}

/// `n` compositions sharing dimension and component labels, stored row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionBatch {
    parts: DMatrix<f64>,
    labels: Vec<String>,
}

fn default_labels(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

impl CompositionBatch {
    /// Builds a batch from raw rows, closing every row.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(CodaError::TooFewRows(
                "a batch needs at least one row".into(),
            ));
        }
        let dim = rows[0].len();
        let mut parts = DMatrix::zeros(n, dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(CodaError::DimensionMismatch(format!(
                    "row {i} has {} parts, expected {dim}",
                    row.len()
                )));
            }
            let closed = close(row)?;
            for (j, v) in closed.parts.iter().enumerate() {
                parts[(i, j)] = *v;
            }
        }
        Self::with_labels(parts, labels)
    }

    /// Builds a batch from an `n x D` matrix, closing every row.
    pub fn from_matrix(raw: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = raw
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self::from_rows(&rows, labels)
    }

    fn with_labels(parts: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let dim = parts.ncols();
        let labels = labels.unwrap_or_else(|| default_labels(dim));
        if labels.len() != dim {
            return Err(CodaError::DimensionMismatch(format!(
                "{} labels for {dim} components",
                labels.len()
            )));
        }
        Ok(Self { parts, labels })
    }

    pub fn from_compositions(rows: &[Composition]) -> Result<Self> {
        let raw: Vec<Vec<f64>> = rows.iter().map(|c| c.parts.clone()).collect();
        let labels = rows.first().and_then(|c| c.labels.clone());
        Self::from_rows(&raw, labels)
    }

    pub fn n(&self) -> usize {
        self.parts.nrows()
    }

    pub fn dim(&self) -> usize {
        self.parts.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn parts(&self) -> &DMatrix<f64> {
        &self.parts
    }

    pub fn value(&self, row: usize, component: usize) -> f64 {
        self.parts[(row, component)]
    }

    pub fn row_vec(&self, row: usize) -> Vec<f64> {
        self.parts.row(row).iter().copied().collect()
    }

    pub fn row(&self, row: usize) -> Composition {
        Composition {
            parts: self.row_vec(row),
            labels: Some(self.labels.clone()),
        }
    }

    pub fn has_zero(&self) -> bool {
        self.parts.iter().any(|&p| p == 0.0)
    }

    /// First zero cell in row-major order, if any.
    pub fn first_zero(&self) -> Option<(usize, usize)> {
        for i in 0..self.n() {
            for j in 0..self.dim() {
                if self.parts[(i, j)] == 0.0 {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let parts = DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.parts[(rows[i], j)]);
        Self {
            parts,
            labels: self.labels.clone(),
        }
    }
}

/// The power parameter of the alpha-transformation, restricted to `[-1, 1]`.
///
/// Zero is a valid value: it names the log-ratio limit, which callers reach
/// through [`transform_batch`] or the explicit log-ratio functions.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AlphaParam(f64);

impl AlphaParam {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
            return Err(CodaError::AlphaOutOfRange(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    /// Rejects non-positive alpha for data that contain zero parts.
    pub fn check_zeros(self, has_zero: bool) -> Result<()> {
        if has_zero && self.0 <= 0.0 {
            return Err(CodaError::ZeroWithNonpositiveAlpha(self.0));
        }
        Ok(())
    }
}

impl TryFrom<f64> for AlphaParam {
    type Error = CodaError;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<AlphaParam> for f64 {
    fn from(a: AlphaParam) -> f64 {
        a.0
    }
}

/// Which member of the transformation family produced a set of coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "snake_case")]
pub enum TransformKind {
    Alpha(AlphaParam),
    Ilr,
}

impl TransformKind {
    /// `alpha = 0` selects the isometric log-ratio limit.
    pub fn from_alpha(alpha: AlphaParam) -> Self {
        if alpha.is_zero() {
            TransformKind::Ilr
        } else {
            TransformKind::Alpha(alpha)
        }
    }

    pub fn alpha_value(self) -> f64 {
        match self {
            TransformKind::Alpha(a) => a.value(),
            TransformKind::Ilr => 0.0,
        }
    }
}

/// Coordinates of a batch in `R^d` after an alpha or ilr transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedBatch {
    pub coords: DMatrix<f64>,
    pub kind: TransformKind,
    pub source_labels: Vec<String>,
}

/// The `(D-1) x D` Helmert sub-matrix: the Helmert matrix without its
/// constant first row. Row `k` has `k` entries `1/sqrt(k(k+1))`, then
/// `-k/sqrt(k(k+1))`, then zeros.
pub fn helmert_submatrix(dim: usize) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(CodaError::InvalidDimension(format!(
            "Helmert sub-matrix needs D >= 2, got {dim}"
        )));
    }
    let mut h = DMatrix::zeros(dim - 1, dim);
    for k in 1..dim {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            h[(k - 1, j)] = 1.0 / norm;
        }
        h[(k - 1, k)] = -(k as f64) / norm;
    }
    Ok(h)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(CodaError::InvalidDimension(format!(
            "a composition needs at least 2 parts, got {dim}"
        )));
    }
    Ok(())
}

/// `u_i = x_i^a / sum_j x_j^a`, evaluated in log space.
fn power_parts(parts: &[f64], alpha: f64) -> Vec<f64> {
    let scaled: Vec<f64> = parts
        .iter()
        .map(|&x| {
            if x == 0.0 {
                f64::NEG_INFINITY
            } else {
                alpha * x.ln()
            }
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let expd: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = expd.iter().sum();
    expd.into_iter().map(|e| e / total).collect()
}

/// Power transformation `x -> C(x^alpha)`; the result stays on the simplex.
pub fn power_transform(x: &Composition, alpha: AlphaParam) -> Result<Composition> {
    alpha.check_zeros(x.has_zero())?;
    Ok(Composition {
        parts: power_parts(&x.parts, alpha.value()),
        labels: x.labels.clone(),
    })
}

/// `(D u - 1) / alpha` for one row, written with `expm1` so that it stays
/// accurate as alpha approaches zero.
fn centered_power(parts: &[f64], alpha: f64) -> Vec<f64> {
    let u = power_parts(parts, alpha);
    let logs: Vec<f64> = parts.iter().map(|&x| x.ln()).collect();
    (0..parts.len())
        .map(|i| {
            if parts[i] == 0.0 {
                return -1.0 / alpha;
            }
            let acc: f64 = logs
                .iter()
                .map(|&lj| (alpha * (lj - logs[i])).exp_m1())
                .sum();
            -u[i] * acc / alpha
        })
        .collect()
}

fn apply_helmert(h: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
    h * DVector::from_column_slice(w)
}

pub(crate) fn alpha_row(parts: &[f64], alpha: f64, h: &DMatrix<f64>) -> DVector<f64> {
    apply_helmert(h, &centered_power(parts, alpha))
}

fn ilr_row(parts: &[f64], h: &DMatrix<f64>) -> DVector<f64> {
    let logs: Vec<f64> = parts.iter().map(|x| x.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let centered: Vec<f64> = logs.iter().map(|l| l - mean).collect();
    apply_helmert(h, &centered)
}

/// `z = (1/alpha) H (D u - j_D)` with `u` the power-transformed composition.
pub fn alpha_transform(x: &Composition, alpha: AlphaParam) -> Result<DVector<f64>> {
    check_dim(x.dim())?;
    if alpha.is_zero() {
        return Err(CodaError::AlphaIsZero);
    }
    alpha.check_zeros(x.has_zero())?;
    let h = helmert_submatrix(x.dim())?;
    Ok(alpha_row(&x.parts, alpha.value(), &h))
}

fn inverse_alpha_row(z: &DVector<f64>, alpha: f64, h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let dim = h.ncols() as f64;
    let u = (h.transpose() * z * alpha).add_scalar(1.0) / dim;
    let mut raw = Vec::with_capacity(u.len());
    for &ui in u.iter() {
        // tolerate round-off at the boundary of the image
        let ui = if ui < 0.0 && ui > -1e-12 { 0.0 } else { ui };
        if ui < 0.0 || !ui.is_finite() || (alpha < 0.0 && ui == 0.0) {
            return Err(CodaError::OutOfRange);
        }
        raw.push(ui);
    }
    let inv = 1.0 / alpha;
    let logs: Vec<f64> = raw
        .iter()
        .map(|&u| {
            if u == 0.0 {
                f64::NEG_INFINITY
            } else {
                inv * u.ln()
            }
        })
        .collect();
    Ok(softmax_close(&logs))
}

/// Maps alpha-transformed coordinates back onto the simplex.
pub fn inverse_alpha_transform(z: &DVector<f64>, alpha: AlphaParam) -> Result<Composition> {
    if alpha.is_zero() {
        return Err(CodaError::AlphaIsZero);
    }
    let h = helmert_submatrix(z.len() + 1)?;
    Ok(Composition {
        parts: inverse_alpha_row(z, alpha.value(), &h)?,
        labels: None,
    })
}

fn require_positive(x: &Composition, row: usize) -> Result<()> {
    if let Some(component) = x.parts.iter().position(|&p| p == 0.0) {
        return Err(CodaError::ZeroPart { row, component });
    }
    Ok(())
}

/// Isometric log-ratio coordinates `H (log x - mean(log x))`.
pub fn ilr(x: &Composition) -> Result<DVector<f64>> {
    check_dim(x.dim())?;
    require_positive(x, 0)?;
    let h = helmert_submatrix(x.dim())?;
    Ok(ilr_row(&x.parts, &h))
}

fn softmax_close(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub fn inverse_ilr(v: &DVector<f64>) -> Result<Composition> {
    let h = helmert_submatrix(v.len() + 1)?;
    let logs = h.transpose() * v;
    Ok(Composition {
        parts: softmax_close(logs.as_slice()),
        labels: None,
    })
}

fn check_divisor(divisor: usize, dim: usize) -> Result<()> {
    if divisor >= dim {
        return Err(CodaError::InvalidArgument(format!(
            "divisor index {divisor} out of range for {dim} components"
        )));
    }
    Ok(())
}

/// Additive log-ratios `log(x_i / x_divisor)`, skipping the divisor.
pub fn alr(x: &Composition, divisor: usize) -> Result<DVector<f64>> {
    check_dim(x.dim())?;
    check_divisor(divisor, x.dim())?;
    require_positive(x, 0)?;
    let base = x.parts[divisor].ln();
    let coords: Vec<f64> = x
        .parts
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != divisor)
        .map(|(_, p)| p.ln() - base)
        .collect();
    Ok(DVector::from_vec(coords))
}

pub fn inverse_alr(z: &DVector<f64>, divisor: usize) -> Result<Composition> {
    let dim = z.len() + 1;
    check_divisor(divisor, dim)?;
    let mut logs = Vec::with_capacity(dim);
    let mut it = z.iter();
    for i in 0..dim {
        if i == divisor {
            logs.push(0.0);
        } else {
            logs.push(*it.next().expect("length checked"));
        }
    }
    Ok(Composition {
        parts: softmax_close(&logs),
        labels: None,
    })
}

/// Twice the Kullback-Leibler divergence of fitted from observed
/// compositions, `2 sum_ij y_ij log(y_ij / yhat_ij)`, with `0 log 0 = 0`.
pub fn kl_fit_divergence(observed: &CompositionBatch, fitted: &CompositionBatch) -> Result<f64> {
    if observed.n() != fitted.n() || observed.dim() != fitted.dim() {
        return Err(CodaError::DimensionMismatch(format!(
            "observed is {}x{}, fitted is {}x{}",
            observed.n(),
            observed.dim(),
            fitted.n(),
            fitted.dim()
        )));
    }
    let mut total = 0.0;
    for i in 0..observed.n() {
        for j in 0..observed.dim() {
            let y = observed.value(i, j);
            if y == 0.0 {
                continue;
            }
            let yhat = fitted.value(i, j);
            if yhat <= 0.0 {
                return Err(CodaError::FittedZero {
                    row: i,
                    component: j,
                });
            }
            total += y * (y / yhat).ln();
        }
    }
    Ok((2.0 * total).max(0.0))
}

/// Transforms every row of a batch: alpha-transformation for `alpha != 0`,
/// ilr for `alpha == 0`.
pub fn transform_batch(batch: &CompositionBatch, alpha: AlphaParam) -> Result<TransformedBatch> {
    check_dim(batch.dim())?;
    let kind = TransformKind::from_alpha(alpha);
    let h = helmert_submatrix(batch.dim())?;
    let d = batch.dim() - 1;
    let mut coords = DMatrix::zeros(batch.n(), d);
    match kind {
        TransformKind::Alpha(a) => {
            a.check_zeros(batch.has_zero())?;
            for i in 0..batch.n() {
                let z = alpha_row(&batch.row_vec(i), a.value(), &h);
                coords.set_row(i, &z.transpose());
            }
        }
        TransformKind::Ilr => {
            if let Some((row, component)) = batch.first_zero() {
                return Err(CodaError::ZeroPart { row, component });
            }
            for i in 0..batch.n() {
                let z = ilr_row(&batch.row_vec(i), &h);
                coords.set_row(i, &z.transpose());
            }
        }
    }
    Ok(TransformedBatch {
        coords,
        kind,
        source_labels: batch.labels().to_vec(),
    })
}

/// Inverse of [`transform_batch`].
pub fn inverse_transform_batch(transformed: &TransformedBatch) -> Result<CompositionBatch> {
    let d = transformed.coords.ncols();
    let h = helmert_submatrix(d + 1)?;
    let n = transformed.coords.nrows();
    let mut parts = DMatrix::zeros(n, d + 1);
    for i in 0..n {
        let z: DVector<f64> = transformed.coords.row(i).transpose();
        let row = match transformed.kind {
            TransformKind::Alpha(a) => inverse_alpha_row(&z, a.value(), &h)?,
            TransformKind::Ilr => softmax_close((h.transpose() * z).as_slice()),
        };
        for (j, v) in row.into_iter().enumerate() {
            parts[(i, j)] = v;
        }
    }
    CompositionBatch::with_labels(parts, Some(transformed.source_labels.clone()))
}

/// Log-Jacobian of the alpha-transformation for one strictly positive row,
/// up to an additive constant that depends only on `D`:
/// `(alpha - 1) sum_j log x_j - D log sum_j x_j^alpha`.
pub fn alpha_log_jacobian(parts: &[f64], alpha: f64) -> f64 {
    let dim = parts.len() as f64;
    let sum_log: f64 = parts.iter().map(|x| x.ln()).sum();
    let scaled: Vec<f64> = parts.iter().map(|x| alpha * x.ln()).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    (alpha - 1.0) * sum_log - dim * lse
}
