//! Small dense linear-algebra helpers shared by the regression modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{CodaError, Result};

/// Relative threshold on the diagonal of `R` below which a design is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares solution of `x * coef = y` for every column of `y`,
/// computed through a QR factorisation of `x`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// `p x m` coefficient matrix.
    pub coefficients: DMatrix<f64>,
    pub fitted: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LeastSquares> {
    let (n, p) = x.shape();
    if y.nrows() != n {
        return Err(CodaError::DimensionMismatch(format!(
            "design has {n} rows, response has {}",
            y.nrows()
        )));
    }
    if n < p {
        return Err(CodaError::RankDeficientDesign);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= RANK_TOL * scale) {
        return Err(CodaError::RankDeficientDesign);
    }
    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(CodaError::RankDeficientDesign)?;
    let fitted = x * &coefficients;
    let residuals = y - &fitted;
    Ok(LeastSquares {
        coefficients,
        fitted,
        residuals,
    })
}

/// Column means of an `n x p` matrix.
pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Sample covariance with divisor `n - 1`.
pub fn sample_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(m);
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (centered.transpose() * &centered) / (m.nrows() as f64 - 1.0)
}

/// `rows x (1 + p)` design with a leading column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    out.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    out
}
