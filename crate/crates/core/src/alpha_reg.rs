//! Regression with compositional responses.
//!
//! The conditional mean is modelled with the additive-logistic link
//! (first component as reference):
//!
//! ```text
//! mu_1 = 1 / (1 + sum_j exp(x' b_j)),   mu_i = exp(x' b_i) / (1 + sum_j exp(x' b_j))
//! ```
//!
//! For `alpha != 0` the coefficients maximise the Gaussian log-likelihood of
//! the alpha-transformed responses around the alpha-transformed fitted means,
//! with the residual covariance profiled out. At `alpha = 0` the problem is the
//! closed-form additive log-ratio regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CodaError, Result};
use crate::linalg::least_squares;
use crate::optim::{minimize, BfgsOptions};
use crate::simplex::{
    alpha_log_jacobian, alpha_row, helmert_submatrix, kl_fit_divergence, transform_batch,
    AlphaParam, CompositionBatch,
};
use crate::zero_impute::{multiplicative_replace, ImputeConfig};

/// `n x (p + 1)` design with a leading intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    covariate_names: Vec<String>,
}

impl DesignMatrix {
    /// Prepends the intercept column to an `n x p` covariate block.
    pub fn new(covariates: &DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != covariates.ncols() {
            return Err(CodaError::DimensionMismatch(format!(
                "{} names for {} covariates",
                names.len(),
                covariates.ncols()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(CodaError::InvalidArgument(
                "covariates must be finite".into(),
            ));
        }
        Ok(Self {
            values: crate::linalg::with_intercept(covariates),
            covariate_names: names,
        })
    }

    pub fn intercept_only(n: usize) -> Self {
        Self {
            values: DMatrix::from_element(n, 1, 1.0),
            covariate_names: Vec::new(),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of covariates `p`, excluding the intercept.
    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionKind {
    Alpha {
        alpha: AlphaParam,
    },
    /// Closed-form log-ratio regression; `divisor` records the alr divisor
    /// used for the least-squares fit.
    Alr {
        divisor: usize,
    },
}

impl RegressionKind {
    pub fn alpha_value(&self) -> f64 {
        match self {
            RegressionKind::Alpha { alpha } => alpha.value(),
            RegressionKind::Alr { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRegModel {
    pub kind: RegressionKind,
    /// `d x (p + 1)`; row `i` holds the coefficients of component `i + 2`
    /// against the first component.
    pub coefficients: DMatrix<f64>,
    /// Unbiased residual covariance (divisor `n - p - 1`) in the transformed space.
    pub sigma_hat: DMatrix<f64>,
    /// Gaussian log-likelihood of the transformed responses at the fitted
    /// coefficients, without the Jacobian of the transformation.
    pub objective_value: f64,
    /// `objective_value` plus the log-Jacobian; only defined for zero-free data.
    pub profile_log_likelihood: Option<f64>,
    pub component_labels: Vec<String>,
    pub covariate_names: Vec<String>,
    pub iterations: usize,
    /// False when the optimiser stopped on its iteration budget.
    pub converged: bool,
}

impl AlphaRegModel {
    pub fn alpha(&self) -> f64 {
        self.kind.alpha_value()
    }
}

/// Fitted compositions through the additive-logistic link.
pub fn predict(model: &AlphaRegModel, x_new: &DesignMatrix) -> Result<CompositionBatch> {
    if x_new.values.ncols() != model.coefficients.ncols() {
        return Err(CodaError::DimensionMismatch(format!(
            "model expects {} design columns, got {}",
            model.coefficients.ncols(),
            x_new.values.ncols()
        )));
    }
    let parts = link(x_new.values(), &model.coefficients);
    CompositionBatch::from_matrix(parts, Some(model.component_labels.clone()))
}

/// `n x D` matrix of link means for coefficients `d x (p + 1)`.
fn link(x: &DMatrix<f64>, coefficients: &DMatrix<f64>) -> DMatrix<f64> {
    let eta = x * coefficients.transpose();
    let (n, d) = eta.shape();
    let mut out = DMatrix::zeros(n, d + 1);
    for i in 0..n {
        let max = eta.row(i).iter().copied().fold(0.0, f64::max);
        let base = (-max).exp();
        let mut total = base;
        for j in 0..d {
            let e = (eta[(i, j)] - max).exp();
            out[(i, j + 1)] = e;
            total += e;
        }
        out[(i, 0)] = base;
        for j in 0..=d {
            out[(i, j)] /= total;
        }
    }
    out
}

fn check_rows(y: &CompositionBatch, x: &DesignMatrix) -> Result<()> {
    if y.n() != x.n() {
        return Err(CodaError::DimensionMismatch(format!(
            "{} responses, {} design rows",
            y.n(),
            x.n()
        )));
    }
    let k = x.values.ncols();
    if y.n() <= k {
        return Err(CodaError::TooFewRows(format!(
            "need more than {k} rows for {} covariates, got {}",
            x.n_covariates(),
            y.n()
        )));
    }
    Ok(())
}

/// `-(n/2) log|S| - (1/2) tr(R S^-1 R')` with `S = R'R / (n - p - 1)`.
fn gaussian_objective(residuals: &DMatrix<f64>, dof: f64) -> Option<(f64, DMatrix<f64>)> {
    let n = residuals.nrows() as f64;
    let d = residuals.ncols() as f64;
    let sigma = residuals.transpose() * residuals / dof;
    let chol = sigma.clone().cholesky()?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some((-0.5 * n * log_det - 0.5 * dof * d, sigma))
}

fn transformed_coords(y: &CompositionBatch, alpha: AlphaParam) -> Result<DMatrix<f64>> {
    Ok(transform_batch(y, alpha)?.coords)
}

fn link_coords(parts: DMatrix<f64>, alpha: AlphaParam, labels: &[String]) -> Result<DMatrix<f64>> {
    let batch = CompositionBatch::from_matrix(parts, Some(labels.to_vec()))?;
    transformed_coords(&batch, alpha)
}

fn total_log_jacobian(y: &CompositionBatch, alpha: f64) -> Option<f64> {
    if y.has_zero() {
        return None;
    }
    Some(
        (0..y.n())
            .map(|i| alpha_log_jacobian(&y.row_vec(i), alpha))
            .sum(),
    )
}

/// Least squares of `alr(Y)` on `X`, reported in the first-component
/// reference parameterisation of the link.
pub fn fit_alr_regression(
    y: &CompositionBatch,
    x: &DesignMatrix,
    divisor: usize,
) -> Result<AlphaRegModel> {
    check_rows(y, x)?;
    let dim = y.dim();
    if divisor >= dim {
        return Err(CodaError::InvalidArgument(format!(
            "divisor index {divisor} out of range for {dim} components"
        )));
    }
    if let Some((row, component)) = y.first_zero() {
        return Err(CodaError::ZeroPart { row, component });
    }
    let n = y.n();
    let logs = y.parts().map(f64::ln);
    let others: Vec<usize> = (0..dim).filter(|&j| j != divisor).collect();
    let response = DMatrix::from_fn(n, dim - 1, |i, k| logs[(i, others[k])] - logs[(i, divisor)]);
    let ls = least_squares(x.values(), &response)?;

    // per-component coefficients against the divisor (zero for the divisor itself)
    let k = x.values.ncols();
    let mut against_divisor = DMatrix::zeros(dim, k);
    for (c, &j) in others.iter().enumerate() {
        for r in 0..k {
            against_divisor[(j, r)] = ls.coefficients[(r, c)];
        }
    }
    let coefficients = DMatrix::from_fn(dim - 1, k, |i, r| {
        against_divisor[(i + 1, r)] - against_divisor[(0, r)]
    });

    let dof = (n - k) as f64;
    let fitted_first = x.values() * coefficients.transpose();
    let residuals = DMatrix::from_fn(n, dim - 1, |i, c| {
        logs[(i, c + 1)] - logs[(i, 0)] - fitted_first[(i, c)]
    });
    let sigma_hat = residuals.transpose() * &residuals / dof;

    let ilr = AlphaParam::new(0.0)?;
    let ilr_resid = transformed_coords(y, ilr)?
        - link_coords(link(x.values(), &coefficients), ilr, y.labels())?;
    let (objective_value, _) =
        gaussian_objective(&ilr_resid, dof).ok_or(CodaError::SingularCovariance)?;
    let profile_log_likelihood = total_log_jacobian(y, 0.0).map(|j| objective_value + j);

    Ok(AlphaRegModel {
        kind: RegressionKind::Alr { divisor },
        coefficients,
        sigma_hat,
        objective_value,
        profile_log_likelihood,
        component_labels: y.labels().to_vec(),
        covariate_names: x.covariate_names().to_vec(),
        iterations: 0,
        converged: true,
    })
}

/// Alpha-regression: maximises the profiled Gaussian log-likelihood of the
/// alpha-transformed responses over the link coefficients.
///
/// `alpha = 0` is the log-ratio limit and returns the alr regression fit.
pub fn fit_alpha_regression(
    y: &CompositionBatch,
    x: &DesignMatrix,
    alpha: AlphaParam,
) -> Result<AlphaRegModel> {
    alpha.check_zeros(y.has_zero())?;
    check_rows(y, x)?;
    if alpha.is_zero() {
        return fit_alr_regression(y, x, y.dim() - 1);
    }
    let n = y.n();
    let d = y.dim() - 1;
    let k = x.values.ncols();
    let dof = (n - k) as f64;

    let start_data = if y.has_zero() {
        multiplicative_replace(y, &ImputeConfig::default())?
    } else {
        y.clone()
    };
    let start = fit_alr_regression(&start_data, x, y.dim() - 1)?;

    let targets = transformed_coords(y, alpha)?;
    let helmert = helmert_submatrix(y.dim())?;
    let a = alpha.value();
    let design = x.values();
    let negative_objective = |theta: &DVector<f64>| -> f64 {
        let coefficients = DMatrix::from_column_slice(d, k, theta.as_slice());
        let means = link(design, &coefficients);
        let mut residuals = targets.clone();
        for i in 0..n {
            let row: Vec<f64> = means.row(i).iter().copied().collect();
            let z = alpha_row(&row, a, &helmert);
            for c in 0..d {
                residuals[(i, c)] -= z[c];
            }
        }
        match gaussian_objective(&residuals, dof) {
            Some((value, _)) => -value,
            None => f64::INFINITY,
        }
    };

    let theta0 = DVector::from_column_slice(start.coefficients.as_slice());
    let initial = negative_objective(&theta0);
    if !initial.is_finite() {
        return Err(CodaError::OptimizerFailure(
            "objective is not finite at the starting coefficients".into(),
        ));
    }
    let result = minimize(negative_objective, theta0, BfgsOptions::for_params(d * k));
    let coefficients = DMatrix::from_column_slice(d, k, result.x.as_slice());

    let residuals = targets - link_coords(link(design, &coefficients), alpha, y.labels())?;
    let (objective_value, sigma_hat) =
        gaussian_objective(&residuals, dof).ok_or(CodaError::SingularCovariance)?;
    let profile_log_likelihood = total_log_jacobian(y, a).map(|j| objective_value + j);

    Ok(AlphaRegModel {
        kind: RegressionKind::Alpha { alpha },
        coefficients,
        sigma_hat,
        objective_value,
        profile_log_likelihood,
        component_labels: y.labels().to_vec(),
        covariate_names: x.covariate_names().to_vec(),
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Profile log-likelihood of `alpha`: the fitted Gaussian log-likelihood plus
/// the log-Jacobian of the transformation. Requires zero-free responses.
pub fn profile_objective(y: &CompositionBatch, x: &DesignMatrix, alpha: AlphaParam) -> Result<f64> {
    alpha.check_zeros(y.has_zero())?;
    if let Some((row, component)) = y.first_zero() {
        return Err(CodaError::ZeroPart { row, component });
    }
    let model = fit_alpha_regression(y, x, alpha)?;
    model
        .profile_log_likelihood
        .ok_or(CodaError::InvalidArgument(
            "profile log-likelihood undefined".into(),
        ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// Minimised.
    TwiceKl,
    /// Maximised.
    ProfileObjective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub criterion_kind: CriterionKind,
    pub points: Vec<GridPoint>,
    pub chosen_alpha: AlphaParam,
    pub chosen_value: f64,
}

impl AlphaSelection {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    fn from_points(
        kind: CriterionKind,
        points: Vec<GridPoint>,
        first_error: Option<CodaError>,
    ) -> Result<Self> {
        let better = |a: f64, b: f64| match kind {
            CriterionKind::TwiceKl => a < b,
            CriterionKind::ProfileObjective => a > b,
        };
        let mut best: Option<(f64, f64)> = None;
        for p in &points {
            let Some(v) = p.value else { continue };
            best = match best {
                None => Some((p.alpha, v)),
                Some((ba, bv)) => {
                    let closer =
                        p.alpha.abs() < ba.abs() || (p.alpha.abs() == ba.abs() && p.alpha < ba);
                    if better(v, bv) || (v == bv && closer) {
                        Some((p.alpha, v))
                    } else {
                        Some((ba, bv))
                    }
                }
            };
        }
        let (alpha, value) = match best {
            Some(b) => b,
            None => {
                return Err(first_error
                    .unwrap_or_else(|| CodaError::InvalidArgument("empty alpha grid".into())))
            }
        };
        Ok(Self {
            criterion_kind: kind,
            points,
            chosen_alpha: AlphaParam::new(alpha)?,
            chosen_value: value,
        })
    }
}

fn evaluate_grid<F>(grid: &[AlphaParam], kind: CriterionKind, eval: F) -> Result<AlphaSelection>
where
    F: Fn(AlphaParam) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(CodaError::InvalidArgument("alpha grid is empty".into()));
    }
    let mut first_error = None;
    let points = grid
        .iter()
        .map(|&alpha| match eval(alpha) {
            Ok(value) => GridPoint {
                alpha: alpha.value(),
                value: Some(value),
                error: None,
            },
            Err(e) => {
                let msg = e.to_string();
                first_error.get_or_insert(e);
                GridPoint {
                    alpha: alpha.value(),
                    value: None,
                    error: Some(msg),
                }
            }
        })
        .collect();
    AlphaSelection::from_points(kind, points, first_error)
}

/// Twice-KL divergence of the in-sample fits at `alpha` against `observed`.
pub fn kl_criterion(
    fit_on: &CompositionBatch,
    observed: &CompositionBatch,
    x: &DesignMatrix,
    alpha: AlphaParam,
) -> Result<(AlphaRegModel, f64)> {
    let model = fit_alpha_regression(fit_on, x, alpha)?;
    let fitted = predict(&model, x)?;
    let kl = kl_fit_divergence(observed, &fitted)?;
    Ok((model, kl))
}

/// Chooses alpha by minimising twice the KL divergence between `observed`
/// and the in-sample fits of the regression on `fit_on`.
///
/// `fit_on` is usually `observed` itself; after zero imputation it is the
/// imputed batch while the divergence is still measured against the original
/// data. Ties go to the smallest `|alpha|`.
pub fn select_alpha_by_kl(
    fit_on: &CompositionBatch,
    observed: &CompositionBatch,
    x: &DesignMatrix,
    grid: &[AlphaParam],
) -> Result<AlphaSelection> {
    evaluate_grid(grid, CriterionKind::TwiceKl, |alpha| {
        kl_criterion(fit_on, observed, x, alpha).map(|(_, kl)| kl)
    })
}

/// Chooses alpha by maximising the profile log-likelihood (zero-free data only).
pub fn select_alpha_by_profile(
    y: &CompositionBatch,
    x: &DesignMatrix,
    grid: &[AlphaParam],
) -> Result<AlphaSelection> {
    evaluate_grid(grid, CriterionKind::ProfileObjective, |alpha| {
        profile_objective(y, x, alpha)
    })
}

/// `[-1, 1]` in steps of 0.01 for zero-free data, `(0, 1]` otherwise.
pub fn default_alpha_grid(has_zero: bool) -> Vec<AlphaParam> {
    let lo = if has_zero { 1 } else { -100 };
    (lo..=100)
        .map(|k| AlphaParam::new(k as f64 / 100.0).expect("grid lies in [-1, 1]"))
        .collect()
}
