//! Principal component regression with compositional predictors.
//!
//! Pipeline: alpha-transformation (ilr at `alpha = 0`) of the compositions,
//! standardisation of the `d` transformed coordinates, eigen-decomposition of
//! their cross-product, and least squares of the response on an intercept,
//! the first `k` scores and optional reference-coded factor dummies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CodaError, Result};
use crate::linalg::{column_means, least_squares};
use crate::simplex::{transform_batch, AlphaParam, CompositionBatch, TransformKind};

/// Outliers are residuals whose standardised value exceeds this in magnitude.
pub const OUTLIER_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample standard deviations (divisor `n - 1`).
    pub fn fit(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n < 2 {
            return Err(CodaError::TooFewRows(
                "standardising needs at least 2 rows".into(),
            ));
        }
        let means: Vec<f64> = column_means(m).iter().copied().collect();
        let sds: Vec<f64> = m
            .column_iter()
            .zip(&means)
            .map(|(c, mu)| {
                (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
            })
            .collect();
        if sds.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(CodaError::SingularScores);
        }
        Ok(Self { means, sds })
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            (m[(i, j)] - self.means[j]) / self.sds[j]
        })
    }
}

/// Categorical covariate, reference-coded against one of its levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEncoding {
    /// All levels, sorted.
    pub levels: Vec<String>,
    pub reference: String,
}

impl FactorEncoding {
    /// Levels are sorted; the reference defaults to the last one.
    pub fn new(labels: &[String], reference: Option<&str>) -> Result<Self> {
        let mut levels: Vec<String> = labels.to_vec();
        levels.sort();
        levels.dedup();
        if levels.is_empty() {
            return Err(CodaError::InvalidArgument("factor has no levels".into()));
        }
        let reference = match reference {
            Some(r) => {
                if !levels.iter().any(|l| l == r) {
                    return Err(CodaError::UnknownFactorLevel(r.to_string()));
                }
                r.to_string()
            }
            None => levels.last().cloned().expect("nonempty"),
        };
        Ok(Self { levels, reference })
    }

    /// Levels that get a dummy column, in sorted order.
    pub fn dummy_levels(&self) -> Vec<&str> {
        self.levels
            .iter()
            .filter(|l| **l != self.reference)
            .map(String::as_str)
            .collect()
    }

    pub fn dummies(&self, labels: &[String]) -> Result<DMatrix<f64>> {
        let dummy = self.dummy_levels();
        let mut out = DMatrix::zeros(labels.len(), dummy.len());
        for (i, label) in labels.iter().enumerate() {
            if !self.levels.contains(label) {
                return Err(CodaError::UnknownFactorLevel(label.clone()));
            }
            if let Some(j) = dummy.iter().position(|l| l == label) {
                out[(i, j)] = 1.0;
            }
        }
        Ok(out)
    }
}

/// Factor observations plus the requested reference level.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub labels: Vec<String>,
    pub reference: Option<String>,
}

impl Factor {
    pub fn new(labels: Vec<String>, reference: Option<String>) -> Self {
        Self { labels, reference }
    }
}

/// Standardiser and principal axes fitted to a block of transformed coordinates.
#[derive(Debug, Clone)]
struct Projection {
    standardizer: Standardizer,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Projection {
    fn fit(coords: &DMatrix<f64>) -> Result<Self> {
        let standardizer = Standardizer::fit(coords)?;
        let xs = standardizer.apply(coords);
        let cross = xs.transpose() * &xs;
        let eig = SymmetricEigen::new(cross);
        let p = coords.ncols();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut eigenvectors = DMatrix::zeros(p, p);
        for (c, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).clone_owned();
            // sign convention: largest-magnitude entry positive
            let pivot = col.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
                if v.abs() > acc.1.abs() {
                    (i, *v)
                } else {
                    acc
                }
            });
            if pivot.1 < 0.0 {
                col = -col;
            }
            eigenvectors.set_column(c, &col);
        }
        Ok(Self {
            standardizer,
            eigenvalues,
            eigenvectors,
        })
    }

    fn scores(&self, coords: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        self.standardizer.apply(coords) * self.eigenvectors.columns(0, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcrModel {
    pub transform: TransformKind,
    pub component_labels: Vec<String>,
    pub standardizer: Standardizer,
    pub eigenvalues: Vec<f64>,
    /// `p x p`, columns in descending-eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
    pub k: usize,
    /// Intercept, then `k` score coefficients, then one per factor dummy.
    pub coefficients: Vec<f64>,
    pub factor: Option<FactorEncoding>,
    /// Unbiased residual variance.
    pub sigma2: f64,
    /// Slopes on the standardised predictors, `V_k` times the score slopes.
    pub standardized_coefficients: Vec<f64>,
    /// `sigma2 * V_k (Z'Z)^-1 V_k'`.
    pub coefficient_covariance: DMatrix<f64>,
    /// Inverse cross-product of the training design, for leverages.
    pub design_gram_inverse: DMatrix<f64>,
    pub n_train: usize,
}

impl PcrModel {
    pub fn alpha(&self) -> f64 {
        self.transform.alpha_value()
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn score_coefficients(&self) -> &[f64] {
        &self.coefficients[1..=self.k]
    }

    pub fn factor_coefficients(&self) -> &[f64] {
        &self.coefficients[self.k + 1..]
    }

    /// Number of regressors besides the intercept.
    pub fn n_predictors(&self) -> usize {
        self.coefficients.len() - 1
    }

    fn projection(&self) -> Projection {
        Projection {
            standardizer: self.standardizer.clone(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self.eigenvectors.clone(),
        }
    }
}

fn factor_matrix(
    encoding: Option<&FactorEncoding>,
    labels: Option<&[String]>,
) -> Result<Option<DMatrix<f64>>> {
    match (encoding, labels) {
        (None, None) => Ok(None),
        (Some(enc), Some(labels)) => enc.dummies(labels).map(Some),
        (Some(_), None) => Err(CodaError::InvalidArgument(
            "model was trained with a factor; factor labels are required".into(),
        )),
        (None, Some(_)) => Err(CodaError::InvalidArgument(
            "model was trained without a factor".into(),
        )),
    }
}

fn design(scores: &DMatrix<f64>, dummies: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let n = scores.nrows();
    let extra = dummies.map_or(0, |d| d.ncols());
    let mut a = DMatrix::from_element(n, 1 + scores.ncols() + extra, 1.0);
    a.view_mut((0, 1), (n, scores.ncols())).copy_from(scores);
    if let Some(d) = dummies {
        a.view_mut((0, 1 + scores.ncols()), (n, extra)).copy_from(d);
    }
    a
}

fn transform_predictors(x: &CompositionBatch, alpha: AlphaParam) -> Result<DMatrix<f64>> {
    alpha.check_zeros(x.has_zero())?;
    Ok(transform_batch(x, alpha)?.coords)
}

fn fit_projected(
    y: &[f64],
    coords: &DMatrix<f64>,
    projection: Projection,
    k: usize,
    factor: Option<&Factor>,
    transform: TransformKind,
    labels: &[String],
) -> Result<PcrModel> {
    let n = y.len();
    let p = coords.ncols();
    if k == 0 || k > p {
        return Err(CodaError::InvalidArgument(format!(
            "number of components must lie in 1..={p}, got {k}"
        )));
    }
    let encoding = factor
        .map(|f| FactorEncoding::new(&f.labels, f.reference.as_deref()))
        .transpose()?;
    let dummies = factor_matrix(encoding.as_ref(), factor.map(|f| f.labels.as_slice()))?;
    let n_regressors = 1 + k + dummies.as_ref().map_or(0, |d| d.ncols());
    if n <= n_regressors {
        return Err(CodaError::TooFewRows(format!(
            "{n} rows for {n_regressors} regression coefficients"
        )));
    }
    let scores = projection.scores(coords, k);
    let a = design(&scores, dummies.as_ref());
    let response = DMatrix::from_column_slice(n, 1, y);
    let ls = least_squares(&a, &response).map_err(|e| match e {
        CodaError::RankDeficientDesign => CodaError::SingularScores,
        other => other,
    })?;
    let coefficients: Vec<f64> = ls.coefficients.column(0).iter().copied().collect();
    let sse = ls.residuals.norm_squared();
    let sigma2 = sse / (n - n_regressors) as f64;

    let gram_inverse = (a.transpose() * &a)
        .try_inverse()
        .ok_or(CodaError::SingularScores)?;
    let vk = projection.eigenvectors.columns(0, k).clone_owned();
    let gamma = DVector::from_column_slice(&coefficients[1..=k]);
    let standardized_coefficients = (&vk * gamma).iter().copied().collect();
    let ztz_inv = (scores.transpose() * &scores)
        .try_inverse()
        .ok_or(CodaError::SingularScores)?;
    let coefficient_covariance = &vk * ztz_inv * vk.transpose() * sigma2;

    Ok(PcrModel {
        transform,
        component_labels: labels.to_vec(),
        standardizer: projection.standardizer,
        eigenvalues: projection.eigenvalues,
        eigenvectors: projection.eigenvectors,
        k,
        coefficients,
        factor: encoding,
        sigma2,
        standardized_coefficients,
        coefficient_covariance,
        design_gram_inverse: gram_inverse,
        n_train: n,
    })
}

/// Fits a principal component regression of `y` on the transformed
/// compositions, keeping the first `k` components.
pub fn pcr_fit(
    y: &[f64],
    x: &CompositionBatch,
    alpha: AlphaParam,
    k: usize,
    factor: Option<&Factor>,
) -> Result<PcrModel> {
    if y.len() != x.n() {
        return Err(CodaError::DimensionMismatch(format!(
            "{} responses for {} compositions",
            y.len(),
            x.n()
        )));
    }
    if let Some(f) = factor {
        if f.labels.len() != y.len() {
            return Err(CodaError::DimensionMismatch(format!(
                "{} factor labels for {} rows",
                f.labels.len(),
                y.len()
            )));
        }
    }
    let coords = transform_predictors(x, alpha)?;
    let projection = Projection::fit(&coords)?;
    fit_projected(
        y,
        &coords,
        projection,
        k,
        factor,
        TransformKind::from_alpha(alpha),
        x.labels(),
    )
}

fn check_labels(model: &PcrModel, x: &CompositionBatch) -> Result<()> {
    if model.component_labels != x.labels() {
        return Err(CodaError::LabelMismatch {
            expected: model.component_labels.clone(),
            found: x.labels().to_vec(),
        });
    }
    Ok(())
}

fn model_alpha(model: &PcrModel) -> AlphaParam {
    match model.transform {
        TransformKind::Alpha(a) => a,
        TransformKind::Ilr => AlphaParam::new(0.0).expect("zero is in range"),
    }
}

fn predict_design(
    model: &PcrModel,
    x: &CompositionBatch,
    factor: Option<&[String]>,
) -> Result<DMatrix<f64>> {
    check_labels(model, x)?;
    let coords = transform_predictors(x, model_alpha(model))?;
    let scores = model.projection().scores(&coords, model.k);
    let dummies = factor_matrix(model.factor.as_ref(), factor)?;
    Ok(design(&scores, dummies.as_ref()))
}

/// Applies a fitted model to new compositions (and factor labels, when the
/// model was trained with a factor).
pub fn pcr_predict(
    model: &PcrModel,
    x: &CompositionBatch,
    factor: Option<&[String]>,
) -> Result<Vec<f64>> {
    let a = predict_design(model, x, factor)?;
    let beta = DVector::from_column_slice(&model.coefficients);
    Ok((a * beta).iter().copied().collect())
}

/// `1 - (1 - R^2)(n - 1)/(n - n_predictors - 1)`.
pub fn adjusted_r2(y: &[f64], fitted: &[f64], n_predictors: usize) -> Result<f64> {
    let n = y.len();
    if fitted.len() != n {
        return Err(CodaError::DimensionMismatch(format!(
            "{n} observations, {} fitted values",
            fitted.len()
        )));
    }
    if n <= n_predictors + 1 {
        return Err(CodaError::TooFewRows(format!(
            "{n} observations for {n_predictors} predictors"
        )));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(CodaError::DegenerateVariance);
    }
    let sse: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let r2 = 1.0 - sse / sst;
    Ok(1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - n_predictors as f64 - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedResiduals {
    pub fitted: Vec<f64>,
    pub values: Vec<f64>,
    pub leverages: Vec<f64>,
    pub outliers: Vec<bool>,
}

/// Residuals scaled by `sqrt(sigma2 (1 - h_ii))`, flagged beyond
/// [`OUTLIER_THRESHOLD`].
pub fn standardized_residuals(
    model: &PcrModel,
    y: &[f64],
    x: &CompositionBatch,
    factor: Option<&[String]>,
) -> Result<StandardizedResiduals> {
    let a = predict_design(model, x, factor)?;
    if a.nrows() != y.len() {
        return Err(CodaError::DimensionMismatch(format!(
            "{} responses for {} rows",
            y.len(),
            a.nrows()
        )));
    }
    let beta = DVector::from_column_slice(&model.coefficients);
    let fitted: Vec<f64> = (&a * beta).iter().copied().collect();
    // residual variance at round-off level means an exact fit
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let exact = model.sigma2 <= (1e3 * f64::EPSILON * y_scale).powi(2);
    let mut values = Vec::with_capacity(y.len());
    let mut leverages = Vec::with_capacity(y.len());
    for i in 0..a.nrows() {
        let row = a.row(i);
        let h = (row * &model.design_gram_inverse * row.transpose())[(0, 0)];
        let scale = model.sigma2 * (1.0 - h);
        let resid = y[i] - fitted[i];
        let v = if !exact && scale > 0.0 {
            resid / scale.sqrt()
        } else {
            0.0
        };
        values.push(v);
        leverages.push(h);
    }
    let outliers = values.iter().map(|v| v.abs() > OUTLIER_THRESHOLD).collect();
    Ok(StandardizedResiduals {
        fitted,
        values,
        leverages,
        outliers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub alpha: f64,
    pub k: usize,
    pub fold_mspe: Vec<f64>,
    pub mean_mspe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub cells: Vec<CvCell>,
    /// Index into `cells` of the minimum mean MSPE.
    pub chosen: usize,
    pub seed: u64,
    pub folds: usize,
    /// Fold of every observation.
    pub assignment: Vec<usize>,
}

impl CvReport {
    pub fn chosen_cell(&self) -> &CvCell {
        &self.cells[self.chosen]
    }

    pub fn cell(&self, alpha: f64, k: usize) -> Option<&CvCell> {
        self.cells.iter().find(|c| c.alpha == alpha && c.k == k)
    }
}

/// Deterministic fold labels. With strata, each level (in sorted order) is
/// shuffled and dealt round-robin, continuing where the previous level ended.
pub fn assign_folds(
    n: usize,
    folds: usize,
    strata: Option<&[String]>,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(CodaError::FoldTooSmall(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > n {
        return Err(CodaError::FoldTooSmall(format!(
            "{folds} folds for {n} observations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; n];
    let groups: Vec<Vec<usize>> = match strata {
        None => vec![(0..n).collect()],
        Some(labels) => {
            if labels.len() != n {
                return Err(CodaError::DimensionMismatch(format!(
                    "{} strata labels for {n} observations",
                    labels.len()
                )));
            }
            let mut levels: Vec<&String> = labels.iter().collect();
            levels.sort();
            levels.dedup();
            levels
                .into_iter()
                .map(|lvl| (0..n).filter(|&i| &labels[i] == lvl).collect())
                .collect()
        }
    };
    let mut offset = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for (j, &i) in group.iter().enumerate() {
            assignment[i] = (offset + j) % folds;
        }
        offset += group.len();
    }
    Ok(assignment)
}

/// K-fold cross-validation of the MSPE over an `(alpha, k)` grid.
///
/// Folds are stratified by `strata` when given, otherwise by the factor
/// labels when a factor is used. The standardiser and principal axes are
/// refitted on every training split. The chosen cell minimises the mean MSPE;
/// ties go to smaller `k`, then to smaller `|alpha|`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    y: &[f64],
    x: &CompositionBatch,
    alpha_grid: &[AlphaParam],
    k_grid: &[usize],
    factor: Option<&Factor>,
    strata: Option<&[String]>,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    let n = y.len();
    if n != x.n() {
        return Err(CodaError::DimensionMismatch(format!(
            "{n} responses for {} compositions",
            x.n()
        )));
    }
    if alpha_grid.is_empty() || k_grid.is_empty() {
        return Err(CodaError::InvalidArgument(
            "empty cross-validation grid".into(),
        ));
    }
    for &alpha in alpha_grid {
        alpha.check_zeros(x.has_zero())?;
    }
    let strata = strata.or(factor.map(|f| f.labels.as_slice()));
    let assignment = assign_folds(n, folds, strata, seed)?;
    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            (train, test)
        })
        .collect();
    if let Some(labels) = factor.map(|f| f.labels.as_slice()) {
        for (f, (train, test)) in fold_rows.iter().enumerate() {
            for &i in test {
                if !train.iter().any(|&t| labels[t] == labels[i]) {
                    return Err(CodaError::FoldTooSmall(format!(
                        "level {:?} is absent from the training rows of fold {f}",
                        labels[i]
                    )));
                }
            }
        }
    }

    let pick = |v: &[f64], rows: &[usize]| -> Vec<f64> { rows.iter().map(|&i| v[i]).collect() };
    let pick_labels = |rows: &[usize]| -> Option<Factor> {
        factor.map(|f| Factor {
            labels: rows.iter().map(|&i| f.labels[i].clone()).collect(),
            reference: f.reference.clone(),
        })
    };

    let mut cells = Vec::with_capacity(alpha_grid.len() * k_grid.len());
    for &alpha in alpha_grid {
        let coords = transform_predictors(x, alpha)?;
        let kind = TransformKind::from_alpha(alpha);
        let mut per_k: Vec<Vec<f64>> = vec![Vec::with_capacity(folds); k_grid.len()];
        for (train, test) in &fold_rows {
            let train_coords = select(&coords, train);
            let test_coords = select(&coords, test);
            let projection = Projection::fit(&train_coords)?;
            let y_train = pick(y, train);
            let y_test = pick(y, test);
            let train_factor = pick_labels(train);
            let test_factor = pick_labels(test);
            for (slot, &k) in per_k.iter_mut().zip(k_grid) {
                let model = fit_projected(
                    &y_train,
                    &train_coords,
                    projection.clone(),
                    k,
                    train_factor.as_ref(),
                    kind,
                    x.labels(),
                )?;
                let scores = model.projection().scores(&test_coords, k);
                let dummies = factor_matrix(
                    model.factor.as_ref(),
                    test_factor.as_ref().map(|f| f.labels.as_slice()),
                )?;
                let a = design(&scores, dummies.as_ref());
                let pred = a * DVector::from_column_slice(&model.coefficients);
                let mse = pred
                    .iter()
                    .zip(&y_test)
                    .map(|(p, t)| (p - t).powi(2))
                    .sum::<f64>()
                    / y_test.len() as f64;
                slot.push(mse);
            }
        }
        for (fold_mspe, &k) in per_k.into_iter().zip(k_grid) {
            let mean_mspe = fold_mspe.iter().sum::<f64>() / fold_mspe.len() as f64;
            cells.push(CvCell {
                alpha: alpha.value(),
                k,
                fold_mspe,
                mean_mspe,
            });
        }
    }

    let chosen = (0..cells.len())
        .min_by(|&a, &b| {
            let (ca, cb) = (&cells[a], &cells[b]);
            ca.mean_mspe
                .total_cmp(&cb.mean_mspe)
                .then(ca.k.cmp(&cb.k))
                .then(ca.alpha.abs().total_cmp(&cb.alpha.abs()))
        })
        .expect("grid is nonempty");
    Ok(CvReport {
        cells,
        chosen,
        seed,
        folds,
        assignment,
    })
}

fn select(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample() -> (Vec<f64>, CompositionBatch) {
        let rows = vec![
            vec![0.2, 0.3, 0.5],
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.3, 0.4],
            vec![0.25, 0.5, 0.25],
            vec![0.6, 0.2, 0.2],
            vec![0.15, 0.15, 0.7],
            vec![0.4, 0.1, 0.5],
        ];
        let y = vec![1.0, 2.5, 0.7, 1.9, -0.4, 0.3, 0.1];
        (y, CompositionBatch::from_rows(&rows, None).unwrap())
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 30.0, 3.0, 20.0, 6.0, 0.0]);
        let s = Standardizer::fit(&m).unwrap();
        let z = s.apply(&m);
        for c in z.column_iter() {
            let mean = c.sum() / 4.0;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert_relative_eq!(var, 1.0, epsilon = 1e-12);
        }
        let constant = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        assert_eq!(
            Standardizer::fit(&constant).unwrap_err(),
            CodaError::SingularScores
        );
    }

    #[test]
    fn factor_reference_coding() {
        let labels: Vec<String> = ["b", "a", "c", "a"].iter().map(|s| s.to_string()).collect();
        let enc = FactorEncoding::new(&labels, None).unwrap();
        assert_eq!(enc.reference, "c");
        assert_eq!(enc.dummy_levels(), vec!["a", "b"]);
        let d = enc.dummies(&labels).unwrap();
        assert_eq!(d.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(d.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        let enc = FactorEncoding::new(&labels, Some("a")).unwrap();
        assert_eq!(enc.dummy_levels(), vec!["b", "c"]);
        assert!(matches!(
            enc.dummies(&["z".to_string()]),
            Err(CodaError::UnknownFactorLevel(_))
        ));
        assert!(FactorEncoding::new(&labels, Some("q")).is_err());
    }

    #[test]
    fn eigenvectors_are_orthonormal_and_sorted() {
        let (y, x) = sample();
        let model = pcr_fit(&y, &x, AlphaParam::new(0.5).unwrap(), 2, None).unwrap();
        let v = &model.eigenvectors;
        assert!((v.transpose() * v - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        assert!(model.eigenvalues[0] >= model.eigenvalues[1]);
        for c in v.column_iter() {
            let pivot = c
                .iter()
                .copied()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn training_prediction_equals_fit() {
        let (y, x) = sample();
        let model = pcr_fit(&y, &x, AlphaParam::new(1.0).unwrap(), 1, None).unwrap();
        let pred = pcr_predict(&model, &x, None).unwrap();
        let res = standardized_residuals(&model, &y, &x, None).unwrap();
        for (a, b) in pred.iter().zip(&res.fitted) {
            assert_eq!(a, b);
        }
        let dup = x.select_rows(&[2, 2]);
        let p = pcr_predict(&model, &dup, None).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn pcr_fit_errors() {
        let (y, x) = sample();
        let a = AlphaParam::new(1.0).unwrap();
        assert!(matches!(
            pcr_fit(&y, &x, a, 3, None),
            Err(CodaError::InvalidArgument(_))
        ));
        assert!(matches!(
            pcr_fit(&y[..3], &x, a, 1, None),
            Err(CodaError::DimensionMismatch(_))
        ));
        let small = x.select_rows(&[0, 1, 2]);
        assert!(matches!(
            pcr_fit(&y[..3], &small, a, 2, None),
            Err(CodaError::TooFewRows(_))
        ));
        let zeros =
            CompositionBatch::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5]], None).unwrap();
        assert!(matches!(
            pcr_fit(&[1.0, 2.0], &zeros, AlphaParam::new(0.0).unwrap(), 1, None),
            Err(CodaError::ZeroWithNonpositiveAlpha(_))
        ));
    }

    #[test]
    fn label_mismatch_on_predict() {
        let (y, x) = sample();
        let model = pcr_fit(&y, &x, AlphaParam::new(1.0).unwrap(), 1, None).unwrap();
        let renamed = CompositionBatch::from_rows(
            &[vec![0.2, 0.3, 0.5]],
            Some(vec!["a".into(), "b".into(), "c".into()]),
        )
        .unwrap();
        assert!(matches!(
            pcr_predict(&model, &renamed, None),
            Err(CodaError::LabelMismatch { .. })
        ));
    }

    #[test]
    fn adjusted_r2_edge_cases() {
        let y = [1.0, 2.0, 4.0, 3.0, 5.0];
        assert_relative_eq!(adjusted_r2(&y, &y, 2).unwrap(), 1.0);
        let mean = [3.0; 5];
        assert!(adjusted_r2(&y, &mean, 1).unwrap() <= 0.0);
        assert_eq!(
            adjusted_r2(&[2.0; 5], &[2.0; 5], 1).unwrap_err(),
            CodaError::DegenerateVariance
        );
        assert!(matches!(
            adjusted_r2(&y, &y, 4),
            Err(CodaError::TooFewRows(_))
        ));
    }

    #[test]
    fn perfect_fit_has_zero_standardized_residuals() {
        let (_, x) = sample();
        let coords = transform_batch(&x, AlphaParam::new(1.0).unwrap())
            .unwrap()
            .coords;
        let y: Vec<f64> = coords.row_iter().map(|r| 2.0 * r[0] - r[1] + 0.5).collect();
        let model = pcr_fit(&y, &x, AlphaParam::new(1.0).unwrap(), 2, None).unwrap();
        let res = standardized_residuals(&model, &y, &x, None).unwrap();
        assert!(
            res.values.iter().all(|v| v.abs() < 1e-6),
            "{:?}",
            res.values
        );
        assert!(res.outliers.iter().all(|o| !o));
    }

    #[test]
    fn duplicated_design_has_equal_leverages() {
        let rows = vec![
            vec![0.2, 0.3, 0.5],
            vec![0.5, 0.3, 0.2],
            vec![0.3, 0.5, 0.2],
            vec![0.2, 0.3, 0.5],
            vec![0.5, 0.3, 0.2],
            vec![0.3, 0.5, 0.2],
        ];
        let x = CompositionBatch::from_rows(&rows, None).unwrap();
        let y = [1.0, 2.0, 3.0, 1.5, 2.5, 2.0];
        let model = pcr_fit(&y, &x, AlphaParam::new(1.0).unwrap(), 1, None).unwrap();
        let res = standardized_residuals(&model, &y, &x, None).unwrap();
        for i in 0..3 {
            assert_relative_eq!(res.leverages[i], res.leverages[i + 3], epsilon = 1e-12);
        }
    }

    #[test]
    fn fold_assignment_is_balanced_and_reproducible() {
        let labels: Vec<String> = (0..23)
            .map(|i| if i % 3 == 0 { "a" } else { "b" }.to_string())
            .collect();
        let f1 = assign_folds(23, 5, Some(&labels), 9).unwrap();
        let f2 = assign_folds(23, 5, Some(&labels), 9).unwrap();
        assert_eq!(f1, f2);
        let mut counts = [0; 5];
        for f in &f1 {
            counts[*f] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4 || c == 5), "{counts:?}");
        assert!(assign_folds(3, 5, None, 1).is_err());
        assert!(assign_folds(10, 1, None, 1).is_err());
    }
}
