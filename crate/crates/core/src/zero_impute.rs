//! Replacement of zero parts so that log-ratio methods can run.
//!
//! Zeros are first replaced multiplicatively by a fraction of a per-component
//! detection limit. An EM loop then refines them: a Gaussian is fitted to the
//! ilr coordinates of the completed data, and each imputed part is replaced by
//! its conditional expectation given the observed parts of its row, truncated
//! so that it stays below `threshold_fraction * limit`.
//!
//! The conditional step is carried out in log-ratio coordinates relative to an
//! observed reference part of the row. These are a linear image of the ilr
//! coordinates, so the fitted Gaussian maps over exactly and every imputed cell
//! corresponds to a single coordinate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{CodaError, Result};
use crate::linalg::{column_means, sample_covariance};
use crate::simplex::{helmert_submatrix, transform_batch, AlphaParam, CompositionBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    /// Fraction of the detection limit used for the initial replacement and
    /// as the truncation point of the EM step.
    pub threshold_fraction: f64,
    /// Per-component limits; the smallest positive value of each component
    /// when absent.
    pub detection_limits: Option<Vec<f64>>,
    /// Convergence threshold on the largest change of an imputed log-ratio
    /// between successive iterations.
    pub em_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.65,
            detection_limits: None,
            em_tolerance: 0.01,
            max_iterations: 100,
        }
    }
}

impl ImputeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(CodaError::InvalidArgument(format!(
                "threshold fraction must lie in (0, 1), got {}",
                self.threshold_fraction
            )));
        }
        if self.em_tolerance.is_nan() || self.em_tolerance <= 0.0 {
            return Err(CodaError::InvalidArgument(format!(
                "EM tolerance must be positive, got {}",
                self.em_tolerance
            )));
        }
        Ok(())
    }

    fn limits_for(&self, batch: &CompositionBatch) -> Result<Vec<f64>> {
        match &self.detection_limits {
            Some(limits) => {
                if limits.len() != batch.dim() {
                    return Err(CodaError::DimensionMismatch(format!(
                        "{} detection limits for {} components",
                        limits.len(),
                        batch.dim()
                    )));
                }
                if let Some(bad) = limits.iter().find(|l| l.is_nan() || **l <= 0.0) {
                    return Err(CodaError::InvalidArgument(format!(
                        "detection limits must be positive, got {bad}"
                    )));
                }
                Ok(limits.clone())
            }
            None => detect_limits(batch),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangedCell {
    pub row: usize,
    pub component: usize,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeResult {
    pub batch: CompositionBatch,
    pub iterations: usize,
    /// One entry per originally-zero cell.
    pub changed_cells: Vec<ChangedCell>,
    pub converged: bool,
    /// Set when a `1e-8 * I` ridge had to be added to the covariance.
    pub ridge_applied: bool,
}

/// Smallest strictly positive value of each component.
pub fn detect_limits(batch: &CompositionBatch) -> Result<Vec<f64>> {
    (0..batch.dim())
        .map(|j| {
            (0..batch.n())
                .map(|i| batch.value(i, j))
                .filter(|&v| v > 0.0)
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.min(v)))
                })
                .ok_or(CodaError::AllZeroComponent(j))
        })
        .collect()
}

/// Replaces every zero by `threshold_fraction * limit` and shrinks the
/// nonzero parts of the row so that it closes to one again.
pub fn multiplicative_replace(
    batch: &CompositionBatch,
    config: &ImputeConfig,
) -> Result<CompositionBatch> {
    config.validate()?;
    let limits = config.limits_for(batch)?;
    replace_with_limits(batch, config.threshold_fraction, &limits)
}

fn replace_with_limits(
    batch: &CompositionBatch,
    fraction: f64,
    limits: &[f64],
) -> Result<CompositionBatch> {
    let mut rows = Vec::with_capacity(batch.n());
    for i in 0..batch.n() {
        let row = batch.row_vec(i);
        let total: f64 = row
            .iter()
            .zip(limits)
            .filter(|(v, _)| **v == 0.0)
            .map(|(_, l)| fraction * l)
            .sum();
        if total >= 1.0 {
            return Err(CodaError::ReplacementExceedsUnity { row: i, total });
        }
        let replaced = row
            .iter()
            .zip(limits)
            .map(|(&v, &l)| {
                if v == 0.0 {
                    fraction * l
                } else {
                    v * (1.0 - total)
                }
            })
            .collect();
        rows.push(replaced);
    }
    CompositionBatch::from_rows(&rows, Some(batch.labels().to_vec()))
}

/// `phi(a) / Phi(a)`, the inverse Mills ratio of the upper-truncated normal.
fn inverse_mills(a: f64) -> f64 {
    if a < -30.0 {
        let a2 = a * a;
        return -a / (1.0 - 1.0 / a2 + 3.0 / (a2 * a2) - 15.0 / (a2 * a2 * a2));
    }
    let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = 0.5 * erfc(-a / std::f64::consts::SQRT_2);
    pdf / cdf
}

/// Mean of `N(mean, sd^2)` truncated to `(-inf, upper)`.
fn truncated_mean(mean: f64, sd: f64, upper: f64) -> f64 {
    if sd <= 1e-12 {
        return mean.min(upper);
    }
    let a = (upper - mean) / sd;
    mean - sd * inverse_mills(a)
}

/// Zero cells of one row together with the fixed quantities of the E-step.
struct RowPattern {
    row: usize,
    reference: usize,
    missing: Vec<usize>,
    observed: Vec<usize>,
    /// `log(x_j / x_ref)` for observed `j`.
    observed_ratios: Vec<f64>,
    /// Upper truncation points of the missing log-ratios.
    caps: Vec<f64>,
}

/// EM refinement of multiplicatively replaced zeros.
pub fn em_impute(batch: &CompositionBatch, config: &ImputeConfig) -> Result<ImputeResult> {
    config.validate()?;
    if !batch.has_zero() {
        return Ok(ImputeResult {
            batch: batch.clone(),
            iterations: 0,
            changed_cells: Vec::new(),
            converged: true,
            ridge_applied: false,
        });
    }
    let limits = config.limits_for(batch)?;
    let fraction = config.threshold_fraction;
    let start = replace_with_limits(batch, fraction, &limits)?;
    let (n, dim) = (batch.n(), batch.dim());

    let mut patterns = Vec::new();
    // current imputed log-ratios, aligned with `patterns[k].missing`
    let mut imputed: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let row = batch.row_vec(i);
        let missing: Vec<usize> = (0..dim).filter(|&j| row[j] == 0.0).collect();
        if missing.is_empty() {
            continue;
        }
        let reference = (0..dim)
            .filter(|&j| row[j] > 0.0)
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .expect("closed rows have a positive part");
        let observed: Vec<usize> = (0..dim)
            .filter(|&j| j != reference && row[j] > 0.0)
            .collect();
        let base = row[reference].ln();
        let observed_ratios = observed.iter().map(|&j| row[j].ln() - base).collect();
        let caps = missing
            .iter()
            .map(|&j| (fraction * limits[j]).ln() - base)
            .collect();
        let start_ratios = missing
            .iter()
            .map(|&j| start.value(i, j).ln() - start.value(i, reference).ln())
            .collect();
        patterns.push(RowPattern {
            row: i,
            reference,
            missing,
            observed,
            observed_ratios,
            caps,
        });
        imputed.push(start_ratios);
    }

    let helmert_t = helmert_submatrix(dim)?.transpose();
    let ilr = AlphaParam::new(0.0)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut ridge_applied = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let completed = complete(batch, &patterns, &imputed)?;
        let coords = transform_batch(&completed, ilr)?.coords;
        let mean = column_means(&coords);
        let mut cov = sample_covariance(&coords);
        if cov.clone().cholesky().is_none() {
            cov += DMatrix::identity(dim - 1, dim - 1) * 1e-8;
            ridge_applied = true;
            if cov.clone().cholesky().is_none() {
                return Err(CodaError::SingularCovariance);
            }
        }

        let mut max_change: f64 = 0.0;
        let mut cache: Vec<Option<(DVector<f64>, DMatrix<f64>)>> = vec![None; dim];
        for (pattern, current) in patterns.iter().zip(imputed.iter_mut()) {
            let (ratio_mean, ratio_cov) = cache[pattern.reference]
                .get_or_insert_with(|| {
                    log_ratio_moments(&helmert_t, &mean, &cov, pattern.reference)
                })
                .clone();
            let updated = conditional_update(pattern, &ratio_mean, &ratio_cov)?;
            for (old, new) in current.iter_mut().zip(updated) {
                max_change = max_change.max((new - *old).abs());
                *old = new;
            }
        }
        if max_change < config.em_tolerance {
            converged = true;
            break;
        }
    }

    let result = complete(batch, &patterns, &imputed)?;
    let changed_cells = patterns
        .iter()
        .flat_map(|p| {
            p.missing.iter().map(|&j| ChangedCell {
                row: p.row,
                component: j,
                old: batch.value(p.row, j),
                new: result.value(p.row, j),
            })
        })
        .collect();
    Ok(ImputeResult {
        batch: result,
        iterations,
        changed_cells,
        converged,
        ridge_applied,
    })
}

/// Mean and covariance of `log(x_j / x_ref)` for `j != ref`, given the
/// Gaussian fitted to the ilr coordinates.
fn log_ratio_moments(
    helmert_t: &DMatrix<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    reference: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let dim = helmert_t.nrows();
    let d = dim - 1;
    let mut map = DMatrix::zeros(d, d);
    for (r, j) in (0..dim).filter(|&j| j != reference).enumerate() {
        for k in 0..d {
            map[(r, k)] = helmert_t[(j, k)] - helmert_t[(reference, k)];
        }
    }
    let m = &map * mean;
    let c = &map * cov * map.transpose();
    (m, c)
}

/// Index of component `j` among the log-ratio coordinates relative to `reference`.
fn ratio_index(j: usize, reference: usize) -> usize {
    if j < reference {
        j
    } else {
        j - 1
    }
}

fn conditional_update(
    pattern: &RowPattern,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let m_idx: Vec<usize> = pattern
        .missing
        .iter()
        .map(|&j| ratio_index(j, pattern.reference))
        .collect();
    let o_idx: Vec<usize> = pattern
        .observed
        .iter()
        .map(|&j| ratio_index(j, pattern.reference))
        .collect();
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| cov[(rows[a], cols[b])])
    };
    let s_mm = sub(&m_idx, &m_idx);
    let (cond_mean, cond_cov) = if o_idx.is_empty() {
        (
            DVector::from_iterator(m_idx.len(), m_idx.iter().map(|&k| mean[k])),
            s_mm,
        )
    } else {
        let s_mo = sub(&m_idx, &o_idx);
        let s_oo = sub(&o_idx, &o_idx);
        let chol = s_oo.cholesky().ok_or(CodaError::SingularCovariance)?;
        let dev = DVector::from_iterator(
            o_idx.len(),
            o_idx
                .iter()
                .zip(&pattern.observed_ratios)
                .map(|(&k, &v)| v - mean[k]),
        );
        let gain = chol.solve(&s_mo.transpose()).transpose();
        let cm = DVector::from_iterator(m_idx.len(), m_idx.iter().map(|&k| mean[k])) + &gain * dev;
        let cc = s_mm - &gain * s_mo.transpose();
        (cm, cc)
    };
    Ok((0..m_idx.len())
        .map(|a| {
            truncated_mean(
                cond_mean[a],
                cond_cov[(a, a)].max(0.0).sqrt(),
                pattern.caps[a],
            )
        })
        .collect())
}

/// Original observed parts plus `x_ref * exp(ratio)` at zero cells, re-closed.
fn complete(
    batch: &CompositionBatch,
    patterns: &[RowPattern],
    imputed: &[Vec<f64>],
) -> Result<CompositionBatch> {
    let mut rows: Vec<Vec<f64>> = (0..batch.n()).map(|i| batch.row_vec(i)).collect();
    for (pattern, ratios) in patterns.iter().zip(imputed) {
        let row = &mut rows[pattern.row];
        let base = row[pattern.reference];
        for (&j, &t) in pattern.missing.iter().zip(ratios) {
            row[j] = base * t.exp();
        }
    }
    CompositionBatch::from_rows(&rows, Some(batch.labels().to_vec()))
}
