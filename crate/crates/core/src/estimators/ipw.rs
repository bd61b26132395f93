//! Inverse probability weighting.
//!
//! Complete rows are weighted by the inverse of their probability of being
//! complete. The propensity is either the known design rate ("theoretical",
//! the study's IPW1) or a logistic regression of the blockwise completeness
//! indicator on always-observed drivers ("estimated", IPW2). Reported
//! covariance is the plain weighted-GLM covariance, which treats the
//! weights as fixed constants; with estimated weights that understates the
//! true variability — a limitation the simulation lab's SE-accuracy study
//! measures instead of correcting.

use super::{EstimatorError, ModelSpec};
use crate::glm::{fit_logistic, logistic_prob, GlmFit};
use crate::linalg::{dot, Mat};
use crate::table::{MissMask, Table};

/// Lower clamp for propensities: inverse weights never exceed 100. The
/// clamp count is reported so a binding floor is visible, not silent.
pub const PROPENSITY_FLOOR: f64 = 0.01;

/// Where a propensity came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensitySource {
    /// Known design rates (the study's IPW1).
    Theoretical,
    /// Logistic model of completeness on observed drivers (IPW2).
    Estimated,
}

/// Per-row probability of being fully observed.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    /// `p[i] = P(row i fully observed | drivers)`, floored.
    pub p: Vec<f64>,
    pub source: PropensitySource,
    /// The completeness-model fit when estimated.
    pub glm: Option<GlmFit>,
    /// How many rows the floor clamped.
    pub n_floored: usize,
}

impl PropensityFit {
    /// Wraps known design probabilities, enforcing `(0, 1]` and the floor.
    pub fn theoretical(p: Vec<f64>) -> Result<Self, EstimatorError> {
        let mut n_floored = 0;
        let mut out = Vec::with_capacity(p.len());
        for (i, &pi) in p.iter().enumerate() {
            if !pi.is_finite() || pi <= 0.0 || pi > 1.0 {
                return Err(EstimatorError::BadSpec {
                    detail: format!("propensity {pi} at row {i} is outside (0, 1]"),
                });
            }
            if pi < PROPENSITY_FLOOR {
                n_floored += 1;
                out.push(PROPENSITY_FLOOR);
            } else {
                out.push(pi);
            }
        }
        Ok(PropensityFit { p: out, source: PropensitySource::Theoretical, glm: None, n_floored })
    }
}

/// Fits the completeness propensity: a logistic regression of the blockwise
/// indicator (1 = row fully observed) on the driver columns.
///
/// A table with no incomplete rows makes the indicator constant and the fit
/// degenerate; the error propagates so the caller can fall back to unit
/// weights where that is the documented behavior.
pub fn fit_propensity(
    table: &Table,
    mask: &MissMask,
    drivers: &[&str],
) -> Result<PropensityFit, EstimatorError> {
    if mask.n_rows() != table.n_rows() || mask.n_cols() != table.n_cols() {
        return Err(EstimatorError::Dimension {
            detail: format!(
                "mask is {}x{} but table is {}x{}",
                mask.n_rows(),
                mask.n_cols(),
                table.n_rows(),
                table.n_cols()
            ),
        });
    }
    if drivers.is_empty() {
        return Err(EstimatorError::BadSpec { detail: "no driver columns given".into() });
    }
    let mut cols = Vec::with_capacity(drivers.len());
    for name in drivers {
        let c = table.column(name).ok_or_else(|| EstimatorError::BadSpec {
            detail: format!("driver column {name:?} does not exist"),
        })?;
        if table.col_missing(c) > 0 {
            return Err(EstimatorError::BadSpec {
                detail: format!("driver column {name:?} has missing cells"),
            });
        }
        cols.push(c);
    }
    let n = table.n_rows();
    let x = Mat::from_fn(n, cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            table.get(i, cols[j - 1]).expect("driver fully observed")
        }
    });
    let r: Vec<f64> =
        (0..n).map(|i| if mask.row_fully_observed(i) { 1.0 } else { 0.0 }).collect();
    let glm = fit_logistic(&x, &r, &vec![1.0; n])?;
    let mut n_floored = 0;
    let p = (0..n)
        .map(|i| {
            let pi = logistic_prob(dot(x.row(i), &glm.beta));
            if pi < PROPENSITY_FLOOR {
                n_floored += 1;
                PROPENSITY_FLOOR
            } else {
                pi
            }
        })
        .collect();
    Ok(PropensityFit { p, source: PropensitySource::Estimated, glm: Some(glm), n_floored })
}

/// Inverse-probability-weighted fit: the analysis model on complete rows,
/// each weighted by `1 / p_i`.
pub fn fit_ipw(
    table: &Table,
    spec: &ModelSpec,
    prop: &PropensityFit,
) -> Result<GlmFit, EstimatorError> {
    if prop.p.len() != table.n_rows() {
        return Err(EstimatorError::Dimension {
            detail: format!(
                "propensity has {} entries for a table of {} rows",
                prop.p.len(),
                table.n_rows()
            ),
        });
    }
    let rs = spec.resolve(table)?;
    let rows = rs.analysis_rows(table);
    if rows.len() < rs.min_rows() {
        return Err(EstimatorError::InsufficientData { needed: rs.min_rows(), got: rows.len() });
    }
    let (x, y) = rs.design(table, &rows);
    let w: Vec<f64> = rows.iter().map(|&r| 1.0 / prop.p[r]).collect();
    Ok(fit_logistic(&x, &y, &w)?)
}
