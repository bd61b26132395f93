//! Estimators for logistic regression under missing data.
//!
//! Four ways of handling incomplete rows, all built on [`crate::glm`]:
//!
//! * complete-case analysis ([`fit_cc`]) — drop incomplete rows;
//! * inverse probability weighting ([`ipw`]) — reweight complete rows by
//!   the inverse of their probability of being complete;
//! * multiple imputation ([`mice`]) — fill the holes m times by chained
//!   equations and pool with Rubin's rules;
//! * maximum likelihood ([`em`]) — integrate the holes out of a factored
//!   joint model with an EM algorithm.
//!
//! Bootstrap standard errors ([`bootstrap`]) wrap any of them. Every entry
//! point is a pure function of `(table, spec, seed)`, so estimates can be
//! computed in parallel and replayed exactly.

pub mod bootstrap;
pub mod em;
pub mod ipw;
pub mod mice;

pub use bootstrap::{
    bootstrap_se, bootstrap_se_with, BootstrapMethod, BootstrapSe, MIN_RESAMPLES, SUCCESS_FLOOR,
};
pub use em::{expand_rows, fit_ml_em, CovariateModel, EmFit, EmOptions, Expansion};
pub use ipw::{fit_ipw, fit_propensity, PropensityFit, PropensitySource, PROPENSITY_FLOOR};
pub use mice::{mice_impute, rubin_pool, ImputationSet, PooledFit, MICE_DEFAULT_CYCLES};

use crate::glm::{fit_logistic, GlmError, GlmFit};
use crate::linalg::Mat;
use crate::table::{ColumnKind, Table};
use thiserror::Error;

/// Failures surfaced by the estimators.
#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Glm(#[from] GlmError),

    #[error("insufficient data: need at least {needed} complete analysis rows, found {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("imputation model failed: {detail}")]
    ImputationModel { detail: String },

    #[error("EM did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize, loglik_trace: Vec<f64> },

    #[error("dimension mismatch: {detail}")]
    Dimension { detail: String },

    #[error("bootstrap failed: only {successes} of {resamples} resamples refit successfully")]
    BootstrapFailure { successes: usize, resamples: usize },

    #[error("bad specification: {detail}")]
    BadSpec { detail: String },
}

/// The analysis model: a binary response regressed on named predictors,
/// with an intercept always present as the first coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub response: String,
    pub predictors: Vec<String>,
}

impl ModelSpec {
    pub fn new(response: &str, predictors: &[&str]) -> Self {
        ModelSpec {
            response: response.to_string(),
            predictors: predictors.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Coefficient names in report order: intercept first, then predictors.
    pub fn coef_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.predictors.len() + 1);
        names.push("intercept".to_string());
        names.extend(self.predictors.iter().cloned());
        names
    }

    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        self.predictors.len() + 1
    }

    /// Resolves column names against a table, checking the contract:
    /// every name exists, the response is binary and not a predictor.
    pub(crate) fn resolve(&self, table: &Table) -> Result<ResolvedSpec, EstimatorError> {
        if self.predictors.contains(&self.response) {
            return Err(EstimatorError::BadSpec {
                detail: format!("response {:?} is also listed as a predictor", self.response),
            });
        }
        for (i, a) in self.predictors.iter().enumerate() {
            if self.predictors[..i].contains(a) {
                return Err(EstimatorError::BadSpec {
                    detail: format!("predictor {a:?} listed twice"),
                });
            }
        }
        let y = table.column(&self.response).ok_or_else(|| EstimatorError::BadSpec {
            detail: format!("response column {:?} does not exist", self.response),
        })?;
        if table.columns()[y].kind != ColumnKind::Binary {
            return Err(EstimatorError::BadSpec {
                detail: format!("response column {:?} is not binary", self.response),
            });
        }
        let mut x = Vec::with_capacity(self.predictors.len());
        for name in &self.predictors {
            x.push(table.column(name).ok_or_else(|| EstimatorError::BadSpec {
                detail: format!("predictor column {name:?} does not exist"),
            })?);
        }
        Ok(ResolvedSpec { y, x })
    }
}

/// Column indices of a [`ModelSpec`] within one concrete table.
pub(crate) struct ResolvedSpec {
    pub y: usize,
    pub x: Vec<usize>,
}

impl ResolvedSpec {
    /// Rows observed on the response and every predictor.
    pub fn analysis_rows(&self, table: &Table) -> Vec<usize> {
        (0..table.n_rows())
            .filter(|&r| {
                table.get(r, self.y).is_some() && self.x.iter().all(|&c| table.get(r, c).is_some())
            })
            .collect()
    }

    /// Design matrix `[1, predictors...]` and response over the given rows,
    /// which must all be analysis-complete.
    pub fn design(&self, table: &Table, rows: &[usize]) -> (Mat, Vec<f64>) {
        let p = self.x.len() + 1;
        let x = Mat::from_fn(rows.len(), p, |i, j| {
            if j == 0 {
                1.0
            } else {
                table.get(rows[i], self.x[j - 1]).expect("analysis-complete row")
            }
        });
        let y = rows.iter().map(|&r| table.get(r, self.y).expect("analysis-complete row")).collect();
        (x, y)
    }

    /// Minimum complete-row count the subset estimators insist on.
    pub fn min_rows(&self) -> usize {
        self.x.len() + 2
    }
}

/// Complete-case analysis: the model fit on analysis-complete rows only,
/// with unit weights.
pub fn fit_cc(table: &Table, spec: &ModelSpec) -> Result<GlmFit, EstimatorError> {
    let rs = spec.resolve(table)?;
    let rows = rs.analysis_rows(table);
    if rows.len() < rs.min_rows() {
        return Err(EstimatorError::InsufficientData { needed: rs.min_rows(), got: rows.len() });
    }
    let (x, y) = rs.design(table, &rows);
    let w = vec![1.0; rows.len()];
    Ok(fit_logistic(&x, &y, &w)?)
}
