//! Nonparametric bootstrap standard errors.
//!
//! Rows are resampled with replacement, the chosen estimator is refit on
//! each resample, and the standard error is the spread of the refit
//! coefficients. Resamples that fail (separation, degenerate weights,
//! non-convergence) are dropped; the run aborts only when more than a
//! tenth of them fail, so an occasional pathological resample does not
//! poison the estimate while a systematically fragile fit still surfaces
//! as an error.

use rand::Rng;
use rayon::prelude::*;

use super::{
    fit_cc, fit_ipw, fit_ml_em, fit_propensity, mice_impute, rubin_pool, EmOptions,
    EstimatorError, ModelSpec, PropensityFit,
};
use crate::glm::GlmError;
use crate::stream::StreamKey;
use crate::table::Table;

/// Fewest resamples accepted; below this the spread estimate is noise.
pub const MIN_RESAMPLES: usize = 50;

/// Share of resamples that must refit successfully.
pub const SUCCESS_FLOOR: f64 = 0.9;

/// Which estimator to refit on each resample.
#[derive(Debug, Clone)]
pub enum BootstrapMethod {
    /// Complete-case logistic regression.
    Cc,
    /// Inverse-probability weighting with the propensity re-estimated on
    /// each resample from these driver columns. A resample with no
    /// incomplete rows falls back to unit weights.
    Ipw { drivers: Vec<String> },
    /// Multiple imputation, re-run per resample; the resample's point
    /// estimate is the pooled coefficient vector.
    Mi { m: usize, cycles: usize },
    /// Maximum likelihood via EM.
    Ml,
}

/// Bootstrap spread of the coefficient estimates.
#[derive(Debug, Clone)]
pub struct BootstrapSe {
    /// Per-coefficient standard error over the successful resamples.
    pub se: Vec<f64>,
    /// Resamples whose refit succeeded.
    pub successes: usize,
    /// Resamples attempted.
    pub resamples: usize,
}

/// Bootstrap engine over an arbitrary refit: `refit(resampled_table, key)`
/// returns the coefficient vector for one resample, with `key` a stream
/// reserved for any randomness the refit itself needs.
pub fn bootstrap_se_with<F>(
    table: &Table,
    resamples: usize,
    key: StreamKey,
    n_coef: usize,
    refit: F,
) -> Result<BootstrapSe, EstimatorError>
where
    F: Fn(&Table, StreamKey) -> Result<Vec<f64>, EstimatorError> + Sync,
{
    if resamples < MIN_RESAMPLES {
        return Err(EstimatorError::BadSpec {
            detail: format!("need at least {MIN_RESAMPLES} resamples, got {resamples}"),
        });
    }
    let n = table.n_rows();
    if n == 0 {
        return Err(EstimatorError::InsufficientData { needed: 1, got: 0 });
    }

    let draws: Vec<Option<Vec<f64>>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let sub = key.child_index(b as u64);
            let mut rng = sub.child_label("rows").rng();
            let rows: Vec<usize> =
                (0..n).map(|_| rng.random_range(0..n)).collect();
            let boot = table.subset_rows(&rows);
            refit(&boot, sub.child_label("fit")).ok()
        })
        .collect();

    let mut betas: Vec<&Vec<f64>> = Vec::with_capacity(resamples);
    for d in draws.iter().flatten() {
        if d.len() != n_coef {
            return Err(EstimatorError::Dimension {
                detail: format!("refit returned {} coefficients, expected {n_coef}", d.len()),
            });
        }
        betas.push(d);
    }
    let successes = betas.len();
    if (successes as f64) < SUCCESS_FLOOR * (resamples as f64) {
        return Err(EstimatorError::BootstrapFailure { successes, resamples });
    }

    let mut se = vec![0.0; n_coef];
    for (j, s) in se.iter_mut().enumerate() {
        let mean = betas.iter().map(|b| b[j]).sum::<f64>() / successes as f64;
        let ss = betas.iter().map(|b| (b[j] - mean).powi(2)).sum::<f64>();
        *s = (ss / (successes - 1) as f64).sqrt();
    }
    Ok(BootstrapSe { se, successes, resamples })
}

/// Bootstrap standard errors for one of the built-in estimators.
pub fn bootstrap_se(
    table: &Table,
    spec: &ModelSpec,
    method: &BootstrapMethod,
    resamples: usize,
    key: StreamKey,
) -> Result<BootstrapSe, EstimatorError> {
    let n_coef = spec.n_coef();
    match method {
        BootstrapMethod::Cc => bootstrap_se_with(table, resamples, key, n_coef, |t, _| {
            fit_cc(t, spec).map(|f| f.beta)
        }),
        BootstrapMethod::Ipw { drivers } => {
            let names: Vec<&str> = drivers.iter().map(String::as_str).collect();
            bootstrap_se_with(table, resamples, key, n_coef, move |t, _| {
                let mask = t.mask();
                let prop = match fit_propensity(t, &mask, &names) {
                    Ok(p) => p,
                    // A resample where completeness is constant carries no
                    // propensity information; weight it uniformly.
                    Err(EstimatorError::Glm(GlmError::Degenerate { .. })) => {
                        PropensityFit::theoretical(vec![1.0; t.n_rows()])?
                    }
                    Err(e) => return Err(e),
                };
                fit_ipw(t, spec, &prop).map(|f| f.beta)
            })
        }
        BootstrapMethod::Mi { m, cycles } => {
            bootstrap_se_with(table, resamples, key, n_coef, move |t, k| {
                let set = mice_impute(t, *m, *cycles, k)?;
                let fits = set
                    .tables
                    .iter()
                    .map(|ct| fit_cc(ct, spec))
                    .collect::<Result<Vec<_>, _>>()?;
                rubin_pool(&fits).map(|p| p.beta_bar)
            })
        }
        BootstrapMethod::Ml => {
            let opts = EmOptions::default();
            bootstrap_se_with(table, resamples, key, n_coef, move |t, _| {
                fit_ml_em(t, spec, &opts).map(|f| f.beta)
            })
        }
    }
}
