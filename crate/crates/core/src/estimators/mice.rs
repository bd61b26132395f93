//! Multiple imputation by chained equations, and Rubin's pooling rules.
//!
//! Each of the m imputations starts from a uniform draw over the column's
//! observed values and then cycles through the incomplete columns
//! (ascending missing count, ties in table order), regressing each on all
//! other columns and imputing from a *drawn* predictive model — "norm" for
//! continuous columns, "logreg" for binary ones — so that parameter
//! uncertainty propagates into the completed tables. Pooling follows
//! Rubin's rules exactly: total variance = within + (1 + 1/m)·between.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::EstimatorError;
use crate::glm::{
    fit_linear_gaussian, fit_logistic_opts, logistic_prob, GlmError, GlmFit, IrlsOptions,
};
use crate::linalg::{dot, psd_root, Mat};
use crate::stream::StreamKey;
use crate::table::{ColumnKind, Table};

/// Chained-equation cycles per imputation.
pub const MICE_DEFAULT_CYCLES: usize = 10;

/// Ridge strength for the separation fallback in within-cycle logistic fits.
const FALLBACK_RIDGE: f64 = 1e-4;

/// A set of m completed tables drawn by chained equations.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub m: usize,
    pub tables: Vec<Table>,
    /// Cycles actually run per imputation.
    pub cycles: usize,
    /// Key of the stream that produced the set.
    pub seed: u64,
    /// How many within-cycle logistic fits needed the ridge fallback.
    pub ridge_fallbacks: usize,
}

/// Rubin-pooled estimate over m per-imputation fits.
#[derive(Debug, Clone)]
pub struct PooledFit {
    /// Mean of the m coefficient vectors.
    pub beta_bar: Vec<f64>,
    /// Within-imputation variance (mean of per-fit variance diagonals).
    pub within: Vec<f64>,
    /// Between-imputation variance (sample variance across imputations).
    pub between: Vec<f64>,
    /// Total variance: `within + (1 + 1/m)·between`, exactly.
    pub total: Vec<f64>,
    /// Per-coefficient degrees of freedom; `+∞` when between is zero.
    pub df: Vec<f64>,
}

impl PooledFit {
    /// Pooled standard errors, the square roots of the total variances.
    pub fn se(&self) -> Vec<f64> {
        self.total.iter().map(|t| t.max(0.0).sqrt()).collect()
    }
}

/// One column's imputation plan.
struct ColumnPlan {
    col: usize,
    kind: ColumnKind,
    /// Rows missing in the source table — the cells this plan must fill.
    missing_rows: Vec<usize>,
    /// Rows observed in the source table — the fitting subset.
    observed_rows: Vec<usize>,
    /// Pool of observed values for the uniform initialization.
    observed_values: Vec<f64>,
}

fn build_plans(table: &Table) -> Result<Vec<ColumnPlan>, EstimatorError> {
    let mut plans = Vec::new();
    for c in 0..table.n_cols() {
        let missing_rows: Vec<usize> =
            (0..table.n_rows()).filter(|&r| table.get(r, c).is_none()).collect();
        if missing_rows.is_empty() {
            continue;
        }
        let observed_rows: Vec<usize> =
            (0..table.n_rows()).filter(|&r| table.get(r, c).is_some()).collect();
        if observed_rows.is_empty() {
            return Err(EstimatorError::ImputationModel {
                detail: format!(
                    "column {:?} has no observed values to learn from",
                    table.columns()[c].name
                ),
            });
        }
        let observed_values = observed_rows.iter().map(|&r| table.get(r, c).unwrap()).collect();
        plans.push(ColumnPlan {
            col: c,
            kind: table.columns()[c].kind,
            missing_rows,
            observed_rows,
            observed_values,
        });
    }
    // Visit order: ascending missing count, ties kept in table order.
    plans.sort_by_key(|p| p.missing_rows.len());
    Ok(plans)
}

/// Design matrix `[1, all columns except `skip`]` over the given rows of a
/// fully imputed working table.
fn design_excluding(work: &Table, skip: usize, rows: &[usize]) -> Mat {
    let others: Vec<usize> = (0..work.n_cols()).filter(|&c| c != skip).collect();
    Mat::from_fn(rows.len(), others.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            work.get(rows[i], others[j - 1]).expect("working table is complete")
        }
    })
}

/// Multivariate-normal coefficient draw `β* = β̂ + F·g`, `F Fᵀ = cov`.
fn draw_beta(beta_hat: &[f64], cov: &Mat, rng: &mut impl Rng) -> Vec<f64> {
    let f = psd_root(cov);
    let g: Vec<f64> = (0..beta_hat.len()).map(|_| rng.sample(StandardNormal)).collect();
    let fg = f.matvec(&g);
    beta_hat.iter().zip(&fg).map(|(b, e)| b + e).collect()
}

/// One "logreg" step: fit, fall back to a ridge on separation or
/// non-convergence, draw β*, impute Bernoulli(π(β*)).
fn impute_logreg(
    work: &mut Table,
    plan: &ColumnPlan,
    rng: &mut impl Rng,
    warm: &mut Option<Vec<f64>>,
    fallbacks: &mut usize,
) -> Result<(), EstimatorError> {
    let x_obs = design_excluding(work, plan.col, &plan.observed_rows);
    let y_obs: Vec<f64> =
        plan.observed_rows.iter().map(|&r| work.get(r, plan.col).unwrap()).collect();
    let w = vec![1.0; plan.observed_rows.len()];
    let opts = IrlsOptions { start: warm.clone(), ..IrlsOptions::default() };
    let fit = match fit_logistic_opts(&x_obs, &y_obs, &w, &opts) {
        Ok(fit) if fit.converged => fit,
        // Quasi-separation shows up three ways in small per-column fits: the
        // divergence bound fires, the iteration cap is hit short of the score
        // tolerance, or the weighted information matrix collapses to singular
        // as fitted probabilities saturate. All three get the ridge refit so
        // that imputed-table generation stays total.
        Ok(_) | Err(GlmError::Separation { .. }) | Err(GlmError::Singular(_)) => {
            *fallbacks += 1;
            let ridge_opts = IrlsOptions { ridge: FALLBACK_RIDGE, ..IrlsOptions::default() };
            let fit = fit_logistic_opts(&x_obs, &y_obs, &w, &ridge_opts)
                .map_err(|e| EstimatorError::ImputationModel {
                    detail: format!(
                        "ridge fallback for column {:?} failed: {e}",
                        work.columns()[plan.col].name
                    ),
                })?;
            if !fit.converged {
                return Err(EstimatorError::ImputationModel {
                    detail: format!(
                        "ridge fallback for column {:?} did not converge",
                        work.columns()[plan.col].name
                    ),
                });
            }
            fit
        }
        Err(e) => {
            return Err(EstimatorError::ImputationModel {
                detail: format!("column {:?}: {e}", work.columns()[plan.col].name),
            })
        }
    };
    *warm = Some(fit.beta.clone());
    let beta_star = draw_beta(&fit.beta, &fit.covariance, rng);
    let x_mis = design_excluding(work, plan.col, &plan.missing_rows);
    for (i, &r) in plan.missing_rows.iter().enumerate() {
        let pi = logistic_prob(dot(x_mis.row(i), &beta_star));
        let u: f64 = rng.random();
        work.set(r, plan.col, Some(if u < pi { 1.0 } else { 0.0 }));
    }
    Ok(())
}

/// One "norm" step: fit, draw σ*² from its scaled inverse chi-square and
/// β* from N(β̂, σ*²(XᵀX)⁻¹), impute ŷ + σ*ε.
fn impute_norm(
    work: &mut Table,
    plan: &ColumnPlan,
    rng: &mut impl Rng,
) -> Result<(), EstimatorError> {
    let x_obs = design_excluding(work, plan.col, &plan.observed_rows);
    let y_obs: Vec<f64> =
        plan.observed_rows.iter().map(|&r| work.get(r, plan.col).unwrap()).collect();
    let w = vec![1.0; plan.observed_rows.len()];
    let fit = fit_linear_gaussian(&x_obs, &y_obs, &w).map_err(|e| {
        EstimatorError::ImputationModel {
            detail: format!("column {:?}: {e}", work.columns()[plan.col].name),
        }
    })?;
    let df = fit.df_resid as f64;
    let chi2: f64 = ChiSquared::new(df).expect("df >= 1").sample(rng);
    let sigma2_star = df * fit.sigma * fit.sigma / chi2;
    let p = fit.beta.len();
    let scaled_cov =
        Mat::from_fn(p, p, |i, j| sigma2_star * fit.xtx_inverse.at(i, j));
    let beta_star = draw_beta(&fit.beta, &scaled_cov, rng);
    let sigma_star = sigma2_star.sqrt();
    let x_mis = design_excluding(work, plan.col, &plan.missing_rows);
    for (i, &r) in plan.missing_rows.iter().enumerate() {
        let eps: f64 = rng.sample(StandardNormal);
        work.set(r, plan.col, Some(dot(x_mis.row(i), &beta_star) + sigma_star * eps));
    }
    Ok(())
}

/// Draws m completed tables by chained equations.
///
/// Deterministic given the key; every originally observed cell is carried
/// into each completed table unchanged.
pub fn mice_impute(
    table: &Table,
    m: usize,
    cycles: usize,
    key: StreamKey,
) -> Result<ImputationSet, EstimatorError> {
    if m == 0 {
        return Err(EstimatorError::BadSpec { detail: "imputation count m must be positive".into() });
    }
    if cycles == 0 {
        return Err(EstimatorError::BadSpec { detail: "cycle count must be positive".into() });
    }
    let plans = build_plans(table)?;
    let mut tables = Vec::with_capacity(m);
    let mut ridge_fallbacks = 0;
    for imp in 0..m {
        let mut rng = key.child_index(imp as u64).rng();
        let mut work = table.clone();
        // Initialize every hole from the column's observed empirical
        // distribution, then let the cycles overwrite.
        for plan in &plans {
            for &r in &plan.missing_rows {
                let pick = rng.random_range(0..plan.observed_values.len());
                work.set(r, plan.col, Some(plan.observed_values[pick]));
            }
        }
        let mut warm: Vec<Option<Vec<f64>>> = vec![None; plans.len()];
        for _ in 0..cycles {
            for (pi, plan) in plans.iter().enumerate() {
                match plan.kind {
                    ColumnKind::Binary => {
                        impute_logreg(&mut work, plan, &mut rng, &mut warm[pi], &mut ridge_fallbacks)?
                    }
                    ColumnKind::Continuous => impute_norm(&mut work, plan, &mut rng)?,
                }
            }
        }
        debug_assert_eq!(work.n_missing(), 0);
        tables.push(work);
    }
    Ok(ImputationSet { m, tables, cycles, seed: key.key(), ridge_fallbacks })
}

/// Pools m per-imputation fits by Rubin's rules.
pub fn rubin_pool(fits: &[GlmFit]) -> Result<PooledFit, EstimatorError> {
    let m = fits.len();
    if m < 2 {
        return Err(EstimatorError::BadSpec {
            detail: format!("pooling needs at least 2 fits, got {m}"),
        });
    }
    let p = fits[0].beta.len();
    for (i, fit) in fits.iter().enumerate() {
        if fit.beta.len() != p {
            return Err(EstimatorError::Dimension {
                detail: format!("fit {i} has {} coefficients, expected {p}", fit.beta.len()),
            });
        }
    }
    let mf = m as f64;
    let mut beta_bar = vec![0.0; p];
    let mut within = vec![0.0; p];
    for fit in fits {
        for j in 0..p {
            beta_bar[j] += fit.beta[j] / mf;
            within[j] += fit.covariance.at(j, j) / mf;
        }
    }
    let mut between = vec![0.0; p];
    for fit in fits {
        for j in 0..p {
            let d = fit.beta[j] - beta_bar[j];
            between[j] += d * d / (mf - 1.0);
        }
    }
    let infl = 1.0 + 1.0 / mf;
    let total: Vec<f64> = (0..p).map(|j| within[j] + infl * between[j]).collect();
    let df: Vec<f64> = (0..p)
        .map(|j| {
            if between[j] == 0.0 {
                f64::INFINITY
            } else {
                let r = within[j] / (infl * between[j]);
                (mf - 1.0) * (1.0 + r) * (1.0 + r)
            }
        })
        .collect();
    Ok(PooledFit { beta_bar, within, between, total, df })
}
