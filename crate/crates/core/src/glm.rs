//! Weighted logistic and Gaussian-linear model fitting.
//!
//! The logistic fitter is iteratively reweighted least squares with
//! step-halving, run on weights normalized to mean one so that stopping
//! behaves identically under positive rescaling of the weights (a fit with
//! all-constant weights walks the same path as an unweighted fit). After
//! convergence, up to two full Newton polish steps restore the score
//! tolerance on the original weight scale. Reported covariance is the
//! inverse of the weighted observed information at the estimate, which for
//! externally estimated weights understates variability; the simulation
//! lab measures that effect rather than correcting it here.

use crate::linalg::{dot, inv_spd, solve_spd, Mat, SingularError};
use thiserror::Error;

/// Failures surfaced by the fitting routines.
#[derive(Debug, Clone, Error)]
pub enum GlmError {
    /// Coefficient norm crossed the divergence bound during iteration,
    /// the classic signature of (quasi-)separated data.
    #[error("separation suspected: coefficient max-abs {norm:.3e} exceeded {bound:.1e}")]
    Separation { norm: f64, bound: f64 },

    /// The response carries no information under the given weights.
    #[error("degenerate fit: {detail}")]
    Degenerate { detail: String },

    /// Information matrix (or cross-product matrix) is numerically singular.
    #[error(transparent)]
    Singular(#[from] SingularError),

    /// Inputs violate the fitting contract (dimensions, non-finite values,
    /// wrong response coding, negative weights).
    #[error("invalid input: {detail}")]
    BadInput { detail: String },
}

/// Tuning knobs for the logistic fitter. Defaults are the ones every
/// estimator in this crate uses; tests pin them.
#[derive(Debug, Clone)]
pub struct IrlsOptions {
    /// Maximum IRLS iterations before giving up (`converged = false`).
    pub max_iter: usize,
    /// Convergence threshold on the max-abs weighted score.
    pub score_tol: f64,
    /// Coefficient max-abs bound that triggers [`GlmError::Separation`].
    pub divergence_bound: f64,
    /// Ridge penalty strength; zero for a plain maximum likelihood fit.
    pub ridge: f64,
    /// Optional warm start; zeros otherwise.
    pub start: Option<Vec<f64>>,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 50,
            score_tol: 1e-8,
            divergence_bound: 1e4,
            ridge: 0.0,
            start: None,
        }
    }
}

/// A fitted logistic regression.
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// Coefficients, one per design column.
    pub beta: Vec<f64>,
    /// Inverse weighted observed information at `beta`.
    pub covariance: Mat,
    /// Weighted log-likelihood at `beta` (unpenalized, original weights).
    pub loglik: f64,
    /// Newton/IRLS steps actually taken.
    pub iterations: usize,
    /// Whether the score tolerance was met.
    pub converged: bool,
    /// Number of rows with positive weight.
    pub n_used: usize,
}

impl GlmFit {
    /// Standard errors: square roots of the covariance diagonal.
    pub fn se(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|j| self.covariance.at(j, j).max(0.0).sqrt()).collect()
    }
}

/// A weighted least-squares fit of a Gaussian-linear model.
#[derive(Debug, Clone)]
pub struct LinearGaussianFit {
    /// Coefficients, one per design column.
    pub beta: Vec<f64>,
    /// Residual scale: sqrt of weighted RSS over residual degrees of freedom.
    pub sigma: f64,
    /// Inverse of the weighted cross-product matrix XᵀWX.
    pub xtx_inverse: Mat,
    /// Number of rows with positive weight.
    pub n_used: usize,
    /// Residual degrees of freedom, `n_used - p`.
    pub df_resid: usize,
}

/// Numerically stable inverse logit.
#[inline]
pub fn logistic_prob(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(eta))` without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Log of the Bernoulli pmf under a logistic model, `ln P(Y = y | eta)`.
#[inline]
pub fn bernoulli_logpmf(y: f64, eta: f64) -> f64 {
    y * eta - softplus(eta)
}

/// Weighted Bernoulli log-likelihood of `beta` for the given design.
pub fn weighted_loglik(x: &Mat, y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.rows() {
        if w[i] > 0.0 {
            ll += w[i] * bernoulli_logpmf(y[i], dot(x.row(i), beta));
        }
    }
    ll
}

/// Weighted score and observed information at `beta`, with an optional
/// ridge term folded into both.
fn score_info(x: &Mat, y: &[f64], w: &[f64], beta: &[f64], ridge: f64) -> (Vec<f64>, Mat) {
    let p = x.cols();
    let mut g = vec![0.0; p];
    let mut info = Mat::zeros(p, p);
    for i in 0..x.rows() {
        if w[i] <= 0.0 {
            continue;
        }
        let row = x.row(i);
        let pi = logistic_prob(dot(row, beta));
        let r = w[i] * (y[i] - pi);
        let v = w[i] * pi * (1.0 - pi);
        for j in 0..p {
            g[j] += r * row[j];
            for k in 0..=j {
                info.set(j, k, info.at(j, k) + v * row[j] * row[k]);
            }
        }
    }
    for j in 0..p {
        g[j] -= ridge * beta[j];
        info.set(j, j, info.at(j, j) + ridge);
        for k in 0..j {
            info.set(k, j, info.at(j, k));
        }
    }
    (g, info)
}

fn penalized_loglik(x: &Mat, y: &[f64], w: &[f64], beta: &[f64], ridge: f64) -> f64 {
    weighted_loglik(x, y, w, beta) - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn validate_common(x: &Mat, y: &[f64], w: &[f64]) -> Result<(), GlmError> {
    if x.rows() != y.len() || x.rows() != w.len() {
        return Err(GlmError::BadInput {
            detail: format!(
                "design has {} rows but response has {} and weights {}",
                x.rows(),
                y.len(),
                w.len()
            ),
        });
    }
    if x.cols() == 0 {
        return Err(GlmError::BadInput { detail: "design has no columns".into() });
    }
    if !x.is_finite() {
        return Err(GlmError::BadInput { detail: "non-finite value in design matrix".into() });
    }
    for (i, &wi) in w.iter().enumerate() {
        if !wi.is_finite() || wi < 0.0 {
            return Err(GlmError::BadInput {
                detail: format!("weight {wi} at row {i} is not a finite nonnegative number"),
            });
        }
    }
    Ok(())
}

/// Fits a logistic regression with unit options. See [`fit_logistic_opts`].
pub fn fit_logistic(x: &Mat, y: &[f64], w: &[f64]) -> Result<GlmFit, GlmError> {
    fit_logistic_opts(x, y, w, &IrlsOptions::default())
}

/// Fits a weighted logistic regression by IRLS with step-halving.
///
/// The response must be coded 0/1 and weights must be finite and
/// nonnegative; rows with zero weight are ignored. A response that is
/// constant over the positively weighted rows is rejected as degenerate.
/// Divergence past the coefficient bound reports separation; hitting the
/// iteration cap returns a fit with `converged = false` rather than an
/// error, so callers decide how to account for it.
pub fn fit_logistic_opts(
    x: &Mat,
    y: &[f64],
    w: &[f64],
    opts: &IrlsOptions,
) -> Result<GlmFit, GlmError> {
    validate_common(x, y, w)?;
    let (n, p) = (x.rows(), x.cols());
    for (i, &yi) in y.iter().enumerate() {
        if yi != 0.0 && yi != 1.0 {
            return Err(GlmError::BadInput {
                detail: format!("response value {yi} at row {i} is not 0/1"),
            });
        }
    }
    let n_used = w.iter().filter(|&&wi| wi > 0.0).count();
    if n_used == 0 {
        return Err(GlmError::Degenerate { detail: "all weights are zero".into() });
    }
    let (mut w1, mut w0) = (0.0, 0.0);
    let mut w_sum = 0.0;
    for i in 0..n {
        w_sum += w[i];
        if y[i] == 1.0 {
            w1 += w[i];
        } else {
            w0 += w[i];
        }
    }
    if w1 == 0.0 || w0 == 0.0 {
        return Err(GlmError::Degenerate {
            detail: "response is constant over the positively weighted rows".into(),
        });
    }

    // Normalize weights to mean one over the used rows: estimates are
    // invariant to positive rescaling, and normalizing makes the stopping
    // rule invariant too.
    let w_bar = w_sum / n_used as f64;
    let wn: Vec<f64> = w.iter().map(|&wi| wi / w_bar).collect();

    let mut beta = match &opts.start {
        Some(b) => {
            if b.len() != p || b.iter().any(|v| !v.is_finite()) {
                return Err(GlmError::BadInput {
                    detail: "warm start has wrong length or non-finite entries".into(),
                });
            }
            b.clone()
        }
        None => vec![0.0; p],
    };
    let mut ll = penalized_loglik(x, y, &wn, &beta, opts.ridge);
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let (g, info) = score_info(x, y, &wn, &beta, opts.ridge);
        if max_abs(&g) < opts.score_tol {
            converged = true;
            break;
        }
        let delta = solve_spd(&info, &g)?;
        // Step-halving keeps the (penalized) log-likelihood non-decreasing.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let cand: Vec<f64> =
                beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let cand_ll = penalized_loglik(x, y, &wn, &cand, opts.ridge);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-13 * (1.0 + ll.abs()) {
                accepted = Some((cand, cand_ll));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            break;
        };
        beta = cand;
        ll = cand_ll;
        iterations += 1;
        let norm = max_abs(&beta);
        if norm > opts.divergence_bound {
            return Err(GlmError::Separation { norm, bound: opts.divergence_bound });
        }
    }

    // Polish: full Newton steps push the score to the floor so the
    // tolerance also holds on the original, un-normalized weight scale.
    if converged {
        for _ in 0..2 {
            let (g, info) = score_info(x, y, &wn, &beta, opts.ridge);
            let Ok(delta) = solve_spd(&info, &g) else {
                break;
            };
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + d).collect();
            let cand_ll = penalized_loglik(x, y, &wn, &cand, opts.ridge);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = cand;
                ll = cand_ll;
                iterations += 1;
            } else {
                break;
            }
        }
    }

    // Covariance on the original weight scale (ridge rescales with it).
    let (_, info) = score_info(x, y, w, &beta, opts.ridge * w_bar);
    let covariance = inv_spd(&info)?;
    Ok(GlmFit {
        loglik: weighted_loglik(x, y, w, &beta),
        beta,
        covariance,
        iterations,
        converged,
        n_used,
    })
}

/// Intermediate weighted least-squares quantities shared by the public
/// Gaussian fit and the EM M-step, which divides the residual sum of
/// squares by the total weight instead of the residual degrees of freedom.
pub(crate) struct WlsCore {
    pub beta: Vec<f64>,
    pub xtx_inverse: Mat,
    pub rss_w: f64,
    pub w_sum: f64,
    pub n_used: usize,
}

pub(crate) fn wls_core(x: &Mat, y: &[f64], w: &[f64]) -> Result<WlsCore, GlmError> {
    validate_common(x, y, w)?;
    for (i, &yi) in y.iter().enumerate() {
        if !yi.is_finite() {
            return Err(GlmError::BadInput {
                detail: format!("non-finite response at row {i}"),
            });
        }
    }
    let (n, p) = (x.rows(), x.cols());
    let mut xtwx = Mat::zeros(p, p);
    let mut xtwy = vec![0.0; p];
    let mut w_sum = 0.0;
    let mut n_used = 0;
    for i in 0..n {
        if w[i] <= 0.0 {
            continue;
        }
        n_used += 1;
        w_sum += w[i];
        let row = x.row(i);
        for j in 0..p {
            xtwy[j] += w[i] * y[i] * row[j];
            for k in 0..=j {
                xtwx.set(j, k, xtwx.at(j, k) + w[i] * row[j] * row[k]);
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            xtwx.set(k, j, xtwx.at(j, k));
        }
    }
    if n_used == 0 {
        return Err(GlmError::Degenerate { detail: "all weights are zero".into() });
    }
    let chol = crate::linalg::Cholesky::factor(&xtwx)?;
    let beta = chol.solve(&xtwy);
    let xtx_inverse = chol.inverse();
    let mut rss_w = 0.0;
    for i in 0..n {
        if w[i] > 0.0 {
            let r = y[i] - dot(x.row(i), &beta);
            rss_w += w[i] * r * r;
        }
    }
    Ok(WlsCore { beta, xtx_inverse, rss_w, w_sum, n_used })
}

/// Fits a Gaussian-linear model by weighted least squares.
///
/// The residual scale uses the degrees-of-freedom divisor `n_used - p`,
/// which must be at least one.
pub fn fit_linear_gaussian(x: &Mat, y: &[f64], w: &[f64]) -> Result<LinearGaussianFit, GlmError> {
    let core = wls_core(x, y, w)?;
    let p = x.cols();
    if core.n_used <= p {
        return Err(GlmError::Degenerate {
            detail: format!(
                "{} positively weighted rows leave no residual degrees of freedom for {p} columns",
                core.n_used
            ),
        });
    }
    let df_resid = core.n_used - p;
    let sigma = (core.rss_w / df_resid as f64).max(0.0).sqrt();
    Ok(LinearGaussianFit {
        beta: core.beta,
        sigma,
        xtx_inverse: core.xtx_inverse,
        n_used: core.n_used,
        df_resid,
    })
}
