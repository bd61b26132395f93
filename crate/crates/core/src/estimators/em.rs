//! Maximum likelihood under missing data: EM on a factored model.
//!
//! The joint law of the analysis variables is written as a chain of
//! univariate conditionals — each predictor with missing cells gets a model
//! given the predictors before it (logistic for binary, Gaussian-linear for
//! continuous), and the response keeps its logistic analysis model. The
//! E-step expands every incomplete row into weighted pseudo-rows: missing
//! binary values are enumerated, missing continuous values are replaced by
//! Gauss–Hermite nodes placed at the current conditional mean and scale,
//! and each pseudo-row is weighted by its share of the row's joint density.
//! The M-step refits every conditional by weighted maximum likelihood on
//! the expansion. Iteration stops when the observed-data log-likelihood
//! moves less than the tolerance.
//!
//! With `freeze_quadrature` the node positions *and* the placement density
//! stay pinned at the starting parameters and each node weight carries the
//! density ratio, making the procedure exact EM on a fixed finite mixture —
//! monotone to machine precision. The default adaptive mode re-centers
//! nodes every iteration; its trace is monotone up to quadrature drift.

use super::{EstimatorError, ModelSpec, ResolvedSpec};
use crate::glm::{
    bernoulli_logpmf, fit_linear_gaussian, fit_logistic, fit_logistic_opts, wls_core,
    IrlsOptions,
};
use crate::linalg::{dot, Mat};
use crate::quadrature::{gauss_hermite, GaussHermite};
use crate::table::{ColumnKind, Table};

/// Tuning knobs for [`fit_ml_em`].
#[derive(Debug, Clone)]
pub struct EmOptions {
    /// Gauss–Hermite points per missing continuous cell.
    pub quad_points: usize,
    /// EM iteration cap.
    pub max_iter: usize,
    /// Stop when |Δ log-likelihood| falls below this.
    pub tol: f64,
    /// Pin quadrature placement at the starting parameters (see module doc).
    pub freeze_quadrature: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { quad_points: 21, max_iter: 500, tol: 1e-6, freeze_quadrature: false }
    }
}

/// One covariate conditional of the factored model.
#[derive(Debug, Clone)]
pub enum CovariateModel {
    /// `P(V = 1 | earlier) = logistic(coefᵀ[1, earlier])`.
    Logistic { coef: Vec<f64> },
    /// `V | earlier ~ N(coefᵀ[1, earlier], sigma²)`.
    Gaussian { coef: Vec<f64>, sigma: f64 },
}

/// A fitted maximum-likelihood estimate.
#[derive(Debug, Clone)]
pub struct EmFit {
    /// Analysis-model coefficients (intercept first).
    pub beta: Vec<f64>,
    /// Fitted covariate conditionals, one per modeled predictor, in chain
    /// order, keyed by column name.
    pub nuisance: Vec<(String, CovariateModel)>,
    /// Observed-data log-likelihood after each E-step.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    /// M-steps taken.
    pub iterations: usize,
}

/// An E-step expansion: pseudo-rows with posterior weights.
///
/// Values are stored row-major with `n_vars` entries per pseudo-row, laid
/// out as the model's predictors in order followed by the response.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// Index of the source row each pseudo-row expands.
    pub source_row: Vec<u32>,
    pub n_vars: usize,
    /// Observed-data log-likelihood of the parameters that built this.
    pub loglik: f64,
}

impl Expansion {
    pub fn n_pseudo_rows(&self) -> usize {
        self.weights.len()
    }

    /// Values of one pseudo-row.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_vars..(i + 1) * self.n_vars]
    }
}

/// A modeled predictor: its position among the variables and its kind.
#[derive(Debug, Clone, Copy)]
struct ChainModel {
    var: usize,
    kind: ColumnKind,
}

/// Current parameter values for one chain model.
#[derive(Debug, Clone)]
struct ChainParam {
    coef: Vec<f64>,
    sigma: f64,
}

#[derive(Debug, Clone)]
struct Params {
    beta: Vec<f64>,
    chain: Vec<ChainParam>,
}

fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = (x - mu) / sigma;
    -0.5 * d * d - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// The table column holding variable `v` (predictors first, response last).
fn var_col(rs: &ResolvedSpec, v: usize) -> usize {
    if v < rs.x.len() {
        rs.x[v]
    } else {
        rs.y
    }
}

/// Chain models: every predictor with missing cells, in chain order.
fn chain_models(table: &Table, rs: &ResolvedSpec) -> Vec<ChainModel> {
    rs.x
        .iter()
        .enumerate()
        .filter(|&(_, &c)| table.col_missing(c) > 0)
        .map(|(v, &c)| ChainModel { var: v, kind: table.columns()[c].kind })
        .collect()
}

/// Starting values: each conditional fit on the rows where it is fully
/// observed (for the response model, the complete-case fit).
fn init_params(
    table: &Table,
    rs: &ResolvedSpec,
    chain: &[ChainModel],
) -> Result<Params, EstimatorError> {
    let rows = rs.analysis_rows(table);
    if rows.len() < rs.min_rows() {
        return Err(EstimatorError::InsufficientData { needed: rs.min_rows(), got: rows.len() });
    }
    let (x, y) = rs.design(table, &rows);
    let beta = fit_logistic(&x, &y, &vec![1.0; rows.len()])?.beta;

    let mut chain_params = Vec::with_capacity(chain.len());
    for cm in chain {
        let cols: Vec<usize> = (0..=cm.var).map(|v| var_col(rs, v)).collect();
        let fit_rows: Vec<usize> = (0..table.n_rows())
            .filter(|&r| cols.iter().all(|&c| table.get(r, c).is_some()))
            .collect();
        if fit_rows.len() < cm.var + 3 {
            return Err(EstimatorError::InsufficientData {
                needed: cm.var + 3,
                got: fit_rows.len(),
            });
        }
        let x = Mat::from_fn(fit_rows.len(), cm.var + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                table.get(fit_rows[i], cols[j - 1]).unwrap()
            }
        });
        let v: Vec<f64> = fit_rows.iter().map(|&r| table.get(r, cols[cm.var]).unwrap()).collect();
        let w = vec![1.0; fit_rows.len()];
        let param = match cm.kind {
            ColumnKind::Binary => {
                ChainParam { coef: fit_logistic(&x, &v, &w)?.beta, sigma: 0.0 }
            }
            ColumnKind::Continuous => {
                let fit = fit_linear_gaussian(&x, &v, &w)?;
                ChainParam { coef: fit.beta, sigma: fit.sigma.max(1e-8) }
            }
        };
        chain_params.push(param);
    }
    Ok(Params { beta, chain: chain_params })
}

/// Expands every row under `params`, writing pseudo-rows into `exp` and
/// returning the observed-data log-likelihood.
///
/// `placement` provides the quadrature placement (equal to `params` in
/// adaptive mode, pinned at the start in frozen mode); when they differ,
/// node weights carry the density ratio so the expansion stays a proper
/// E-step for the fixed-node surrogate model.
#[allow(clippy::too_many_arguments)]
fn estep(
    table: &Table,
    rs: &ResolvedSpec,
    chain: &[ChainModel],
    params: &Params,
    placement: &Params,
    gh: &GaussHermite,
    frozen: bool,
    exp: &mut Expansion,
) -> f64 {
    let n_vars = rs.x.len() + 1;
    let resp_var = n_vars - 1;
    exp.values.clear();
    exp.weights.clear();
    exp.source_row.clear();
    exp.n_vars = n_vars;

    let ln_w_over_sqrt_pi: Vec<f64> = {
        let half_ln_pi = 0.5 * std::f64::consts::PI.ln();
        gh.weights.iter().map(|w| w.ln() - half_ln_pi).collect()
    };
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut total_ll = 0.0;
    let mut vals = vec![0.0; n_vars];
    let mut logws: Vec<f64> = Vec::new();

    for r in 0..table.n_rows() {
        // Which variables are missing, and how many branches each opens.
        let mut missing: Vec<(usize, usize)> = Vec::new(); // (var, n_choices)
        for v in 0..n_vars {
            if table.get(r, var_col(rs, v)).is_none() {
                let kind = if v == resp_var {
                    ColumnKind::Binary
                } else {
                    table.columns()[var_col(rs, v)].kind
                };
                let n_choices = match kind {
                    ColumnKind::Binary => 2,
                    ColumnKind::Continuous => gh.len(),
                };
                missing.push((v, n_choices));
            }
        }
        let n_branches: usize = missing.iter().map(|&(_, k)| k).product();
        let first_pseudo = exp.weights.len();
        logws.clear();

        for b in 0..n_branches {
            // Decode this branch's choice per missing variable.
            let mut code = b;
            let mut choice = [0usize; 16];
            for (mi, &(_, k)) in missing.iter().enumerate() {
                choice[mi] = code % k;
                code /= k;
            }
            let mut logw = 0.0;
            // Walk the variables in chain order so every conditional sees
            // its (possibly just-filled) design values.
            let mut mi = 0;
            for v in 0..n_vars {
                let observed = table.get(r, var_col(rs, v));
                let is_response = v == resp_var;
                // Locate this variable's model, if it has one.
                let model = if is_response {
                    Some((&params.beta, &placement.beta, ColumnKind::Binary, 0.0, 0.0))
                } else if let Some(ci) = chain.iter().position(|cm| cm.var == v) {
                    let cp = &params.chain[ci];
                    let pp = &placement.chain[ci];
                    Some((&cp.coef, &pp.coef, chain[ci].kind, cp.sigma, pp.sigma))
                } else {
                    None
                };
                match (observed, model) {
                    (Some(x), None) => vals[v] = x,
                    (Some(x), Some((coef, _, kind, sigma, _))) => {
                        vals[v] = x;
                        let eta = dot_design(coef, &vals[..v]);
                        logw += match kind {
                            ColumnKind::Binary => bernoulli_logpmf(x, eta),
                            ColumnKind::Continuous => normal_logpdf(x, eta, sigma),
                        };
                    }
                    (None, Some((coef, pcoef, kind, sigma, psigma))) => {
                        let c = choice[mi];
                        mi += 1;
                        match kind {
                            ColumnKind::Binary => {
                                let eta = dot_design(coef, &vals[..v]);
                                let x = c as f64;
                                vals[v] = x;
                                logw += bernoulli_logpmf(x, eta);
                            }
                            ColumnKind::Continuous => {
                                let mu_p = dot_design(pcoef, &vals[..v]);
                                let x = mu_p + sqrt2 * psigma * gh.nodes[c];
                                vals[v] = x;
                                logw += ln_w_over_sqrt_pi[c];
                                if frozen {
                                    // Density ratio against the pinned
                                    // placement keeps the surrogate exact.
                                    let mu = dot_design(coef, &vals[..v]);
                                    logw += normal_logpdf(x, mu, sigma)
                                        - normal_logpdf(x, mu_p, psigma);
                                }
                            }
                        }
                    }
                    (None, None) => unreachable!("missing variable without a model"),
                }
            }
            logws.push(logw);
            exp.values.extend_from_slice(&vals);
            exp.source_row.push(r as u32);
        }
        // Normalize this row's branch weights in log space.
        let max_lw = logws.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let sum_exp: f64 = logws.iter().map(|&lw| (lw - max_lw).exp()).sum();
        let row_ll = max_lw + sum_exp.ln();
        total_ll += row_ll;
        for &lw in logws.iter() {
            exp.weights.push((lw - row_ll).exp());
        }
        debug_assert_eq!(exp.weights.len() - first_pseudo, n_branches);
    }
    exp.loglik = total_ll;
    total_ll
}

/// `coefᵀ[1, prefix]` — every design here is an intercept plus the
/// variables before the modeled one.
#[inline]
fn dot_design(coef: &[f64], prefix: &[f64]) -> f64 {
    coef[0] + dot(&coef[1..], prefix)
}

/// Refits every conditional on the expansion by weighted ML, warm-started
/// at the current parameters.
fn mstep(
    exp: &Expansion,
    chain: &[ChainModel],
    current: &Params,
) -> Result<Params, EstimatorError> {
    let n = exp.n_pseudo_rows();
    let n_vars = exp.n_vars;
    let resp_var = n_vars - 1;

    let design_for = |width: usize| {
        Mat::from_fn(n, width + 1, |i, j| if j == 0 { 1.0 } else { exp.row(i)[j - 1] })
    };

    let x_resp = design_for(resp_var);
    let y_resp: Vec<f64> = (0..n).map(|i| exp.row(i)[resp_var]).collect();
    let opts = IrlsOptions { start: Some(current.beta.clone()), ..IrlsOptions::default() };
    let beta = fit_logistic_opts(&x_resp, &y_resp, &exp.weights, &opts)?.beta;

    let mut chain_params = Vec::with_capacity(chain.len());
    for (ci, cm) in chain.iter().enumerate() {
        let x = design_for(cm.var);
        let v: Vec<f64> = (0..n).map(|i| exp.row(i)[cm.var]).collect();
        let param = match cm.kind {
            ColumnKind::Binary => {
                let opts = IrlsOptions {
                    start: Some(current.chain[ci].coef.clone()),
                    ..IrlsOptions::default()
                };
                ChainParam { coef: fit_logistic_opts(&x, &v, &exp.weights, &opts)?.beta, sigma: 0.0 }
            }
            ColumnKind::Continuous => {
                // Maximum-likelihood scale: total-weight divisor, not df.
                let core = wls_core(&x, &v, &exp.weights)?;
                let sigma = (core.rss_w / core.w_sum).sqrt().max(1e-8);
                ChainParam { coef: core.beta, sigma }
            }
        };
        chain_params.push(param);
    }
    Ok(Params { beta, chain: chain_params })
}

fn nuisance_of(
    spec: &ModelSpec,
    chain: &[ChainModel],
    params: &Params,
) -> Vec<(String, CovariateModel)> {
    chain
        .iter()
        .zip(&params.chain)
        .map(|(cm, cp)| {
            let name = spec.predictors[cm.var].clone();
            let model = match cm.kind {
                ColumnKind::Binary => CovariateModel::Logistic { coef: cp.coef.clone() },
                ColumnKind::Continuous => {
                    CovariateModel::Gaussian { coef: cp.coef.clone(), sigma: cp.sigma }
                }
            };
            (name, model)
        })
        .collect()
}

/// Diagnostic surface: the E-step expansion at the starting parameters.
pub fn expand_rows(
    table: &Table,
    spec: &ModelSpec,
    opts: &EmOptions,
) -> Result<Expansion, EstimatorError> {
    let rs = spec.resolve(table)?;
    let chain = chain_models(table, &rs);
    let params = init_params(table, &rs, &chain)?;
    let gh = gauss_hermite(opts.quad_points.max(1));
    let mut exp = Expansion {
        values: Vec::new(),
        weights: Vec::new(),
        source_row: Vec::new(),
        n_vars: rs.x.len() + 1,
        loglik: 0.0,
    };
    estep(table, &rs, &chain, &params, &params, &gh, opts.freeze_quadrature, &mut exp);
    Ok(exp)
}

/// Maximum-likelihood fit of the analysis model under missing data.
pub fn fit_ml_em(
    table: &Table,
    spec: &ModelSpec,
    opts: &EmOptions,
) -> Result<EmFit, EstimatorError> {
    if spec.predictors.len() + 1 > 15 {
        return Err(EstimatorError::BadSpec {
            detail: "EM expansion supports at most 14 predictors".into(),
        });
    }
    let rs = spec.resolve(table)?;
    let chain = chain_models(table, &rs);
    let mut params = init_params(table, &rs, &chain)?;
    let placement = params.clone();
    let gh = gauss_hermite(opts.quad_points.max(1));
    let mut exp = Expansion {
        values: Vec::new(),
        weights: Vec::new(),
        source_row: Vec::new(),
        n_vars: rs.x.len() + 1,
        loglik: 0.0,
    };

    let place = |p: &Params| if opts.freeze_quadrature { placement.clone() } else { p.clone() };
    let mut ll = estep(
        table,
        &rs,
        &chain,
        &params,
        &place(&params),
        &gh,
        opts.freeze_quadrature,
        &mut exp,
    );
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        params = mstep(&exp, &chain, &params)?;
        iterations += 1;
        let new_ll = estep(
            table,
            &rs,
            &chain,
            &params,
            &place(&params),
            &gh,
            opts.freeze_quadrature,
            &mut exp,
        );
        trace.push(new_ll);
        let delta = new_ll - ll;
        ll = new_ll;
        if delta.abs() < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(EstimatorError::NonConvergence { iterations, loglik_trace: trace });
    }
    Ok(EmFit {
        beta: params.beta.clone(),
        nuisance: nuisance_of(spec, &chain, &params),
        loglik_trace: trace,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::test_support::study_table;
    use crate::estimators::{fit_cc, ModelSpec};
    use crate::missing::{
        inject_missing, inject_missing_per_column, MechanismSpec, ProbabilityMap,
    };
    use crate::stream::StreamKey;
    use crate::table::{ColumnSpec, Table};

    fn spec() -> ModelSpec {
        ModelSpec::new("y", &["z", "z1", "z2"])
    }

    #[test]
    fn complete_table_converges_immediately_to_the_cc_fit() {
        let t = study_table(250, 31);
        let fit = fit_ml_em(&t, &spec(), &EmOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(fit.nuisance.is_empty());
        let cc = fit_cc(&t, &spec()).unwrap();
        for j in 0..4 {
            assert!(
                (fit.beta[j] - cc.beta[j]).abs() < 1e-10,
                "coefficient {j}: {} vs {}",
                fit.beta[j],
                cc.beta[j]
            );
        }
    }

    #[test]
    fn missing_binary_cell_expands_to_two_weighted_pseudo_rows() {
        // One row with z1 missing; everything else observed.
        let mut cells = Vec::new();
        for i in 0..30 {
            let z = (i % 2) as f64;
            let z1 = ((i / 2) % 2) as f64;
            cells.push(Some(z));
            cells.push(if i == 7 { None } else { Some(z1) });
            cells.push(Some(25.0 + z + 2.0 * z1 + (i % 5) as f64));
            cells.push(Some(((i / 3) % 2) as f64));
        }
        let t = Table::new(
            vec![
                ColumnSpec::binary("z"),
                ColumnSpec::binary("z1"),
                ColumnSpec::continuous("z2"),
                ColumnSpec::binary("y"),
            ],
            cells,
        )
        .unwrap();
        let exp = expand_rows(&t, &spec(), &EmOptions::default()).unwrap();
        assert_eq!(exp.n_pseudo_rows(), 29 + 2);
        let of_row7: Vec<usize> =
            (0..exp.n_pseudo_rows()).filter(|&i| exp.source_row[i] == 7).collect();
        assert_eq!(of_row7.len(), 2);
        let w_sum: f64 = of_row7.iter().map(|&i| exp.weights[i]).sum();
        assert!((w_sum - 1.0).abs() < 1e-10);
        let imputed: Vec<f64> = of_row7.iter().map(|&i| exp.row(i)[1]).collect();
        assert_eq!(imputed, vec![0.0, 1.0]);
    }

    #[test]
    fn expansion_weights_are_normalized_per_source_row() {
        let t = study_table(200, 32);
        let mech =
            MechanismSpec::mar("z", ProbabilityMap::BinarySplit { when_one: 0.3, when_zero: 0.1 });
        let (thinned, _) =
            inject_missing(&t, &mech, &["z1", "z2", "y"], StreamKey::root(33)).unwrap();
        let exp = expand_rows(&thinned, &spec(), &EmOptions::default()).unwrap();
        let mut by_row = std::collections::BTreeMap::<u32, f64>::new();
        for i in 0..exp.n_pseudo_rows() {
            assert!(exp.weights[i] >= 0.0);
            *by_row.entry(exp.source_row[i]).or_insert(0.0) += exp.weights[i];
        }
        assert_eq!(by_row.len(), 200);
        for (&r, &w) in &by_row {
            assert!((w - 1.0).abs() < 1e-10, "row {r} weights sum to {w}");
        }
        // Blockwise rows expand to 2 (z1) × 21 (z2) × 2 (y) branches.
        let counts = exp.source_row.iter().filter(|&&s| s == 0).count();
        assert!(counts == 1 || counts == 84);
    }

    #[test]
    fn blockwise_fixed_point_is_the_complete_case_fit() {
        let t = study_table(400, 34);
        let mech =
            MechanismSpec::mar("z", ProbabilityMap::BinarySplit { when_one: 0.2, when_zero: 0.2 });
        let (thinned, _) =
            inject_missing(&t, &mech, &["z1", "z2", "y"], StreamKey::root(35)).unwrap();
        let em = fit_ml_em(&thinned, &spec(), &EmOptions::default()).unwrap();
        let cc = fit_cc(&thinned, &spec()).unwrap();
        for j in 0..4 {
            assert!(
                (em.beta[j] - cc.beta[j]).abs() < 1e-3,
                "coefficient {j}: EM {} vs CC {}",
                em.beta[j],
                cc.beta[j]
            );
        }
    }

    #[test]
    fn frozen_quadrature_trace_is_monotone_to_machine_precision() {
        let t = study_table(150, 36);
        let (thinned, _) = inject_missing_per_column(
            &t,
            &MechanismSpec::mcar(0.25),
            &["z1", "z2", "y"],
            StreamKey::root(37),
        )
        .unwrap();
        let opts = EmOptions { freeze_quadrature: true, ..EmOptions::default() };
        let fit = fit_ml_em(&thinned, &spec(), &opts).unwrap();
        assert!(fit.loglik_trace.len() >= 2);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "trace dipped: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn adaptive_trace_stays_monotone_within_drift_tolerance() {
        let t = study_table(150, 38);
        let (thinned, _) = inject_missing_per_column(
            &t,
            &MechanismSpec::mcar(0.2),
            &["z1", "z2"],
            StreamKey::root(39),
        )
        .unwrap();
        let fit = fit_ml_em(&thinned, &spec(), &EmOptions::default()).unwrap();
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "trace dipped: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn general_pattern_beats_complete_case_deletion_bias() {
        // Under per-column MCAR the general-pattern EM pulls information
        // from partially observed rows; it must at least run and differ
        // from CC while staying finite.
        let t = study_table(500, 40);
        let (thinned, _) = inject_missing_per_column(
            &t,
            &MechanismSpec::mcar(0.25),
            &["z1", "z2"],
            StreamKey::root(41),
        )
        .unwrap();
        let em = fit_ml_em(&thinned, &spec(), &EmOptions::default()).unwrap();
        let cc = fit_cc(&thinned, &spec()).unwrap();
        assert!(em.beta.iter().all(|b| b.is_finite()));
        let moved = (0..4).any(|j| (em.beta[j] - cc.beta[j]).abs() > 1e-6);
        assert!(moved, "EM should use rows CC discards");
        assert_eq!(em.nuisance.len(), 2);
        match &em.nuisance[1].1 {
            CovariateModel::Gaussian { sigma, .. } => assert!(*sigma > 1.0),
            other => panic!("z2 model should be Gaussian, got {other:?}"),
        }
    }

    #[test]
    fn em_is_deterministic() {
        let t = study_table(200, 42);
        let mech =
            MechanismSpec::mar("z", ProbabilityMap::BinarySplit { when_one: 0.3, when_zero: 0.1 });
        let (thinned, _) =
            inject_missing(&t, &mech, &["z1", "z2", "y"], StreamKey::root(43)).unwrap();
        let a = fit_ml_em(&thinned, &spec(), &EmOptions::default()).unwrap();
        let b = fit_ml_em(&thinned, &spec(), &EmOptions::default()).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.loglik_trace, b.loglik_trace);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence_with_trace() {
        let t = study_table(300, 44);
        let (thinned, _) = inject_missing_per_column(
            &t,
            &MechanismSpec::mcar(0.3),
            &["z1", "z2"],
            StreamKey::root(45),
        )
        .unwrap();
        let opts = EmOptions { max_iter: 1, tol: 1e-12, ..EmOptions::default() };
        match fit_ml_em(&thinned, &spec(), &opts) {
            Err(EstimatorError::NonConvergence { iterations, loglik_trace }) => {
                assert_eq!(iterations, 1);
                assert_eq!(loglik_trace.len(), 2);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }
}
