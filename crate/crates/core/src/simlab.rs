//! The Monte Carlo study: data generation, missingness scenarios, trial
//! execution, and metric aggregation.
//!
//! Each trial draws a fresh table from the hierarchical generator, deletes
//! a block of cells according to the scenario, runs every requested
//! estimator, and records coefficient estimates alongside failures. The
//! aggregator turns M trials into per-method, per-coefficient bias,
//! variance, and MSE plus a standard-error accuracy table, and its output
//! is independent of how many worker threads execute the trials.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    fit_cc, fit_ipw, fit_ml_em, fit_propensity, mice_impute, rubin_pool, EmOptions,
    EstimatorError, ModelSpec, PropensityFit, MICE_DEFAULT_CYCLES,
};
use crate::glm::{logistic_prob, GlmError, GlmFit};
use crate::missing::{inject_missing, MechanismSpec, ProbabilityMap};
use crate::stream::StreamKey;
use crate::table::{ColumnSpec, Table};

/// Full-data generator settings.
///
/// Rows are drawn hierarchically: a binary `z`, a binary `z1` whose rate
/// depends on `z`, a continuous `z2` that is normal within each `(z, z1)`
/// cell, and a binary response `y` from a logistic model on all three.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenConfig {
    /// Rows per generated table.
    pub n: usize,
    /// `P(z = 1)`.
    pub p1: f64,
    /// `P(z1 = 1 | z)`, indexed by `z`.
    pub p2: [f64; 2],
    /// `(mean, sd)` of `z2` within the `(z, z1)` cell, indexed by `2z + z1`.
    pub normal_params: [(f64, f64); 4],
    /// True response coefficients `(intercept, z, z1, z2)`.
    pub beta_true: [f64; 4],
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 1000,
            p1: 0.55,
            p2: [0.27, 0.31],
            normal_params: [(31.0, 7.0), (25.0, 10.0), (33.0, 6.0), (28.0, 9.0)],
            beta_true: [-0.96, 0.87, 2.9, -0.086],
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::BadConfig { detail: "sample size n must be positive".into() });
        }
        let mut probs = vec![("p1", self.p1)];
        probs.push(("p2[0]", self.p2[0]));
        probs.push(("p2[1]", self.p2[1]));
        for (name, p) in probs {
            if !(p > 0.0 && p < 1.0) {
                return Err(SimError::BadConfig {
                    detail: format!("{name} must lie strictly inside (0,1), got {p}"),
                });
            }
        }
        for (i, &(mu, sd)) in self.normal_params.iter().enumerate() {
            if !mu.is_finite() || !(sd > 0.0) {
                return Err(SimError::BadConfig {
                    detail: format!("normal_params[{i}] = ({mu}, {sd}) needs finite mean, sd > 0"),
                });
            }
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(SimError::BadConfig { detail: "beta_true must be finite".into() });
        }
        Ok(())
    }
}

/// A missingness scenario: the deletion probability is `a` for rows with
/// `z = 1` and `b` for rows with `z = 0`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub a: f64,
    pub b: f64,
}

impl ScenarioSpec {
    pub fn s1() -> Self {
        ScenarioSpec { id: "S1".into(), a: 0.09, b: 0.09 }
    }
    pub fn s2() -> Self {
        ScenarioSpec { id: "S2".into(), a: 0.20, b: 0.20 }
    }
    pub fn s3() -> Self {
        ScenarioSpec { id: "S3".into(), a: 0.30, b: 0.10 }
    }
    pub fn s4() -> Self {
        ScenarioSpec { id: "S4".into(), a: 0.65, b: 0.05 }
    }

    /// The four named scenarios, by label.
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "S1" => Some(Self::s1()),
            "S2" => Some(Self::s2()),
            "S3" => Some(Self::s3()),
            "S4" => Some(Self::s4()),
            _ => None,
        }
    }

    /// A scenario with explicit deletion probabilities.
    pub fn custom(a: f64, b: f64) -> Result<Self, SimError> {
        let s = ScenarioSpec { id: "custom".into(), a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [("a", self.a), ("b", self.b)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadConfig {
                    detail: format!("scenario probability {name} must lie in [0,1], got {p}"),
                });
            }
        }
        Ok(())
    }

    /// Deletion probability for a row with the given `z`.
    pub fn deletion_prob(&self, z: f64) -> f64 {
        self.a * z + self.b * (1.0 - z)
    }

    /// The corresponding injection mechanism: deletion driven by `z`.
    pub fn mechanism(&self) -> MechanismSpec {
        MechanismSpec::mar("z", ProbabilityMap::BinarySplit { when_one: self.a, when_zero: self.b })
    }
}

/// The estimators the study compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Full data, before any deletion — the benchmark.
    C,
    /// Complete-case analysis.
    Cc,
    /// IPW with the scenario's theoretical completeness probabilities.
    Ipw1,
    /// IPW with the propensity estimated from the data.
    Ipw2,
    /// Multiple imputation, m = 5.
    Mi5,
    /// Multiple imputation, m = 20.
    Mi20,
    /// Maximum likelihood via EM.
    Ml,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::C, Method::Cc, Method::Ipw1, Method::Ipw2, Method::Mi5, Method::Mi20, Method::Ml];

    pub fn name(&self) -> &'static str {
        match self {
            Method::C => "C",
            Method::Cc => "CC",
            Method::Ipw1 => "IPW1",
            Method::Ipw2 => "IPW2",
            Method::Mi5 => "MI5",
            Method::Mi20 => "MI20",
            Method::Ml => "ML",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "C" => Ok(Method::C),
            "CC" => Ok(Method::Cc),
            "IPW1" => Ok(Method::Ipw1),
            "IPW2" => Ok(Method::Ipw2),
            "MI5" => Ok(Method::Mi5),
            "MI20" => Ok(Method::Mi20),
            "ML" => Ok(Method::Ml),
            _ => Err(SimError::BadConfig {
                detail: format!(
                    "unknown method {s:?}; expected one of C, CC, IPW1, IPW2, MI5, MI20, ML"
                ),
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad configuration: {detail}")]
    BadConfig { detail: String },
    #[error("method {method} succeeded in only {successes} of {trials} trials")]
    InsufficientTrials { method: Method, successes: usize, trials: usize },
}

/// One estimator's result within a trial.
#[derive(Debug, Clone)]
pub enum MethodOutcome {
    Ok { beta: Vec<f64>, se: Option<Vec<f64>>, n_used: usize },
    Failed { reason: String },
}

/// All requested estimators on one simulated data set.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    /// Outcomes in the order the methods were requested.
    pub outcomes: Vec<(Method, MethodOutcome)>,
}

/// Aggregated study results for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: Method,
    pub successes: usize,
    pub failures: usize,
    pub bias: Vec<f64>,
    pub var: Vec<f64>,
    pub mse: Vec<f64>,
}

/// Ratio of reported to realized standard errors, per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SeAccuracy {
    pub method: Method,
    pub ratio_mean: Vec<f64>,
    pub ratio_median: Vec<f64>,
}

/// A finished Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub scenario: ScenarioSpec,
    pub n: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub coef_names: Vec<String>,
    pub metrics: Vec<MethodMetrics>,
    /// Methods that report standard errors (ML does not).
    pub se_accuracy: Vec<SeAccuracy>,
}

/// The analysis model every estimator fits in the study.
pub fn analysis_spec() -> ModelSpec {
    ModelSpec::new("y", &["z", "z1", "z2"])
}

/// Draws one complete table: columns `(z, z1, z2, y)`, deterministic in
/// the key.
pub fn gen_full(cfg: &GenConfig, key: StreamKey) -> Table {
    let mut rng = key.rng();
    let n = cfg.n;
    let mut z = Vec::with_capacity(n);
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let zi = f64::from(rng.random::<f64>() < cfg.p1);
        let z1i = f64::from(rng.random::<f64>() < cfg.p2[zi as usize]);
        let (mu, sd) = cfg.normal_params[(2.0 * zi + z1i) as usize];
        let eps: f64 = StandardNormal.sample(&mut rng);
        let z2i = mu + sd * eps;
        let eta = cfg.beta_true[0] + cfg.beta_true[1] * zi + cfg.beta_true[2] * z1i
            + cfg.beta_true[3] * z2i;
        let yi = f64::from(rng.random::<f64>() < logistic_prob(eta));
        z.push(zi);
        z1.push(z1i);
        z2.push(z2i);
        y.push(yi);
    }
    let mut cells = Vec::with_capacity(4 * n);
    for i in 0..n {
        cells.push(Some(z[i]));
        cells.push(Some(z1[i]));
        cells.push(Some(z2[i]));
        cells.push(Some(y[i]));
    }
    Table::new(
        vec![
            ColumnSpec::binary("z"),
            ColumnSpec::binary("z1"),
            ColumnSpec::continuous("z2"),
            ColumnSpec::binary("y"),
        ],
        cells,
    )
    .expect("generator emits a well-formed table")
}

/// Bias, variance (divisor M), and their MSE composition.
///
/// The variance is the mean squared deviation about the sample mean, and
/// the MSE is exactly `bias² + var`.
pub fn compute_metrics(estimates: &[f64], truth: f64) -> Result<(f64, f64, f64), SimError> {
    let m = estimates.len();
    if m < 2 {
        return Err(SimError::BadConfig {
            detail: format!("metrics need at least 2 estimates, got {m}"),
        });
    }
    let mean = estimates.iter().sum::<f64>() / m as f64;
    let bias = mean - truth;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / m as f64;
    Ok((bias, var, mse_identity(bias, var)))
}

/// The MSE decomposition used throughout the report tables.
pub fn mse_identity(bias: f64, var: f64) -> f64 {
    bias * bias + var
}

fn outcome_of(res: Result<(Vec<f64>, Option<Vec<f64>>, usize), EstimatorError>) -> MethodOutcome {
    match res {
        Ok((beta, se, n_used)) => MethodOutcome::Ok { beta, se, n_used },
        Err(e) => MethodOutcome::Failed { reason: e.to_string() },
    }
}

fn glm_outcome(res: Result<GlmFit, EstimatorError>) -> MethodOutcome {
    outcome_of(res.map(|f| {
        let se = f.se();
        (f.beta, Some(se), f.n_used)
    }))
}

fn mi_outcome(
    thinned: &Table,
    spec: &ModelSpec,
    m: usize,
    key: StreamKey,
) -> MethodOutcome {
    let run = || -> Result<(Vec<f64>, Option<Vec<f64>>, usize), EstimatorError> {
        let set = mice_impute(thinned, m, MICE_DEFAULT_CYCLES, key)?;
        let fits =
            set.tables.iter().map(|t| fit_cc(t, spec)).collect::<Result<Vec<_>, _>>()?;
        let pooled = rubin_pool(&fits)?;
        let se = pooled.se();
        Ok((pooled.beta_bar, Some(se), thinned.n_rows()))
    };
    outcome_of(run())
}

/// Runs every requested estimator on one freshly simulated data set.
///
/// Estimator failures are recorded in the result, never raised; the trial
/// substream depends only on `(base_seed, trial_index)`, so results do not
/// depend on scheduling or on which other methods run.
pub fn run_trial(
    cfg: &GenConfig,
    scenario: &ScenarioSpec,
    methods: &[Method],
    trial_index: usize,
    base_seed: u64,
) -> TrialResult {
    let spec = analysis_spec();
    let trial_key = StreamKey::root(base_seed).child_index(trial_index as u64);
    let full = gen_full(cfg, trial_key.child_label("gen"));
    let injected =
        inject_missing(&full, &scenario.mechanism(), &["z1", "z2", "y"], trial_key.child_label("inject"));

    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let outcome = match (&injected, method) {
            (_, Method::C) => glm_outcome(fit_cc(&full, &spec)),
            (Err(e), _) => MethodOutcome::Failed { reason: e.to_string() },
            (Ok((thinned, _)), Method::Cc) => glm_outcome(fit_cc(thinned, &spec)),
            (Ok((thinned, _)), Method::Ipw1) => {
                let run = || {
                    let p: Vec<f64> = (0..thinned.n_rows())
                        .map(|i| {
                            let z = thinned.get(i, 0).expect("z is never deleted");
                            1.0 - scenario.deletion_prob(z)
                        })
                        .collect();
                    let prop = PropensityFit::theoretical(p)?;
                    fit_ipw(thinned, &spec, &prop)
                };
                glm_outcome(run())
            }
            (Ok((thinned, mask)), Method::Ipw2) => {
                let run = || {
                    let prop = match fit_propensity(thinned, mask, &["z"]) {
                        Ok(p) => p,
                        // Nothing missing: completeness carries no signal,
                        // so fall back to unweighted complete-case.
                        Err(EstimatorError::Glm(GlmError::Degenerate { .. })) => {
                            PropensityFit::theoretical(vec![1.0; thinned.n_rows()])?
                        }
                        Err(e) => return Err(e),
                    };
                    fit_ipw(thinned, &spec, &prop)
                };
                glm_outcome(run())
            }
            (Ok((thinned, _)), Method::Mi5) => {
                mi_outcome(thinned, &spec, 5, trial_key.child_label("mi5"))
            }
            (Ok((thinned, _)), Method::Mi20) => {
                mi_outcome(thinned, &spec, 20, trial_key.child_label("mi20"))
            }
            (Ok((thinned, _)), Method::Ml) => outcome_of(
                fit_ml_em(thinned, &spec, &EmOptions::default())
                    .map(|f| (f.beta, None, thinned.n_rows())),
            ),
        };
        outcomes.push((method, outcome));
    }
    TrialResult { trial: trial_index, outcomes }
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite standard errors"));
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Runs M independent trials and aggregates them.
///
/// The report is identical for any `parallelism` at a fixed seed: trials
/// derive their randomness from their index alone and are aggregated in
/// index order.
pub fn run_monte_carlo(
    cfg: &GenConfig,
    scenario: &ScenarioSpec,
    methods: &[Method],
    trials: usize,
    base_seed: u64,
    parallelism: usize,
) -> Result<McReport, SimError> {
    cfg.validate()?;
    scenario.validate()?;
    if trials < 2 {
        return Err(SimError::BadConfig {
            detail: format!("need at least 2 trials, got {trials}"),
        });
    }
    if methods.is_empty() {
        return Err(SimError::BadConfig { detail: "no methods requested".into() });
    }
    let mut seen = std::collections::HashSet::new();
    for m in methods {
        if !seen.insert(*m) {
            return Err(SimError::BadConfig { detail: format!("method {m} listed twice") });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SimError::BadConfig { detail: format!("thread pool: {e}") })?;
    let results: Vec<TrialResult> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, scenario, methods, t, base_seed))
            .collect()
    });

    let spec = analysis_spec();
    let n_coef = spec.n_coef();
    let mut metrics = Vec::with_capacity(methods.len());
    let mut se_accuracy = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        let mut betas: Vec<&Vec<f64>> = Vec::with_capacity(trials);
        let mut ses: Vec<&Vec<f64>> = Vec::with_capacity(trials);
        for r in &results {
            debug_assert_eq!(r.outcomes[mi].0, method);
            if let MethodOutcome::Ok { beta, se, .. } = &r.outcomes[mi].1 {
                betas.push(beta);
                if let Some(se) = se {
                    ses.push(se);
                }
            }
        }
        let successes = betas.len();
        if successes * 2 < trials || successes < 2 {
            return Err(SimError::InsufficientTrials { method, successes, trials });
        }
        let mut bias = Vec::with_capacity(n_coef);
        let mut var = Vec::with_capacity(n_coef);
        let mut mse = Vec::with_capacity(n_coef);
        let mut sd_mc = Vec::with_capacity(n_coef);
        for j in 0..n_coef {
            let est: Vec<f64> = betas.iter().map(|b| b[j]).collect();
            let (b, v, m) = compute_metrics(&est, cfg.beta_true[j])?;
            bias.push(b);
            var.push(v);
            mse.push(m);
            // Unbiased Monte Carlo SD for the SE-accuracy denominator.
            let mean = est.iter().sum::<f64>() / successes as f64;
            let ss: f64 = est.iter().map(|e| (e - mean).powi(2)).sum();
            sd_mc.push((ss / (successes - 1) as f64).sqrt());
        }
        metrics.push(MethodMetrics {
            method,
            successes,
            failures: trials - successes,
            bias,
            var,
            mse,
        });
        if ses.len() == successes && !ses.is_empty() {
            let mut ratio_mean = Vec::with_capacity(n_coef);
            let mut ratio_median = Vec::with_capacity(n_coef);
            for (j, sd) in sd_mc.iter().enumerate() {
                let mut col: Vec<f64> = ses.iter().map(|s| s[j]).collect();
                let mean_se = col.iter().sum::<f64>() / col.len() as f64;
                ratio_mean.push(mean_se / sd);
                ratio_median.push(median(&mut col) / sd);
            }
            se_accuracy.push(SeAccuracy { method, ratio_mean, ratio_median });
        }
    }
    Ok(McReport {
        scenario: scenario.clone(),
        n: cfg.n,
        trials,
        base_seed,
        coef_names: spec.coef_names(),
        metrics,
        se_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_in_the_key() {
        let cfg = GenConfig { n: 60, ..GenConfig::default() };
        let a = gen_full(&cfg, StreamKey::root(5).child_label("gen"));
        let b = gen_full(&cfg, StreamKey::root(5).child_label("gen"));
        let c = gen_full(&cfg, StreamKey::root(6).child_label("gen"));
        for r in 0..60 {
            for col in 0..4 {
                assert_eq!(a.get(r, col), b.get(r, col));
            }
        }
        let differs =
            (0..60).any(|r| (0..4).any(|col| a.get(r, col) != c.get(r, col)));
        assert!(differs);
    }

    #[test]
    fn generator_matches_its_marginals_at_large_n() {
        let cfg = GenConfig { n: 200_000, ..GenConfig::default() };
        let t = gen_full(&cfg, StreamKey::root(7));
        let mean_z =
            (0..t.n_rows()).map(|i| t.get(i, 0).unwrap()).sum::<f64>() / t.n_rows() as f64;
        assert!((mean_z - 0.55).abs() < 0.004, "mean z = {mean_z}");
        let cell: Vec<f64> = (0..t.n_rows())
            .filter(|&i| t.get(i, 0) == Some(1.0) && t.get(i, 1) == Some(0.0))
            .map(|i| t.get(i, 2).unwrap())
            .collect();
        let mean_z2 = cell.iter().sum::<f64>() / cell.len() as f64;
        assert!((mean_z2 - 33.0).abs() < 0.05, "mean z2 in (1,0) cell = {mean_z2}");
    }

    #[test]
    fn collapsing_the_noise_pins_z2_and_the_response_rate() {
        let mut cfg = GenConfig { n: 200_000, ..GenConfig::default() };
        for p in cfg.normal_params.iter_mut() {
            p.1 = 1e-9;
        }
        let t = gen_full(&cfg, StreamKey::root(8));
        let mut counts = [[0usize; 2]; 4];
        for i in 0..t.n_rows() {
            let z = t.get(i, 0).unwrap();
            let z1 = t.get(i, 1).unwrap();
            let z2 = t.get(i, 2).unwrap();
            let cell = (2.0 * z + z1) as usize;
            let (mu, _) = cfg.normal_params[cell];
            assert!((z2 - mu).abs() < 1e-6);
            counts[cell][t.get(i, 3).unwrap() as usize] += 1;
        }
        for cell in 0..4 {
            let (mu, _) = cfg.normal_params[cell];
            let z = (cell / 2) as f64;
            let z1 = (cell % 2) as f64;
            let p = logistic_prob(-0.96 + 0.87 * z + 2.9 * z1 - 0.086 * mu);
            let n_cell = counts[cell][0] + counts[cell][1];
            let rate = counts[cell][1] as f64 / n_cell as f64;
            let se = (p * (1.0 - p) / n_cell as f64).sqrt();
            assert!(
                (rate - p).abs() < 3.0 * se,
                "cell {cell}: rate {rate} vs {p} (se {se})"
            );
        }
    }

    #[test]
    fn metric_arithmetic_matches_hand_results() {
        let (b, v, m) = compute_metrics(&[1.0, 3.0], 1.0).unwrap();
        assert_eq!((b, v, m), (1.0, 1.0, 2.0));
        let (b, v, m) = compute_metrics(&[2.5, 2.5, 2.5], 2.5).unwrap();
        assert_eq!((b, v, m), (0.0, 0.0, 0.0));
        // Translation invariance.
        let (b1, v1, m1) = compute_metrics(&[0.3, 0.9, 1.4], 0.7).unwrap();
        let (b2, v2, m2) =
            compute_metrics(&[100.3, 100.9, 101.4], 100.7).unwrap();
        assert!((b1 - b2).abs() < 1e-12);
        assert!((v1 - v2).abs() < 1e-12);
        assert!((m1 - m2).abs() < 1e-12);
        assert!(compute_metrics(&[1.0], 1.0).is_err());
    }

    #[test]
    fn mse_identity_reproduces_published_arithmetic() {
        assert!((mse_identity(-0.0289, 1.3402) - 1.3410).abs() < 5e-5);
        assert!((mse_identity(0.4437, 5.4602) - 5.6571).abs() < 5e-5);
    }

    #[test]
    fn scenario_lookup_and_validation() {
        let s3 = ScenarioSpec::by_name("s3").unwrap();
        assert_eq!((s3.a, s3.b), (0.30, 0.10));
        assert_eq!(s3.deletion_prob(1.0), 0.30);
        assert_eq!(s3.deletion_prob(0.0), 0.10);
        assert!(ScenarioSpec::by_name("S9").is_none());
        assert!(ScenarioSpec::custom(1.2, 0.0).is_err());
        assert!(ScenarioSpec::custom(0.0, 0.0).is_ok());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "IPW3".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("IPW3"), "{err}");
    }

    #[test]
    fn rate_zero_scenario_makes_every_method_the_benchmark() {
        let cfg = GenConfig { n: 150, ..GenConfig::default() };
        let scenario = ScenarioSpec::custom(0.0, 0.0).unwrap();
        let res = run_trial(&cfg, &scenario, &Method::ALL, 0, 99);
        let c_beta = match &res.outcomes[0].1 {
            MethodOutcome::Ok { beta, .. } => beta.clone(),
            other => panic!("C failed: {other:?}"),
        };
        for (method, outcome) in &res.outcomes {
            match outcome {
                MethodOutcome::Ok { beta, .. } => {
                    for j in 0..4 {
                        assert!(
                            (beta[j] - c_beta[j]).abs() < 1e-10,
                            "{method} coefficient {j}: {} vs {}",
                            beta[j],
                            c_beta[j]
                        );
                    }
                }
                MethodOutcome::Failed { reason } => panic!("{method} failed: {reason}"),
            }
        }
    }

    #[test]
    fn theoretical_and_fitted_weights_bracket_the_complete_case_fit() {
        let cfg = GenConfig { n: 300, ..GenConfig::default() };
        let res =
            run_trial(&cfg, &ScenarioSpec::s1(), &[Method::Cc, Method::Ipw1, Method::Ipw2], 3, 17);
        let beta = |i: usize| match &res.outcomes[i].1 {
            MethodOutcome::Ok { beta, .. } => beta.clone(),
            other => panic!("failed: {other:?}"),
        };
        let cc = beta(0);
        let ipw1 = beta(1);
        let ipw2 = beta(2);
        // Constant theoretical weights reduce to the complete-case fit.
        for j in 0..4 {
            assert!((cc[j] - ipw1[j]).abs() < 1e-10, "coefficient {j}");
        }
        // The fitted propensity is not constant, so IPW2 differs.
        assert!((0..4).any(|j| (cc[j] - ipw2[j]).abs() > 1e-8));
    }

    #[test]
    fn trial_bookkeeping_counts_rows() {
        let cfg = GenConfig { n: 200, ..GenConfig::default() };
        let res = run_trial(&cfg, &ScenarioSpec::s2(), &[Method::C, Method::Cc], 1, 23);
        let n_used = |i: usize| match &res.outcomes[i].1 {
            MethodOutcome::Ok { n_used, .. } => *n_used,
            other => panic!("failed: {other:?}"),
        };
        assert_eq!(n_used(0), 200);
        let cc_used = n_used(1);
        assert!(cc_used < 200, "S2 deletes some rows");
        // Deletion is blockwise, so complete rows are exactly what a fresh
        // trial's mask reports.
        let trial_key = StreamKey::root(23).child_index(1);
        let full = gen_full(&cfg, trial_key.child_label("gen"));
        let (_, mask) = inject_missing(
            &full,
            &ScenarioSpec::s2().mechanism(),
            &["z1", "z2", "y"],
            trial_key.child_label("inject"),
        )
        .unwrap();
        let kept = (0..200).filter(|&i| mask.row_fully_observed(i)).count();
        assert_eq!(cc_used, kept);
    }

    #[test]
    fn monte_carlo_report_is_schedule_independent() {
        let cfg = GenConfig { n: 120, ..GenConfig::default() };
        let methods = [Method::C, Method::Cc, Method::Ipw2, Method::Mi5, Method::Ml];
        let a = run_monte_carlo(&cfg, &ScenarioSpec::s2(), &methods, 12, 404, 1).unwrap();
        let b = run_monte_carlo(&cfg, &ScenarioSpec::s2(), &methods, 12, 404, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_report_honors_the_mse_identity_and_se_table() {
        let cfg = GenConfig { n: 150, ..GenConfig::default() };
        let methods = [Method::C, Method::Cc, Method::Mi5, Method::Ml];
        let report =
            run_monte_carlo(&cfg, &ScenarioSpec::s1(), &methods, 10, 505, 2).unwrap();
        assert_eq!(report.coef_names, vec!["intercept", "z", "z1", "z2"]);
        for m in &report.metrics {
            assert_eq!(m.successes + m.failures, 10);
            for j in 0..4 {
                assert_eq!(m.mse[j], mse_identity(m.bias[j], m.var[j]));
            }
        }
        // ML reports no standard errors, so it has no accuracy row.
        assert!(report.se_accuracy.iter().all(|s| s.method != Method::Ml));
        assert!(report.se_accuracy.iter().any(|s| s.method == Method::Cc));
        for s in &report.se_accuracy {
            for j in 0..4 {
                assert!(s.ratio_mean[j] > 0.0 && s.ratio_mean[j].is_finite());
                assert!(s.ratio_median[j] > 0.0 && s.ratio_median[j].is_finite());
            }
        }
    }

    #[test]
    fn widespread_failure_surfaces_as_insufficient_trials() {
        // Deleting nearly every row starves the complete-case fit.
        let cfg = GenConfig { n: 40, ..GenConfig::default() };
        let scenario = ScenarioSpec::custom(0.97, 0.97).unwrap();
        match run_monte_carlo(&cfg, &scenario, &[Method::Cc], 10, 606, 1) {
            Err(SimError::InsufficientTrials { method: Method::Cc, successes, trials: 10 }) => {
                assert!(successes < 5);
            }
            other => panic!("expected InsufficientTrials, got {other:?}"),
        }
    }

    #[test]
    fn bad_configs_are_rejected_by_name() {
        let mut cfg = GenConfig::default();
        cfg.p1 = 1.5;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("p1"), "{err}");
        let mut cfg = GenConfig::default();
        cfg.normal_params[2].1 = -1.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("normal_params[2]"), "{err}");
        let bad = run_monte_carlo(
            &GenConfig::default(),
            &ScenarioSpec::s1(),
            &[Method::Cc, Method::Cc],
            5,
            1,
            1,
        );
        assert!(bad.unwrap_err().to_string().contains("twice"));
    }
}
