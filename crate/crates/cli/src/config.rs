//! Run configuration: the JSON file format, flag overrides, seed
//! resolution, and validation.
//!
//! Precedence is always flag > config file > `MISSLAB_SEED` (for the seed
//! only) > built-in default. The built-in defaults reproduce the study
//! design: all four scenarios, all seven methods, M = 1000 trials, and
//! sample sizes {230, 400, 1000}.

use std::path::{Path, PathBuf};

use misslab_core::estimators::MIN_RESAMPLES;
use misslab_core::simlab::{GenConfig, Method, ScenarioSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seed used when neither flags, config file, nor `MISSLAB_SEED` give one.
pub const DEFAULT_SEED: u64 = 42;

/// Default trial count per (scenario, n) pair.
pub const DEFAULT_TRIALS: usize = 1000;

/// Default sample-size sweep.
pub const DEFAULT_N: [usize; 3] = [230, 400, 1000];

/// Default bootstrap resamples for fit-mode ML standard errors.
pub const DEFAULT_BOOTSTRAP: usize = 200;

/// Configuration problems, reported before any work starts.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config {path} is not valid: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("config key {key}: {detail}")]
    Invalid { key: String, detail: String },

    #[error("unknown method {token:?}; expected one of {expected}")]
    UnknownMethod { token: String, expected: &'static str },
}

/// The on-disk configuration. Every key is optional; omitted keys take the
/// study defaults, so `{}` is a complete configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    /// Data-generator overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenSection>,
    /// A single scenario; shorthand for a one-element `scenarios` list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioField>,
    /// The scenarios to sweep; default S1–S4.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<ScenarioField>>,
    /// Methods to run; default all seven.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    /// Monte Carlo trials per (scenario, n) pair; default 1000.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Sample size(s); a single integer or a list. Default [230, 400, 1000].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<NList>,
    /// Base seed; default taken from `MISSLAB_SEED`, then 42.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads for trial execution; default 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// Generator overrides; any omitted field keeps the study default.
/// The sample size is controlled by the top-level `n`, not here.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_params: Option<[(f64, f64); 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_true: Option<[f64; 4]>,
}

/// A scenario reference: a name (`"S1"`–`"S4"`) or explicit missingness
/// rates `{"a": …, "b": …}` (deletion probability `a` when z = 1, `b` when
/// z = 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioField {
    Name(String),
    Custom { a: f64, b: f64 },
}

/// One sample size or a sweep of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    One(usize),
    Many(Vec<usize>),
}

/// Simulate-mode flags as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct SimulateFlags {
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub jobs: Option<usize>,
}

/// A fully resolved simulate run.
#[derive(Debug, Clone)]
pub struct SimulatePlan {
    /// Generator settings; `gen.n` is overwritten per run from `n_list`.
    pub gen: GenConfig,
    pub scenarios: Vec<ScenarioSpec>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
}

/// Fit-mode flags as given on the command line.
#[derive(Debug, Clone)]
pub struct FitFlags {
    pub data: PathBuf,
    pub response: String,
    pub predictors: Vec<String>,
    pub methods: Vec<String>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// The estimators available for a real dataset. `C` and `IPW1` need the
/// pre-deletion table and the design's deletion rates, so they exist only
/// inside the simulation lab.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Cc,
    Ipw,
    Mi5,
    Mi20,
    Ml,
}

impl FitMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FitMethod::Cc => "CC",
            FitMethod::Ipw => "IPW",
            FitMethod::Mi5 => "MI5",
            FitMethod::Mi20 => "MI20",
            FitMethod::Ml => "ML",
        }
    }

    fn parse(token: &str) -> Result<Self, ConfigError> {
        match token.to_ascii_uppercase().as_str() {
            "CC" => Ok(FitMethod::Cc),
            // The lab distinguishes theoretical (IPW1) and estimated (IPW2)
            // weights; on a real dataset only the estimated kind exists.
            "IPW" | "IPW2" => Ok(FitMethod::Ipw),
            "MI5" => Ok(FitMethod::Mi5),
            "MI20" => Ok(FitMethod::Mi20),
            "ML" => Ok(FitMethod::Ml),
            _ => Err(ConfigError::UnknownMethod {
                token: token.to_string(),
                expected: "CC, IPW, MI5, MI20, ML",
            }),
        }
    }
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved fit run.
#[derive(Debug, Clone)]
pub struct FitPlan {
    pub data: PathBuf,
    pub response: String,
    pub predictors: Vec<String>,
    pub methods: Vec<FitMethod>,
    pub bootstrap: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Loads a configuration file. A metadata file emitted by a previous run is
/// also accepted: its `config` object is extracted, so a run can be
/// reproduced directly from its own provenance record.
pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    match serde_json::from_str::<ConfigFile>(&text) {
        Ok(cfg) => Ok(cfg),
        Err(first) => {
            #[derive(Deserialize)]
            struct MetadataEcho {
                config: ConfigFile,
            }
            match serde_json::from_str::<MetadataEcho>(&text) {
                Ok(meta) => Ok(meta.config),
                Err(_) => Err(ConfigError::Parse {
                    path: path.to_path_buf(),
                    detail: first.to_string(),
                }),
            }
        }
    }
}

fn resolve_seed(
    flag: Option<u64>,
    file: Option<u64>,
    env_seed: Option<&str>,
) -> Result<u64, ConfigError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    if let Some(text) = env_seed {
        return text.trim().parse::<u64>().map_err(|_| ConfigError::Invalid {
            key: "MISSLAB_SEED".into(),
            detail: format!("expected an unsigned integer, got {text:?}"),
        });
    }
    Ok(DEFAULT_SEED)
}

fn resolve_scenario_field(field: &ScenarioField) -> Result<ScenarioSpec, ConfigError> {
    match field {
        ScenarioField::Name(name) => {
            ScenarioSpec::by_name(name).ok_or_else(|| ConfigError::Invalid {
                key: "scenario".into(),
                detail: format!("unknown scenario {name:?}; expected S1, S2, S3 or S4"),
            })
        }
        ScenarioField::Custom { a, b } => ScenarioSpec::custom(*a, *b)
            .map_err(|e| ConfigError::Invalid { key: "scenario".into(), detail: e.to_string() }),
    }
}

fn resolve_methods(tokens: &[String]) -> Result<Vec<Method>, ConfigError> {
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let m: Method = tok.parse().map_err(|_| ConfigError::UnknownMethod {
            token: tok.clone(),
            expected: "C, CC, IPW1, IPW2, MI5, MI20, ML",
        })?;
        if out.contains(&m) {
            return Err(ConfigError::Invalid {
                key: "methods".into(),
                detail: format!("method {m} listed more than once"),
            });
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(ConfigError::Invalid { key: "methods".into(), detail: "empty list".into() });
    }
    Ok(out)
}

/// Merges flags over the file and validates everything, producing a plan
/// that `cmd_simulate` can execute without further checks.
pub fn simulate_plan(
    flags: &SimulateFlags,
    file: &ConfigFile,
    env_seed: Option<&str>,
    out: PathBuf,
) -> Result<SimulatePlan, ConfigError> {
    let mut gen = GenConfig::default();
    if let Some(sec) = &file.gen {
        if let Some(v) = sec.p1 {
            gen.p1 = v;
        }
        if let Some(v) = sec.p2 {
            gen.p2 = v;
        }
        if let Some(v) = sec.normal_params {
            gen.normal_params = v;
        }
        if let Some(v) = sec.beta_true {
            gen.beta_true = v;
        }
    }
    gen.validate()
        .map_err(|e| ConfigError::Invalid { key: "gen".into(), detail: e.to_string() })?;

    let scenarios: Vec<ScenarioSpec> = if let Some(name) = &flags.scenario {
        vec![ScenarioSpec::by_name(name).ok_or_else(|| ConfigError::Invalid {
            key: "--scenario".into(),
            detail: format!("unknown scenario {name:?}; expected S1, S2, S3 or S4"),
        })?]
    } else if let Some(list) = &file.scenarios {
        if file.scenario.is_some() {
            return Err(ConfigError::Invalid {
                key: "scenario".into(),
                detail: "give either `scenario` or `scenarios`, not both".into(),
            });
        }
        list.iter().map(resolve_scenario_field).collect::<Result<_, _>>()?
    } else if let Some(field) = &file.scenario {
        vec![resolve_scenario_field(field)?]
    } else {
        vec![ScenarioSpec::s1(), ScenarioSpec::s2(), ScenarioSpec::s3(), ScenarioSpec::s4()]
    };
    if scenarios.is_empty() {
        return Err(ConfigError::Invalid { key: "scenarios".into(), detail: "empty list".into() });
    }
    let mut tags: Vec<String> = scenarios.iter().map(scenario_tag).collect();
    tags.sort();
    tags.dedup();
    if tags.len() != scenarios.len() {
        return Err(ConfigError::Invalid {
            key: "scenarios".into(),
            detail: "scenarios must be distinct".into(),
        });
    }

    let methods = match (&flags.methods, &file.methods) {
        (Some(list), _) => resolve_methods(list)?,
        (None, Some(list)) => resolve_methods(list)?,
        (None, None) => Method::ALL.to_vec(),
    };

    let trials = flags.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    if trials < 2 {
        return Err(ConfigError::Invalid {
            key: "trials".into(),
            detail: format!("need at least 2 trials, got {trials}"),
        });
    }

    let n_list: Vec<usize> = if let Some(n) = flags.n {
        vec![n]
    } else {
        match &file.n {
            Some(NList::One(n)) => vec![*n],
            Some(NList::Many(list)) => list.clone(),
            None => DEFAULT_N.to_vec(),
        }
    };
    if n_list.is_empty() {
        return Err(ConfigError::Invalid { key: "n".into(), detail: "empty list".into() });
    }
    for &n in &n_list {
        if n < 2 {
            return Err(ConfigError::Invalid {
                key: "n".into(),
                detail: format!("sample size must be at least 2, got {n}"),
            });
        }
    }
    {
        let mut sorted = n_list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n_list.len() {
            return Err(ConfigError::Invalid {
                key: "n".into(),
                detail: "sample sizes must be distinct".into(),
            });
        }
    }

    let seed = resolve_seed(flags.seed, file.seed, env_seed)?;

    let jobs = flags.jobs.or(file.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(ConfigError::Invalid {
            key: "jobs".into(),
            detail: "need at least one worker".into(),
        });
    }

    Ok(SimulatePlan { gen, scenarios, methods, trials, n_list, seed, jobs, out })
}

/// Resolves and validates fit-mode flags.
pub fn fit_plan(flags: &FitFlags, env_seed: Option<&str>) -> Result<FitPlan, ConfigError> {
    if flags.predictors.is_empty() {
        return Err(ConfigError::Invalid {
            key: "--predictors".into(),
            detail: "empty list".into(),
        });
    }
    let mut methods = Vec::with_capacity(flags.methods.len());
    for tok in &flags.methods {
        let m = FitMethod::parse(tok)?;
        if methods.contains(&m) {
            return Err(ConfigError::Invalid {
                key: "--methods".into(),
                detail: format!("method {m} listed more than once"),
            });
        }
        methods.push(m);
    }
    if methods.is_empty() {
        return Err(ConfigError::Invalid { key: "--methods".into(), detail: "empty list".into() });
    }
    let bootstrap = flags.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP);
    if bootstrap < MIN_RESAMPLES {
        return Err(ConfigError::Invalid {
            key: "--bootstrap".into(),
            detail: format!("need at least {MIN_RESAMPLES} resamples, got {bootstrap}"),
        });
    }
    let seed = resolve_seed(flags.seed, None, env_seed)?;
    Ok(FitPlan {
        data: flags.data.clone(),
        response: flags.response.clone(),
        predictors: flags.predictors.clone(),
        methods,
        bootstrap,
        seed,
        out: flags.out.clone(),
    })
}

/// A short, filesystem-safe tag for a scenario, used in output filenames.
pub fn scenario_tag(s: &ScenarioSpec) -> String {
    if ScenarioSpec::by_name(&s.id).is_some() {
        s.id.clone()
    } else {
        format!("custom_a{}_b{}", s.a, s.b)
    }
}

/// The canonical config echo for a resolved plan: loading this back (alone
/// or wrapped in a metadata file) reproduces the run exactly.
pub fn echo_config(plan: &SimulatePlan) -> ConfigFile {
    let gen = GenSection {
        p1: Some(plan.gen.p1),
        p2: Some(plan.gen.p2),
        normal_params: Some(plan.gen.normal_params),
        beta_true: Some(plan.gen.beta_true),
    };
    let scenarios = plan
        .scenarios
        .iter()
        .map(|s| {
            if ScenarioSpec::by_name(&s.id).is_some() {
                ScenarioField::Name(s.id.clone())
            } else {
                ScenarioField::Custom { a: s.a, b: s.b }
            }
        })
        .collect();
    ConfigFile {
        gen: Some(gen),
        scenario: None,
        scenarios: Some(scenarios),
        methods: Some(plan.methods.iter().map(|m| m.name().to_string()).collect()),
        trials: Some(plan.trials),
        n: Some(NList::Many(plan.n_list.clone())),
        seed: Some(plan.seed),
        jobs: Some(plan.jobs),
    }
}
