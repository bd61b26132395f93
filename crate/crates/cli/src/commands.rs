//! The two subcommands: `simulate` drives the Monte Carlo lab and writes
//! its tables; `fit` runs the estimators side by side on one dataset.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use misslab_core::estimators::{
    bootstrap_se, fit_cc, fit_ipw, fit_ml_em, fit_propensity, mice_impute, rubin_pool,
    BootstrapMethod, EmOptions, EstimatorError, ModelSpec, PropensityFit, MICE_DEFAULT_CYCLES,
};
use misslab_core::glm::{logistic_prob, GlmError};
use misslab_core::simlab::run_monte_carlo;
use misslab_core::stream::StreamKey;
use misslab_core::table::{classify_pattern, infer_schema, load_csv, PatternClass, Table};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::config::{echo_config, scenario_tag, FitMethod, FitPlan, SimulatePlan};
use crate::report::{
    accuracy_csv, estimates_csv, fit_summary_md, metadata_json, metrics_csv, se_csv,
    simulate_summary_md, FitColumn, FitReport, Metadata,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs every requested (scenario, n) pair and writes the report bundle.
pub fn cmd_simulate(plan: &SimulatePlan) -> Result<()> {
    let t0 = Instant::now();
    fs::create_dir_all(&plan.out)
        .with_context(|| format!("cannot create output directory {}", plan.out.display()))?;
    let mut reports = Vec::new();
    for scenario in &plan.scenarios {
        for &n in &plan.n_list {
            let mut gen = plan.gen.clone();
            gen.n = n;
            log::info!(
                "scenario {} n={} M={} methods={}",
                scenario.id,
                n,
                plan.trials,
                plan.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
            );
            let report = run_monte_carlo(
                &gen,
                scenario,
                &plan.methods,
                plan.trials,
                plan.seed,
                plan.jobs,
            )?;
            let tag = scenario_tag(scenario);
            write_file(&plan.out.join(format!("metrics_{tag}_n{n}.csv")), &metrics_csv(&report))?;
            if let Some(se) = se_csv(&report) {
                write_file(&plan.out.join(format!("se_accuracy_{tag}_n{n}.csv")), &se)?;
            }
            reports.push(report);
        }
    }
    write_file(&plan.out.join("summary.md"), &simulate_summary_md(&reports, &plan.methods))?;
    let wall = t0.elapsed().as_secs_f64();
    write_file(
        &plan.out.join("metadata.json"),
        &crate::report::simulate_metadata(VERSION, plan.seed, wall, echo_config(plan)),
    )?;
    println!("wrote {}", plan.out.display());
    Ok(())
}

/// Runs the requested estimators on one CSV dataset and writes the
/// comparison bundle.
pub fn cmd_fit(plan: &FitPlan) -> Result<()> {
    let t0 = Instant::now();
    let schema = infer_schema(&plan.data)
        .with_context(|| format!("cannot read {}", plan.data.display()))?;
    let table = load_csv(&plan.data, &schema)
        .with_context(|| format!("cannot load {}", plan.data.display()))?;
    let names: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    for name in std::iter::once(&plan.response).chain(plan.predictors.iter()) {
        if table.column(name).is_none() {
            bail!(
                "column {:?} is not in {} (columns: {})",
                name,
                plan.data.display(),
                names.join(", ")
            );
        }
    }
    let predictors: Vec<&str> = plan.predictors.iter().map(|s| s.as_str()).collect();
    let spec = ModelSpec::new(&plan.response, &predictors);
    let key = StreamKey::root(plan.seed);

    let mut columns = Vec::with_capacity(plan.methods.len());
    for method in &plan.methods {
        let col = fit_one(&table, &spec, *method, plan, key)
            .with_context(|| format!("method {} failed on {}", method, plan.data.display()))?;
        columns.push(col);
    }
    let rep = FitReport { coef_names: spec.coef_names(), columns };

    fs::create_dir_all(&plan.out)
        .with_context(|| format!("cannot create output directory {}", plan.out.display()))?;
    write_file(&plan.out.join("estimates.csv"), &estimates_csv(&rep))?;
    write_file(&plan.out.join("accuracy.csv"), &accuracy_csv(&rep))?;
    let blockwise_ml = plan.methods.contains(&FitMethod::Ml)
        && matches!(classify_pattern(&table), PatternClass::Blockwise { .. });
    write_file(&plan.out.join("summary.md"), &fit_summary_md(&rep, blockwise_ml))?;

    #[derive(Serialize)]
    struct FitEcho<'a> {
        mode: &'static str,
        data: String,
        response: &'a str,
        predictors: &'a [String],
        methods: Vec<&'static str>,
        bootstrap: usize,
        seed: u64,
    }
    let echo = FitEcho {
        mode: "fit",
        data: plan.data.display().to_string(),
        response: &plan.response,
        predictors: &plan.predictors,
        methods: plan.methods.iter().map(|m| m.name()).collect(),
        bootstrap: plan.bootstrap,
        seed: plan.seed,
    };
    let meta = Metadata {
        version: VERSION.to_string(),
        seed: plan.seed,
        wall_time_secs: t0.elapsed().as_secs_f64(),
        config: echo,
    };
    write_file(&plan.out.join("metadata.json"), &metadata_json(&meta))?;
    println!("wrote {}", plan.out.display());
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

/// Two-sided Wald p-value; a Student-t reference when finite degrees of
/// freedom are given (multiple imputation), the normal otherwise.
fn two_sided_p(z: f64, df: Option<f64>) -> f64 {
    let za = z.abs();
    match df {
        // Very large df is numerically the normal; AND the pooling rules
        // return +inf when the between-imputation variance is zero.
        Some(d) if d.is_finite() && d <= 1e6 => {
            let t = StudentsT::new(0.0, 1.0, d).expect("valid df");
            2.0 * t.cdf(-za)
        }
        _ => {
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            2.0 * n.cdf(-za)
        }
    }
}

/// Classification accuracy at the 0.5 cutoff over the rows complete on the
/// response and every predictor.
fn accuracy(table: &Table, spec: &ModelSpec, beta: &[f64]) -> Option<(usize, f64)> {
    let y_col = table.column(&spec.response)?;
    let x_cols: Vec<usize> =
        spec.predictors.iter().map(|p| table.column(p)).collect::<Option<_>>()?;
    let mut n_eval = 0usize;
    let mut correct = 0usize;
    for r in 0..table.n_rows() {
        let Some(yv) = table.get(r, y_col) else { continue };
        let mut eta = beta[0];
        let mut complete = true;
        for (j, &c) in x_cols.iter().enumerate() {
            match table.get(r, c) {
                Some(v) => eta += beta[j + 1] * v,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }
        n_eval += 1;
        if (logistic_prob(eta) > 0.5) == (yv > 0.5) {
            correct += 1;
        }
    }
    (n_eval > 0).then(|| (n_eval, correct as f64 / n_eval as f64))
}

fn column_from(
    method: FitMethod,
    beta: Vec<f64>,
    se: Vec<f64>,
    df: Option<&[f64]>,
    n_used: usize,
    table: &Table,
    spec: &ModelSpec,
    notes: Vec<String>,
) -> FitColumn {
    let wald_z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s.max(1e-300)).collect();
    let p: Vec<f64> = wald_z
        .iter()
        .enumerate()
        .map(|(j, &z)| two_sided_p(z, df.map(|d| d[j])))
        .collect();
    let accuracy = accuracy(table, spec, &beta);
    FitColumn { method: method.name().to_string(), beta, se, wald_z, p, n_used, accuracy, notes }
}

fn fit_one(
    table: &Table,
    spec: &ModelSpec,
    method: FitMethod,
    plan: &FitPlan,
    key: StreamKey,
) -> Result<FitColumn> {
    match method {
        FitMethod::Cc => {
            let fit = fit_cc(table, spec)?;
            let se = fit.se();
            Ok(column_from(method, fit.beta, se, None, fit.n_used, table, spec, vec![]))
        }
        FitMethod::Ipw => {
            let mask = table.mask();
            let drivers: Vec<&str> = plan
                .predictors
                .iter()
                .map(|s| s.as_str())
                .filter(|name| {
                    table.column(name).map(|c| table.col_missing(c) == 0).unwrap_or(false)
                })
                .collect();
            let mut notes = Vec::new();
            let prop = if drivers.is_empty() {
                notes.push(
                    "IPW: no fully observed predictor to drive the propensity; \
                     unit weights used"
                        .to_string(),
                );
                PropensityFit::theoretical(vec![1.0; table.n_rows()])?
            } else {
                match fit_propensity(table, &mask, &drivers) {
                    Ok(p) => p,
                    Err(EstimatorError::Glm(GlmError::Degenerate { .. })) => {
                        notes.push(
                            "IPW: completeness indicator is constant (degenerate \
                             propensity); unit weights used"
                                .to_string(),
                        );
                        PropensityFit::theoretical(vec![1.0; table.n_rows()])?
                    }
                    Err(e) => return Err(e.into()),
                }
            };
            for note in &notes {
                log::warn!("{note}");
            }
            if prop.n_floored > 0 {
                notes.push(format!(
                    "IPW: {} propensities floored at 0.01 before weighting",
                    prop.n_floored
                ));
            }
            let fit = fit_ipw(table, spec, &prop)?;
            let se = fit.se();
            Ok(column_from(method, fit.beta, se, None, fit.n_used, table, spec, notes))
        }
        FitMethod::Mi5 | FitMethod::Mi20 => {
            let m = if method == FitMethod::Mi5 { 5 } else { 20 };
            let label = if method == FitMethod::Mi5 { "mi5" } else { "mi20" };
            let set = mice_impute(table, m, MICE_DEFAULT_CYCLES, key.child_label(label))?;
            let fits = set
                .tables
                .iter()
                .map(|t| fit_cc(t, spec))
                .collect::<Result<Vec<_>, _>>()?;
            let pooled = rubin_pool(&fits)?;
            let mut notes = Vec::new();
            if set.ridge_fallbacks > 0 {
                notes.push(format!(
                    "{}: {} within-cycle fits used the ridge fallback",
                    method.name(),
                    set.ridge_fallbacks
                ));
            }
            Ok(column_from(
                method,
                pooled.beta_bar.clone(),
                pooled.se(),
                Some(&pooled.df),
                table.n_rows(),
                table,
                spec,
                notes,
            ))
        }
        FitMethod::Ml => {
            let fit = fit_ml_em(table, spec, &EmOptions::default())?;
            let boot = bootstrap_se(
                table,
                spec,
                &BootstrapMethod::Ml,
                plan.bootstrap,
                key.child_label("ml-boot"),
            )?;
            let notes = vec![format!(
                "ML: standard errors from {} bootstrap resamples ({} refits succeeded)",
                boot.resamples, boot.successes
            )];
            Ok(column_from(
                method,
                fit.beta,
                boot.se,
                None,
                table.n_rows(),
                table,
                spec,
                notes,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFile, SimulateFlags};
    use misslab_core::simlab::{gen_full, GenConfig};
    use misslab_core::table::write_csv;
    use std::path::PathBuf;

    fn study_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
        let cfg = GenConfig { n, ..GenConfig::default() };
        let table = gen_full(&cfg, StreamKey::root(seed));
        let path = dir.join("data.csv");
        write_csv(&table, &path).unwrap();
        path
    }

    fn fit_plan_for(data: PathBuf, out: PathBuf, methods: &[&str], bootstrap: usize) -> FitPlan {
        FitPlan {
            data,
            response: "y".into(),
            predictors: vec!["z".into(), "z1".into(), "z2".into()],
            methods: methods
                .iter()
                .map(|tok| match *tok {
                    "CC" => FitMethod::Cc,
                    "IPW" => FitMethod::Ipw,
                    "MI5" => FitMethod::Mi5,
                    "MI20" => FitMethod::Mi20,
                    "ML" => FitMethod::Ml,
                    other => panic!("unexpected token {other}"),
                })
                .collect(),
            bootstrap,
            seed: 11,
            out,
        }
    }

    fn parse_estimates(path: &Path) -> Vec<(String, String, f64)> {
        let text = fs::read_to_string(path).unwrap();
        text.lines()
            .skip(1)
            .map(|line| {
                let p: Vec<&str> = line.split(',').collect();
                (p[0].to_string(), p[1].to_string(), p[2].parse().unwrap())
            })
            .collect()
    }


    #[test]
    fn complete_dataset_collapses_every_method_onto_cc() {
        let dir = tempfile::tempdir().unwrap();
        let data = study_csv(dir.path(), 150, 3);
        let out = dir.path().join("out");
        let plan = fit_plan_for(data, out.clone(), &["CC", "IPW", "MI5", "ML"], 50);
        cmd_fit(&plan).unwrap();
        let rows = parse_estimates(&out.join("estimates.csv"));
        assert_eq!(rows.len(), 4 * 4);
        for chunk in rows.chunks(4).skip(1) {
            for (j, (_, coef, est)) in chunk.iter().enumerate() {
                assert_eq!(coef, &rows[j].1);
                assert!(
                    (est - rows[j].2).abs() < 1e-8,
                    "{} {coef}: {est} vs {}",
                    chunk[0].0,
                    rows[j].2
                );
            }
        }
        let summary = fs::read_to_string(out.join("summary.md")).unwrap();
        assert!(summary.contains("unit weights used"));
        assert!(summary.contains("accuracy at 0.5"));
        let meta = fs::read_to_string(out.join("metadata.json")).unwrap();
        assert!(meta.contains("\"seed\": 11"));
    }

    #[test]
    fn fit_is_deterministic_in_the_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { n: 220, ..GenConfig::default() };
        let table = gen_full(&cfg, StreamKey::root(8));
        let mech = misslab_core::simlab::ScenarioSpec::s2().mechanism();
        let (thinned, _) = misslab_core::missing::inject_missing(
            &table,
            &mech,
            &["z1", "z2", "y"],
            StreamKey::root(8).child_label("inject"),
        )
        .unwrap();
        let data = dir.path().join("data.csv");
        write_csv(&thinned, &data).unwrap();

        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_fit(&fit_plan_for(data.clone(), out_a.clone(), &["CC", "IPW", "MI5"], 50)).unwrap();
        cmd_fit(&fit_plan_for(data, out_b.clone(), &["CC", "IPW", "MI5"], 50)).unwrap();
        let a = fs::read_to_string(out_a.join("estimates.csv")).unwrap();
        let b = fs::read_to_string(out_b.join("estimates.csv")).unwrap();
        assert_eq!(a, b);
        assert!(a.lines().count() > 1);
    }

    #[test]
    fn missing_column_is_reported_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let data = study_csv(dir.path(), 40, 5);
        let mut plan = fit_plan_for(data, dir.path().join("out"), &["CC"], 50);
        plan.predictors = vec!["z".into(), "height".into()];
        let err = cmd_fit(&plan).unwrap_err();
        assert!(format!("{err:#}").contains("height"));
    }

    #[test]
    fn simulate_writes_a_deterministic_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let file: ConfigFile = serde_json::from_str(
            r#"{"scenario": "S1", "trials": 6, "n": 60, "seed": 4, "methods": ["C", "CC"]}"#,
        )
        .unwrap();
        let mk = |out: PathBuf| {
            crate::config::simulate_plan(&SimulateFlags::default(), &file, None, out).unwrap()
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_simulate(&mk(out_a.clone())).unwrap();
        cmd_simulate(&mk(out_b.clone())).unwrap();
        for name in ["metrics_S1_n60.csv", "se_accuracy_S1_n60.csv", "summary.md"] {
            let a = fs::read_to_string(out_a.join(name)).unwrap();
            let b = fs::read_to_string(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        let metrics = fs::read_to_string(out_a.join("metrics_S1_n60.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 2 * 4);
        for line in metrics.lines().skip(1) {
            for field in line.split(',').skip(2) {
                let v: f64 = field.parse().unwrap();
                assert!(v.is_finite());
            }
        }
        // The metadata echo alone reproduces the run.
        let plan = mk(dir.path().join("c"));
        cmd_simulate(&plan).unwrap();
        let reloaded = crate::config::load_config(&dir.path().join("c/metadata.json")).unwrap();
        let plan2 = crate::config::simulate_plan(
            &SimulateFlags::default(),
            &reloaded,
            None,
            dir.path().join("d"),
        )
        .unwrap();
        cmd_simulate(&plan2).unwrap();
        let c = fs::read_to_string(dir.path().join("c/metrics_S1_n60.csv")).unwrap();
        let d = fs::read_to_string(dir.path().join("d/metrics_S1_n60.csv")).unwrap();
        assert_eq!(c, d);
    }
}
