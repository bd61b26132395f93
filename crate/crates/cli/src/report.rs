//! Report rendering: CSV tables at six significant digits, a Markdown
//! summary at four decimals, and the metadata echo that makes every run
//! reproducible from its own output directory.

use misslab_core::simlab::{McReport, Method};
use serde::Serialize;

use crate::config::ConfigFile;

/// Formats a value with six significant digits in plain decimal notation,
/// keeping trailing zeros (`-0.0040599951` → `"-0.00406000"`). Values at or
/// above 1e6 print with all their integer digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        // The emit contract keeps non-finite numbers out of tables; format
        // plainly rather than panic mid-report if one slips through.
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let prec = (5 - mag).clamp(0, 308);
    // Rounding can carry into a new leading digit (0.09999999 → 0.1), which
    // changes how many decimals six significant digits need; recompute the
    // magnitude from the rounded value before formatting.
    let scale = 10f64.powi(prec);
    let rounded = (x * scale).round() / scale;
    let mag2 = if rounded == 0.0 { mag } else { rounded.abs().log10().floor() as i32 };
    let prec2 = (5 - mag2).clamp(0, 308) as usize;
    format!("{:.*}", prec2, x)
}

/// Four-decimal display formatting for the Markdown summary.
pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

/// Significance marks at the conventional thresholds.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

/// The per-(scenario, n) metrics table.
pub fn metrics_csv(report: &McReport) -> String {
    let mut s = String::from("method,coefficient,bias,var,mse,n_fail\n");
    for m in &report.metrics {
        for (j, coef) in report.coef_names.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.method,
                coef,
                sig6(m.bias[j]),
                sig6(m.var[j]),
                sig6(m.mse[j]),
                m.failures
            ));
        }
    }
    s
}

/// The standard-error accuracy table; `None` when no method reported SEs.
pub fn se_csv(report: &McReport) -> Option<String> {
    if report.se_accuracy.is_empty() {
        return None;
    }
    let mut s = String::from("method,coefficient,se_ratio_mean,se_ratio_median\n");
    for acc in &report.se_accuracy {
        for (j, coef) in report.coef_names.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                acc.method,
                coef,
                sig6(acc.ratio_mean[j]),
                sig6(acc.ratio_median[j])
            ));
        }
    }
    Some(s)
}

fn blockwise_ml_note() -> &'static str {
    "> **ML and CC under blockwise missingness.** In this design the three\n\
     > analysis variables are deleted jointly while `z` stays observed, so an\n\
     > incomplete row retains no analysis variable at all. Such rows carry no\n\
     > information about the regression coefficients in the factored\n\
     > likelihood, and the EM-based ML estimator coincides with complete-case\n\
     > analysis up to convergence tolerance. External results that show ML\n\
     > differing from CC under this exact pattern come from a different model\n\
     > factorization or from auxiliary information, and are not comparable to\n\
     > these tables.\n"
}

/// The human-readable summary across every (scenario, n) table in the run.
pub fn simulate_summary_md(reports: &[McReport], methods: &[Method]) -> String {
    let mut s = String::from("# Simulation report\n\n");
    if let Some(first) = reports.first() {
        s.push_str(&format!(
            "Base seed {}; {} trials per table; methods: {}.\n\n",
            first.base_seed,
            first.trials,
            methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
        ));
    }
    s.push_str(
        "Metrics are across successful trials: bias and variance of the\n\
         estimates about the generating coefficients, and mse = bias² + var.\n\
         Failed trials are counted per method, never averaged in.\n\n",
    );
    for report in reports {
        s.push_str(&format!("## {}, n = {}\n\n", report.scenario.id, report.n));
        s.push_str(&format!(
            "Deletion probability {} when z = 1, {} when z = 0.\n\n",
            report.scenario.a, report.scenario.b
        ));
        s.push_str("| method | coefficient | bias | var | mse | failures |\n");
        s.push_str("|---|---|---:|---:|---:|---:|\n");
        for m in &report.metrics {
            for (j, coef) in report.coef_names.iter().enumerate() {
                s.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} |\n",
                    m.method,
                    coef,
                    fmt4(m.bias[j]),
                    fmt4(m.var[j]),
                    fmt4(m.mse[j]),
                    m.failures
                ));
            }
        }
        s.push('\n');
        if !report.se_accuracy.is_empty() {
            s.push_str(
                "Standard-error accuracy: reported SE over the realized\n\
                 standard deviation of the estimates (1.0 = calibrated).\n\n",
            );
            s.push_str("| method | coefficient | mean ratio | median ratio |\n");
            s.push_str("|---|---|---:|---:|\n");
            for acc in &report.se_accuracy {
                for (j, coef) in report.coef_names.iter().enumerate() {
                    s.push_str(&format!(
                        "| {} | {} | {} | {} |\n",
                        acc.method,
                        coef,
                        fmt4(acc.ratio_mean[j]),
                        fmt4(acc.ratio_median[j])
                    ));
                }
            }
            s.push('\n');
        }
    }
    if methods.contains(&Method::Ml) {
        s.push_str(blockwise_ml_note());
    }
    s
}

/// One method's results on a single dataset.
#[derive(Debug, Clone)]
pub struct FitColumn {
    pub method: String,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub wald_z: Vec<f64>,
    pub p: Vec<f64>,
    pub n_used: usize,
    /// `(rows evaluated, proportion correct)` at the 0.5 cutoff.
    pub accuracy: Option<(usize, f64)>,
    /// Human-readable notices (e.g. a unit-weight fallback).
    pub notes: Vec<String>,
}

/// Everything `fit` produces for one dataset.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub coef_names: Vec<String>,
    pub columns: Vec<FitColumn>,
}

/// The machine-readable fit table.
pub fn estimates_csv(rep: &FitReport) -> String {
    let mut s = String::from("method,coefficient,estimate,se,wald_z,p_value,stars,n_used\n");
    for col in &rep.columns {
        for (j, coef) in rep.coef_names.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                col.method,
                coef,
                sig6(col.beta[j]),
                sig6(col.se[j]),
                sig6(col.wald_z[j]),
                sig6(col.p[j]),
                stars(col.p[j]),
                col.n_used
            ));
        }
    }
    s
}

/// Classification accuracy of each method's fitted model at the 0.5 cutoff,
/// evaluated on the complete rows.
pub fn accuracy_csv(rep: &FitReport) -> String {
    let mut s = String::from("method,n_eval,accuracy\n");
    for col in &rep.columns {
        if let Some((n_eval, acc)) = col.accuracy {
            s.push_str(&format!("{},{},{}\n", col.method, n_eval, sig6(acc)));
        }
    }
    s
}

/// The side-by-side comparison table: coefficients as rows, methods as
/// columns, each cell `estimate^stars (se)`.
pub fn fit_summary_md(rep: &FitReport, blockwise_note: bool) -> String {
    let mut s = String::from("# Model comparison\n\n");
    s.push_str("Estimated coefficients (standard errors in brackets).\n\n");
    s.push_str("| coefficient |");
    for col in &rep.columns {
        s.push_str(&format!(" {} |", col.method));
    }
    s.push('\n');
    s.push_str("|---|");
    for _ in &rep.columns {
        s.push_str("---:|");
    }
    s.push('\n');
    for (j, coef) in rep.coef_names.iter().enumerate() {
        s.push_str(&format!("| {coef} |"));
        for col in &rep.columns {
            s.push_str(&format!(
                " {}{} ({}) |",
                fmt4(col.beta[j]),
                stars(col.p[j]),
                fmt4(col.se[j])
            ));
        }
        s.push('\n');
    }
    s.push_str("| rows used |");
    for col in &rep.columns {
        s.push_str(&format!(" {} |", col.n_used));
    }
    s.push('\n');
    s.push_str("| accuracy at 0.5 |");
    for col in &rep.columns {
        match col.accuracy {
            Some((_, acc)) => s.push_str(&format!(" {} |", fmt4(acc))),
            None => s.push_str(" — |"),
        }
    }
    s.push('\n');
    s.push_str(
        "\nSignificance: `***` p < 0.001, `**` p < 0.01, `*` p < 0.05, `.` p < 0.1.\n\
         Accuracy is the proportion of complete rows classified correctly at\n\
         the 0.5 probability cutoff.\n",
    );
    let notes: Vec<&String> = rep.columns.iter().flat_map(|c| c.notes.iter()).collect();
    if !notes.is_empty() {
        s.push_str("\nNotes:\n");
        for note in notes {
            s.push_str(&format!("- {note}\n"));
        }
    }
    if blockwise_note {
        s.push('\n');
        s.push_str(blockwise_ml_note());
    }
    s
}

/// The provenance record: tool version, resolved seed, wall time, and a
/// config echo sufficient to rerun the exact same job.
#[derive(Debug, Serialize)]
pub struct Metadata<C: Serialize> {
    pub version: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub config: C,
}

pub fn metadata_json<C: Serialize>(meta: &Metadata<C>) -> String {
    // Struct serialization keeps declared key order, so the layout is
    // stable; only `wall_time_secs` varies between identical runs.
    serde_json::to_string_pretty(meta).expect("metadata serializes") + "\n"
}

/// Simulate-mode metadata.
pub fn simulate_metadata(version: &str, seed: u64, wall: f64, config: ConfigFile) -> String {
    metadata_json(&Metadata { version: version.to_string(), seed, wall_time_secs: wall, config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use misslab_core::simlab::{run_monte_carlo, GenConfig, ScenarioSpec};

    #[test]
    fn six_significant_digits_with_trailing_zeros() {
        assert_eq!(sig6(-0.0040599951), "-0.00406000");
        assert_eq!(sig6(-0.00405999), "-0.00405999");
        assert_eq!(sig6(1.341), "1.34100");
        assert_eq!(sig6(5.6571), "5.65710");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(-0.0), "0.00000");
        assert_eq!(sig6(123.4567891), "123.457");
        assert_eq!(sig6(0.09999999), "0.100000");
        assert_eq!(sig6(-2.0), "-2.00000");
        assert_eq!(sig6(1234567.0), "1234567");
    }

    #[test]
    fn stars_follow_the_conventional_thresholds() {
        assert_eq!(stars(0.0001), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.07), ".");
        assert_eq!(stars(0.5), "");
        assert_eq!(stars(0.05), ".");
        assert_eq!(stars(0.001), "**");
    }

    fn small_report() -> McReport {
        let cfg = GenConfig { n: 60, ..GenConfig::default() };
        run_monte_carlo(&cfg, &ScenarioSpec::s1(), &Method::ALL[..2], 4, 9, 1).unwrap()
    }

    #[test]
    fn metrics_csv_round_trips_at_six_significant_digits() {
        let report = small_report();
        let csv = metrics_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "method,coefficient,bias,var,mse,n_fail");
        let mut rows = 0;
        for line in lines {
            let parts: Vec<&str> = line.split(',').collect();
            assert_eq!(parts.len(), 6);
            for v in &parts[2..5] {
                let x: f64 = v.parse().unwrap();
                assert!(x.is_finite());
            }
            let _: usize = parts[5].parse().unwrap();
            rows += 1;
        }
        assert_eq!(rows, 2 * 4);
        // Parsing back loses nothing beyond the sixth significant digit.
        let bias = report.metrics[0].bias[0];
        let printed: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert!((bias - printed).abs() <= 1e-5 * bias.abs().max(1e-5));
    }

    #[test]
    fn summary_mentions_the_ml_cc_equivalence_only_when_ml_runs() {
        let report = small_report();
        let with = simulate_summary_md(std::slice::from_ref(&report), &Method::ALL);
        assert!(with.contains("coincides with complete-case"));
        let without = simulate_summary_md(&[report], &Method::ALL[..2]);
        assert!(!without.contains("coincides with complete-case"));
    }

    #[test]
    fn fit_tables_carry_stars_and_accuracy() {
        let rep = FitReport {
            coef_names: vec!["intercept".into(), "x".into()],
            columns: vec![FitColumn {
                method: "CC".into(),
                beta: vec![-0.5, 2.0],
                se: vec![0.25, 0.4],
                wald_z: vec![-2.0, 5.0],
                p: vec![0.0455, 0.00000057],
                n_used: 120,
                accuracy: Some((120, 0.85)),
                notes: vec!["a notice".into()],
            }],
        };
        let csv = estimates_csv(&rep);
        assert!(csv.starts_with("method,coefficient,estimate,se,wald_z,p_value,stars,n_used\n"));
        assert!(csv.contains("CC,x,2.00000,0.400000,5.00000,"));
        assert!(csv.lines().nth(2).unwrap().contains("***"));
        let md = fit_summary_md(&rep, true);
        assert!(md.contains("2.0000*** (0.4000)"));
        assert!(md.contains("a notice"));
        assert!(md.contains("coincides with complete-case"));
        let acc = accuracy_csv(&rep);
        assert!(acc.contains("CC,120,0.850000"));
    }

    #[test]
    fn metadata_is_stable_apart_from_wall_time() {
        let cfg = ConfigFile::default();
        let a = simulate_metadata("1.0.0", 7, 1.25, cfg.clone());
        let b = simulate_metadata("1.0.0", 7, 99.0, cfg);
        let strip = |s: &str| -> String {
            s.lines().filter(|l| !l.contains("wall_time_secs")).collect::<Vec<_>>().join("\n")
        };
        assert_ne!(a, b);
        assert_eq!(strip(&a), strip(&b));
        assert!(a.contains("\"seed\": 7"));
    }
}
