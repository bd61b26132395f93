//! Missingness mechanisms and seeded injection.
//!
//! A [`MechanismSpec`] says *why* cells go missing: MCAR (probability free
//! of all data), MAR (probability driven by an always-observed column), or
//! NMAR (probability driven by a value that is itself about to be deleted —
//! provided for stress tests only). [`inject_missing`] applies a mechanism
//! blockwise, the design used throughout the simulation study: one coin per
//! row decides whether *all* target cells vanish together. Per-column
//! independent injection exists for NMAR stress tests under
//! [`inject_missing_per_column`].

use rand::Rng;

use crate::glm::logistic_prob;
use crate::stream::StreamKey;
use crate::table::{MissMask, Table, TableError};

/// Taxonomy of missingness mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingnessKind {
    Mcar,
    Mar,
    Nmar,
}

/// Map from a driving value to a missingness probability.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilityMap {
    /// The same probability for every row.
    Constant(f64),
    /// `p(v) = when_one·v + when_zero·(1 − v)` for a binary driver — the
    /// study's p4 form.
    BinarySplit { when_one: f64, when_zero: f64 },
    /// `p(v) = logistic(intercept + slope·v)` for a real-valued driver.
    Logistic { intercept: f64, slope: f64 },
}

impl ProbabilityMap {
    /// Missingness probability for one driving value.
    pub fn prob(&self, v: f64) -> f64 {
        match *self {
            ProbabilityMap::Constant(r) => r,
            ProbabilityMap::BinarySplit { when_one, when_zero } => {
                if v == 1.0 {
                    when_one
                } else {
                    when_zero
                }
            }
            ProbabilityMap::Logistic { intercept, slope } => logistic_prob(intercept + slope * v),
        }
    }

    fn validate(&self) -> Result<(), TableError> {
        let check = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(TableError::Invalid {
                    detail: format!("missingness probability {what} = {p} is outside [0, 1]"),
                })
            }
        };
        match *self {
            ProbabilityMap::Constant(r) => check(r, "rate"),
            ProbabilityMap::BinarySplit { when_one, when_zero } => {
                check(when_one, "when_one").and_then(|()| check(when_zero, "when_zero"))
            }
            // The logistic link maps into (0,1) by construction.
            ProbabilityMap::Logistic { .. } => Ok(()),
        }
    }
}

/// A missingness mechanism: kind, optional driving column, probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    pub kind: MissingnessKind,
    /// Conditioning column for MAR; `None` for MCAR and NMAR (NMAR drives
    /// off the first target column's pre-deletion value).
    pub driver: Option<String>,
    pub prob: ProbabilityMap,
}

impl MechanismSpec {
    /// Missing completely at random, at a fixed rate.
    pub fn mcar(rate: f64) -> Self {
        MechanismSpec {
            kind: MissingnessKind::Mcar,
            driver: None,
            prob: ProbabilityMap::Constant(rate),
        }
    }

    /// Missing at random given an observed driver.
    pub fn mar(driver: &str, prob: ProbabilityMap) -> Self {
        MechanismSpec { kind: MissingnessKind::Mar, driver: Some(driver.to_string()), prob }
    }

    /// Not missing at random: the probability depends on the first target
    /// column's own pre-deletion value.
    pub fn nmar(prob: ProbabilityMap) -> Self {
        MechanismSpec { kind: MissingnessKind::Nmar, driver: None, prob }
    }
}

struct InjectionPlan {
    driver_col: Option<usize>,
    target_cols: Vec<usize>,
}

fn plan(table: &Table, mech: &MechanismSpec, targets: &[&str]) -> Result<InjectionPlan, TableError> {
    mech.prob.validate()?;
    if targets.is_empty() {
        return Err(TableError::Invalid { detail: "no target columns given".into() });
    }
    let mut target_cols = Vec::with_capacity(targets.len());
    for name in targets {
        let col = table.column(name).ok_or_else(|| TableError::Invalid {
            detail: format!("target column {name:?} does not exist"),
        })?;
        if target_cols.contains(&col) {
            return Err(TableError::Invalid {
                detail: format!("target column {name:?} listed twice"),
            });
        }
        target_cols.push(col);
    }
    let driver_col = match (mech.kind, &mech.driver) {
        (MissingnessKind::Mar, Some(name)) => {
            let col = table.column(name).ok_or_else(|| TableError::Invalid {
                detail: format!("driver column {name:?} does not exist"),
            })?;
            if target_cols.contains(&col) {
                return Err(TableError::Invalid {
                    detail: format!("driver column {name:?} is also a target"),
                });
            }
            if table.col_missing(col) > 0 {
                return Err(TableError::Invalid {
                    detail: format!("driver column {name:?} has missing cells"),
                });
            }
            Some(col)
        }
        (MissingnessKind::Mar, None) => {
            return Err(TableError::Invalid { detail: "MAR mechanism needs a driver column".into() })
        }
        (MissingnessKind::Mcar | MissingnessKind::Nmar, Some(name)) => {
            return Err(TableError::Invalid {
                detail: format!("{:?} mechanism must not name a driver ({name:?})", mech.kind),
            });
        }
        (MissingnessKind::Mcar | MissingnessKind::Nmar, None) => None,
    };
    Ok(InjectionPlan { driver_col, target_cols })
}

/// The value feeding the probability map for one row, `None` when NMAR's
/// driving cell is itself already missing.
fn driving_value(
    table: &Table,
    plan: &InjectionPlan,
    kind: MissingnessKind,
    row: usize,
) -> Option<f64> {
    match kind {
        MissingnessKind::Mcar => Some(0.0),
        MissingnessKind::Mar => table.get(row, plan.driver_col.expect("validated")),
        MissingnessKind::Nmar => table.get(row, plan.target_cols[0]),
    }
}

/// Blockwise injection: per row, one coin with probability
/// `prob(driving value)` deletes every target cell jointly.
///
/// Deterministic given the key; observed cells are never altered, only
/// deleted. Returns the thinned table with its missingness mask.
pub fn inject_missing(
    table: &Table,
    mech: &MechanismSpec,
    targets: &[&str],
    key: StreamKey,
) -> Result<(Table, MissMask), TableError> {
    let plan = plan(table, mech, targets)?;
    let mut rng = key.rng();
    let mut out = table.clone();
    for r in 0..table.n_rows() {
        // Always consume one uniform per row, so the stream position does
        // not depend on the probability values.
        let u: f64 = rng.random();
        let Some(v) = driving_value(table, &plan, mech.kind, r) else {
            continue;
        };
        if u < mech.prob.prob(v) {
            for &c in &plan.target_cols {
                out.set(r, c, None);
            }
        }
    }
    let mask = out.mask();
    debug_assert!(mask.matches(&out));
    Ok((out, mask))
}

/// Per-column independent injection: each (row, target) pair gets its own
/// coin. This breaks the blockwise pattern on purpose; it exists for NMAR
/// stress tests, not for the simulation study.
pub fn inject_missing_per_column(
    table: &Table,
    mech: &MechanismSpec,
    targets: &[&str],
    key: StreamKey,
) -> Result<(Table, MissMask), TableError> {
    let plan = plan(table, mech, targets)?;
    let mut rng = key.rng();
    let mut out = table.clone();
    for r in 0..table.n_rows() {
        for &c in &plan.target_cols {
            let u: f64 = rng.random();
            let v = match mech.kind {
                // NMAR drives each column off its own pre-deletion value.
                MissingnessKind::Nmar => table.get(r, c),
                _ => driving_value(table, &plan, mech.kind, r),
            };
            if let Some(v) = v {
                if u < mech.prob.prob(v) {
                    out.set(r, c, None);
                }
            }
        }
    }
    let mask = out.mask();
    debug_assert!(mask.matches(&out));
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{classify_pattern, ColumnSpec, PatternClass};

    /// Complete table: binary z alternating, continuous z2, binary y.
    fn demo(n: usize) -> Table {
        let mut cells = Vec::with_capacity(n * 3);
        for i in 0..n {
            cells.push(Some((i % 2) as f64));
            cells.push(Some(10.0 + i as f64));
            cells.push(Some(((i / 2) % 2) as f64));
        }
        Table::new(
            vec![
                ColumnSpec::binary("z"),
                ColumnSpec::continuous("z2"),
                ColumnSpec::binary("y"),
            ],
            cells,
        )
        .unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let t = demo(40);
        let (out, mask) = inject_missing(
            &t,
            &MechanismSpec::mcar(0.0),
            &["z2", "y"],
            StreamKey::root(5),
        )
        .unwrap();
        assert_eq!(out, t);
        assert_eq!(mask.n_missing(), 0);
    }

    #[test]
    fn injection_is_blockwise_and_mask_consistent() {
        let t = demo(400);
        let mech = MechanismSpec::mar(
            "z",
            ProbabilityMap::BinarySplit { when_one: 0.65, when_zero: 0.05 },
        );
        let (out, mask) = inject_missing(&t, &mech, &["z2", "y"], StreamKey::root(11)).unwrap();
        assert!(mask.matches(&out));
        assert!(mask.n_missing() > 0);
        assert_eq!(
            classify_pattern(&out),
            PatternClass::Blockwise { observed: vec!["z".into()] }
        );
        // Observed cells are exactly the source values, position-preserved.
        for r in 0..out.n_rows() {
            for c in 0..out.n_cols() {
                if let Some(v) = out.get(r, c) {
                    assert_eq!(Some(v), t.get(r, c));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let t = demo(200);
        let mech = MechanismSpec::mcar(0.3);
        let key = StreamKey::root(77);
        let (a, _) = inject_missing(&t, &mech, &["y"], key).unwrap();
        let (b, _) = inject_missing(&t, &mech, &["y"], key).unwrap();
        assert_eq!(a, b);
        let (c, _) = inject_missing(&t, &mech, &["y"], StreamKey::root(78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn binary_split_rates_track_the_driver() {
        // Deterministic extremes: z=1 rows always deleted, z=0 never.
        let t = demo(100);
        let mech = MechanismSpec::mar(
            "z",
            ProbabilityMap::BinarySplit { when_one: 1.0, when_zero: 0.0 },
        );
        let (out, _) = inject_missing(&t, &mech, &["z2", "y"], StreamKey::root(3)).unwrap();
        for r in 0..out.n_rows() {
            let z = out.get(r, 0).unwrap();
            assert_eq!(out.get(r, 1).is_none(), z == 1.0);
            assert_eq!(out.get(r, 2).is_none(), z == 1.0);
        }
    }

    #[test]
    fn large_n_rate_matches_the_law_of_large_numbers() {
        let t = demo(100_000);
        let (out, mask) =
            inject_missing(&t, &MechanismSpec::mcar(0.09), &["z2", "y"], StreamKey::root(2024))
                .unwrap();
        let blockwise_missing =
            (0..out.n_rows()).filter(|&r| !mask.row_fully_observed(r)).count();
        let rate = blockwise_missing as f64 / out.n_rows() as f64;
        assert!((rate - 0.09).abs() < 0.005, "empirical rate {rate}");
    }

    #[test]
    fn nmar_drives_on_the_deleted_value() {
        // Strongly negative intercept plus huge slope: rows whose y = 1
        // are near-surely deleted, rows with y = 0 near-surely kept.
        let t = demo(2000);
        let mech = MechanismSpec::nmar(ProbabilityMap::Logistic { intercept: -15.0, slope: 30.0 });
        let (out, _) = inject_missing(&t, &mech, &["y"], StreamKey::root(9)).unwrap();
        let mut deleted_ones = 0;
        let mut kept_ones = 0;
        for r in 0..t.n_rows() {
            let was_one = t.get(r, 2).unwrap() == 1.0;
            match (was_one, out.get(r, 2).is_none()) {
                (true, true) => deleted_ones += 1,
                (true, false) => kept_ones += 1,
                (false, true) => panic!("row with y=0 deleted under the NMAR map"),
                (false, false) => {}
            }
        }
        assert!(deleted_ones > 900);
        assert_eq!(kept_ones + deleted_ones, 1000);
    }

    #[test]
    fn per_column_injection_breaks_the_block() {
        let t = demo(3000);
        let mech = MechanismSpec::mcar(0.4);
        let (out, _) =
            inject_missing_per_column(&t, &mech, &["z2", "y"], StreamKey::root(31)).unwrap();
        assert_eq!(classify_pattern(&out), PatternClass::General);
    }

    #[test]
    fn bad_specifications_are_rejected() {
        let t = demo(10);
        let key = StreamKey::root(1);
        // Probability out of range.
        assert!(inject_missing(&t, &MechanismSpec::mcar(1.5), &["y"], key).is_err());
        // Unknown target.
        assert!(inject_missing(&t, &MechanismSpec::mcar(0.1), &["nope"], key).is_err());
        // Driver overlaps targets.
        let mech = MechanismSpec::mar("y", ProbabilityMap::Constant(0.1));
        assert!(inject_missing(&t, &mech, &["z2", "y"], key).is_err());
        // Driver with missing cells.
        let (thinned, _) =
            inject_missing(&t, &MechanismSpec::mcar(0.5), &["z"], key).unwrap();
        let mech = MechanismSpec::mar("z", ProbabilityMap::Constant(0.1));
        assert!(inject_missing(&thinned, &mech, &["y"], key).is_err());
    }
}
