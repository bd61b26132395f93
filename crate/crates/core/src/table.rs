//! In-memory data tables with explicit missing cells.
//!
//! A [`Table`] is a small column-typed rectangle: binary columns hold 0/1,
//! continuous columns hold finite reals, and any cell may be missing.
//! Missingness is part of the value (`Option<f64>`), with [`MissMask`]
//! available as a standalone snapshot for mechanism code and propensity
//! models. CSV I/O is deliberately strict: comma-separated, UTF-8, one
//! header row, `NA` as the only missing token, and per-kind token rules
//! that fail loudly with the offending position.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Missing-value token used in CSV files.
pub const NA_TOKEN: &str = "NA";

/// Declared kind of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// Cells are exactly 0 or 1.
    Binary,
    /// Cells are finite reals.
    Continuous,
}

/// Name and kind of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn binary(name: &str) -> Self {
        ColumnSpec { name: name.to_string(), kind: ColumnKind::Binary }
    }

    pub fn continuous(name: &str) -> Self {
        ColumnSpec { name: name.to_string(), kind: ColumnKind::Continuous }
    }
}

/// Errors from table construction and CSV I/O.
#[derive(Debug, Error)]
pub enum TableError {
    /// A cell token that does not parse under its column's kind.
    #[error("line {line}, column {column}: cannot parse {token:?} as {expected}")]
    Parse { line: usize, column: String, token: String, expected: &'static str },

    /// Header/shape problems: wrong column names, ragged rows, and the like.
    #[error("schema mismatch: {detail}")]
    Schema { detail: String },

    /// In-memory construction or mutation that violates the column kinds.
    #[error("invalid table: {detail}")]
    Invalid { detail: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Column-typed data rectangle with explicit missing cells, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<ColumnSpec>,
    cells: Vec<Option<f64>>,
    n_rows: usize,
}

impl Table {
    /// Builds a table from row-major cells, validating every present value
    /// against its column kind.
    pub fn new(columns: Vec<ColumnSpec>, cells: Vec<Option<f64>>) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::Invalid { detail: "a table needs at least one column".into() });
        }
        for (i, a) in columns.iter().enumerate() {
            if columns[..i].iter().any(|b| b.name == a.name) {
                return Err(TableError::Invalid {
                    detail: format!("duplicate column name {:?}", a.name),
                });
            }
        }
        if cells.len() % columns.len() != 0 {
            return Err(TableError::Invalid {
                detail: format!(
                    "{} cells do not fill whole rows of {} columns",
                    cells.len(),
                    columns.len()
                ),
            });
        }
        let n_rows = cells.len() / columns.len();
        let table = Table { columns, cells, n_rows };
        for r in 0..n_rows {
            for c in 0..table.columns.len() {
                if let Some(v) = table.get(r, c) {
                    table.check_value(c, v).map_err(|detail| TableError::Invalid { detail })?;
                }
            }
        }
        Ok(table)
    }

    fn check_value(&self, col: usize, v: f64) -> Result<(), String> {
        match self.columns[col].kind {
            ColumnKind::Binary if v != 0.0 && v != 1.0 => {
                Err(format!("binary column {:?} holds {v}", self.columns[col].name))
            }
            ColumnKind::Continuous if !v.is_finite() => {
                Err(format!("continuous column {:?} holds {v}", self.columns[col].name))
            }
            _ => Ok(()),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    /// Index of the column with the given name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Cell value; `None` marks a missing cell.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.columns.len() + col]
    }

    /// Overwrites a cell, enforcing the column kind for present values.
    pub(crate) fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        if let Some(v) = value {
            if let Err(detail) = self.check_value(col, v) {
                panic!("table cell update violates column kind: {detail}");
            }
        }
        self.cells[row * self.columns.len() + col] = value;
    }

    /// True when every cell of the row is present.
    pub fn row_complete(&self, row: usize) -> bool {
        (0..self.columns.len()).all(|c| self.get(row, c).is_some())
    }

    /// Indices of fully observed rows, in order.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows).filter(|&r| self.row_complete(r)).collect()
    }

    /// Number of missing cells in one column.
    pub fn col_missing(&self, col: usize) -> usize {
        (0..self.n_rows).filter(|&r| self.get(r, col).is_none()).count()
    }

    /// Total number of missing cells.
    pub fn n_missing(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// New table holding the given rows in order; repeats are allowed,
    /// which is exactly what a bootstrap resample needs.
    pub fn subset_rows(&self, rows: &[usize]) -> Table {
        let k = self.columns.len();
        let mut cells = Vec::with_capacity(rows.len() * k);
        for &r in rows {
            assert!(r < self.n_rows, "row index out of range");
            cells.extend_from_slice(&self.cells[r * k..(r + 1) * k]);
        }
        Table { columns: self.columns.clone(), cells, n_rows: rows.len() }
    }

    /// Snapshot of which cells are observed.
    pub fn mask(&self) -> MissMask {
        MissMask {
            observed: self.cells.iter().map(Option::is_some).collect(),
            n_rows: self.n_rows,
            n_cols: self.columns.len(),
        }
    }
}

/// Row-major observation indicators for a table.
#[derive(Debug, Clone, PartialEq)]
pub struct MissMask {
    observed: Vec<bool>,
    n_rows: usize,
    n_cols: usize,
}

impl MissMask {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.n_cols + col]
    }

    /// True when the whole row is observed.
    pub fn row_fully_observed(&self, row: usize) -> bool {
        (0..self.n_cols).all(|c| self.is_observed(row, c))
    }

    /// Number of missing cells across the mask.
    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    /// True when the mask mirrors the table's missing cells exactly.
    pub fn matches(&self, table: &Table) -> bool {
        table.n_rows() == self.n_rows
            && table.n_cols() == self.n_cols
            && (0..self.n_rows).all(|r| {
                (0..self.n_cols).all(|c| self.is_observed(r, c) == table.get(r, c).is_some())
            })
    }
}

/// Shape of a table's missingness.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternClass {
    /// No missing cells at all.
    Complete,
    /// Every incomplete row is missing the same block of columns;
    /// `observed` lists the complement — the columns present in every row.
    Blockwise { observed: Vec<String> },
    /// Anything else.
    General,
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternClass::Complete => write!(f, "complete"),
            PatternClass::Blockwise { observed } => {
                write!(f, "blockwise({})", observed.join(", "))
            }
            PatternClass::General => write!(f, "general"),
        }
    }
}

/// Classifies the missingness pattern of a table.
pub fn classify_pattern(table: &Table) -> PatternClass {
    let mut block: Option<Vec<usize>> = None;
    for r in 0..table.n_rows() {
        let missing: Vec<usize> =
            (0..table.n_cols()).filter(|&c| table.get(r, c).is_none()).collect();
        if missing.is_empty() {
            continue;
        }
        match &block {
            None => block = Some(missing),
            Some(b) if *b == missing => {}
            Some(_) => return PatternClass::General,
        }
    }
    match block {
        None => PatternClass::Complete,
        Some(b) => PatternClass::Blockwise {
            observed: (0..table.n_cols())
                .filter(|c| !b.contains(c))
                .map(|c| table.columns()[c].name.clone())
                .collect(),
        },
    }
}

fn format_cell(spec: &ColumnSpec, cell: Option<f64>) -> String {
    match cell {
        None => NA_TOKEN.to_string(),
        Some(v) => match spec.kind {
            ColumnKind::Binary => format!("{}", v as i64),
            // Shortest round-trip formatting, so load(write(t)) == t.
            ColumnKind::Continuous => format!("{v}"),
        },
    }
}

/// Writes a table as CSV: header row, then one line per data row.
pub fn write_csv(table: &Table, path: &Path) -> Result<(), TableError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    writeln!(out, "{}", header.join(","))?;
    for r in 0..table.n_rows() {
        let row: Vec<String> = (0..table.n_cols())
            .map(|c| format_cell(&table.columns()[c], table.get(r, c)))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell(
    spec: &ColumnSpec,
    token: &str,
    line: usize,
) -> Result<Option<f64>, TableError> {
    if token == NA_TOKEN {
        return Ok(None);
    }
    let err = |expected| TableError::Parse {
        line,
        column: spec.name.clone(),
        token: token.to_string(),
        expected,
    };
    match spec.kind {
        ColumnKind::Binary => match token {
            "0" => Ok(Some(0.0)),
            "1" => Ok(Some(1.0)),
            _ => Err(err("a binary value (0, 1, or NA)")),
        },
        ColumnKind::Continuous => {
            let v: f64 = token.parse().map_err(|_| err("a real number or NA"))?;
            if !v.is_finite() {
                return Err(err("a finite real number"));
            }
            Ok(Some(v))
        }
    }
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), TableError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| TableError::Schema { detail: "file is empty".into() })?;
    let names: Vec<String> = header.split(',').map(|t| t.trim().to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|t| t.trim().to_string()).collect());
    }
    Ok((names, rows))
}

/// Loads a CSV file against a declared schema.
///
/// The header must list exactly the schema's column names in order, every
/// row must have one token per column, and tokens must obey the column
/// kind (`0`/`1`/`NA` for binary; a finite real or `NA` for continuous).
pub fn load_csv(path: &Path, schema: &[ColumnSpec]) -> Result<Table, TableError> {
    let (names, rows) = read_rows(path)?;
    let expected: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
    if names != expected {
        return Err(TableError::Schema {
            detail: format!("header is [{}], expected [{}]", names.join(", "), expected.join(", ")),
        });
    }
    let mut cells = Vec::with_capacity(rows.len() * schema.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2; // 1-based, after the header
        if row.len() != schema.len() {
            return Err(TableError::Schema {
                detail: format!("line {line} has {} fields, expected {}", row.len(), schema.len()),
            });
        }
        for (spec, token) in schema.iter().zip(row) {
            cells.push(parse_cell(spec, token, line)?);
        }
    }
    Table::new(schema.to_vec(), cells)
}

/// Infers a schema from a CSV file: a column whose observed tokens are all
/// `0`/`1` is binary, anything else parseable is continuous.
///
/// A column with no observed values has no inferable kind and is an error.
pub fn infer_schema(path: &Path) -> Result<Vec<ColumnSpec>, TableError> {
    let (names, rows) = read_rows(path)?;
    for (i, a) in names.iter().enumerate() {
        if a.is_empty() {
            return Err(TableError::Schema { detail: format!("column {} has an empty name", i + 1) });
        }
        if names[..i].contains(a) {
            return Err(TableError::Schema { detail: format!("duplicate column name {a:?}") });
        }
    }
    let mut kinds = Vec::with_capacity(names.len());
    for (c, name) in names.iter().enumerate() {
        let mut any = false;
        let mut binary = true;
        for (i, row) in rows.iter().enumerate() {
            let token = row.get(c).ok_or_else(|| TableError::Schema {
                detail: format!("line {} has {} fields, expected {}", i + 2, row.len(), names.len()),
            })?;
            if token == NA_TOKEN {
                continue;
            }
            any = true;
            if token != "0" && token != "1" {
                binary = false;
            }
        }
        if !any {
            return Err(TableError::Schema {
                detail: format!("column {name:?} has no observed values; its kind cannot be inferred"),
            });
        }
        kinds.push(ColumnSpec {
            name: name.clone(),
            kind: if binary { ColumnKind::Binary } else { ColumnKind::Continuous },
        });
    }
    Ok(kinds)
}
