//! CSV ingestion, quantile discretization, holdout split and partitioning.

use std::collections::BTreeSet;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Role, VariableSpec};

/// Values treated as missing in ingested CSV cells.
const MISSING: [&str; 4] = ["", "?", "NA", "NaN"];

/// Integer columns with at most this many distinct values are inferred discrete.
pub const DISCRETE_CARDINALITY: usize = 32;

fn is_missing(cell: &str) -> bool {
    MISSING.contains(&cell.trim())
}

/// A CSV file as strings, header first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = csv
            .headers()
            .map_err(|e| Error::Data(format!("unreadable CSV header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, record) in csv.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("CSV row {}: {e}", i + 1)))?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "CSV row {} has {} fields, header has {}",
                    i + 1,
                    record.len(),
                    headers.len()
                )));
            }
            rows.push(record.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(RawTable { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Lower empirical `i/bins` quantiles (`i = 1..bins-1`) of `values`, deduplicated.
///
/// Boundary `i` is the inclusive upper edge of bin `i`, so the bins hold
/// `ceil((i+1)n/bins) - ceil(i n/bins)` points each when values are distinct.
pub fn quantile_boundaries(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() || bins < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<f64> = Vec::with_capacity(bins - 1);
    for i in 1..bins {
        let rank = (i * n).div_ceil(bins).max(1) - 1;
        let q = sorted[rank];
        if out.last().is_none_or(|&last| q > last) {
            out.push(q);
        }
    }
    // A boundary at the maximum would leave the top bin empty.
    if out.last() == sorted.last() {
        out.pop();
    }
    out
}

/// Index of the first boundary not below `value`, or the top bin.
pub fn bin_index(boundaries: &[f64], value: f64) -> usize {
    boundaries.partition_point(|&b| b < value)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Numerical { boundaries: Vec<f64> },
    Categorical { levels: Vec<String> },
}

/// How one kept CSV column maps to the states of one model variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub name: String,
    pub kind: ColumnKind,
    /// Whether the last state is reserved for missing or unseen values.
    pub missing_state: bool,
    pub role: Role,
}

impl ColumnMap {
    pub fn arity(&self) -> usize {
        let base = match &self.kind {
            ColumnKind::Numerical { boundaries } => boundaries.len() + 1,
            ColumnKind::Categorical { levels } => levels.len(),
        };
        base + usize::from(self.missing_state)
    }

    pub fn spec(&self) -> VariableSpec {
        VariableSpec::new(self.name.clone(), self.arity(), self.role)
    }

    pub fn state(&self, cell: &str) -> Result<usize> {
        let fallback = || {
            if self.missing_state {
                Ok(self.arity() - 1)
            } else {
                Err(Error::Data(format!(
                    "column {}: no state for value {cell:?}",
                    self.name
                )))
            }
        };
        if is_missing(cell) {
            return fallback();
        }
        match &self.kind {
            ColumnKind::Numerical { boundaries } => match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(bin_index(boundaries, v)),
                _ => fallback(),
            },
            ColumnKind::Categorical { levels } => match levels.iter().position(|l| l == cell) {
                Some(i) => Ok(i),
                None => fallback(),
            },
        }
    }
}

/// Column handling options taken from the experiment config.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnOptions {
    pub label: String,
    pub numerical: Vec<String>,
    pub discrete: Vec<String>,
}

/// Discretization of every kept column, in CSV order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationMap {
    pub columns: Vec<ColumnMap>,
    /// CSV index of each kept column.
    pub source: Vec<usize>,
}

fn infer_numerical(values: &[&str]) -> bool {
    let present: Vec<&str> = values.iter().copied().filter(|c| !is_missing(c)).collect();
    if present.iter().any(|c| c.parse::<f64>().is_err()) {
        return false;
    }
    let all_int = present.iter().all(|c| c.parse::<i64>().is_ok());
    if !all_int {
        return true;
    }
    let distinct: BTreeSet<&str> = present.into_iter().collect();
    distinct.len() > DISCRETE_CARDINALITY
}

fn sorted_levels(values: &[&str]) -> Vec<String> {
    let distinct: BTreeSet<&str> = values.iter().copied().filter(|c| !is_missing(c)).collect();
    let mut levels: Vec<String> = distinct.into_iter().map(str::to_string).collect();
    if levels.iter().all(|l| l.parse::<i64>().is_ok()) {
        levels.sort_by_key(|l| l.parse::<i64>().expect("checked integer"));
    }
    levels
}

impl DiscretizationMap {
    /// Numerical boundaries come from the holdout rows; categorical levels
    /// and missing-value states from the whole table. Columns that collapse
    /// to a single state are dropped.
    pub fn build(table: &RawTable, holdout: &[usize], bins: usize, options: &ColumnOptions) -> Result<Self> {
        if holdout.is_empty() {
            return Err(Error::Empty("holdout"));
        }
        if bins < 2 {
            return Err(Error::Config(format!("bins must be at least 2, got {bins}")));
        }
        let label = table
            .column_index(&options.label)
            .ok_or_else(|| Error::Data(format!("label column {:?} not found", options.label)))?;
        for name in options.numerical.iter().chain(&options.discrete) {
            if table.column_index(name).is_none() {
                return Err(Error::Data(format!("configured column {name:?} not found")));
            }
        }

        let mut columns = Vec::new();
        let mut source = Vec::new();
        for (c, name) in table.headers.iter().enumerate() {
            let all: Vec<&str> = table.rows.iter().map(|r| r[c].as_str()).collect();
            let missing_state = all.iter().any(|v| is_missing(v));
            let numerical = if c == label || options.discrete.contains(name) {
                false
            } else {
                options.numerical.contains(name) || infer_numerical(&all)
            };
            let kind = if numerical {
                let values: Vec<f64> = holdout
                    .iter()
                    .filter_map(|&i| table.rows[i][c].parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .collect();
                ColumnKind::Numerical {
                    boundaries: quantile_boundaries(&values, bins),
                }
            } else {
                ColumnKind::Categorical {
                    levels: sorted_levels(&all),
                }
            };
            let role = if c == label { Role::Label } else { Role::Feature };
            let map = ColumnMap {
                name: sanitize(name),
                kind,
                missing_state,
                role,
            };
            if map.arity() < 2 {
                if c == label {
                    return Err(Error::Data(format!("label column {name:?} has fewer than 2 states")));
                }
                continue;
            }
            columns.push(map);
            source.push(c);
        }
        if columns.len() < 2 {
            return Err(Error::Data("fewer than 2 informative columns".into()));
        }
        Ok(DiscretizationMap { columns, source })
    }

    pub fn specs(&self) -> Vec<VariableSpec> {
        self.columns.iter().map(ColumnMap::spec).collect()
    }

    pub fn apply_row(&self, row: &[String]) -> Result<Vec<usize>> {
        self.columns
            .iter()
            .zip(&self.source)
            .map(|(col, &c)| col.state(&row[c]))
            .collect()
    }

    pub fn apply(&self, table: &RawTable) -> Result<Vec<Vec<usize>>> {
        for (col, &c) in self.columns.iter().zip(&self.source) {
            if table.headers.get(c).map(|h| sanitize(h)) != Some(col.name.clone()) {
                return Err(Error::Data(format!("column {} not at CSV position {c}", col.name)));
            }
        }
        table.rows.iter().map(|r| self.apply_row(r)).collect()
    }

    /// One `column` line per kept column:
    /// `column <name> <csv index> numerical|categorical <missing 0|1> <values...>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (col, &c) in self.columns.iter().zip(&self.source) {
            let (kind, values): (&str, Vec<String>) = match &col.kind {
                ColumnKind::Numerical { boundaries } => {
                    ("numerical", boundaries.iter().map(|b| format!("{b:?}")).collect())
                }
                ColumnKind::Categorical { levels } => ("categorical", levels.iter().map(|l| escape(l)).collect()),
            };
            out.push_str(&format!(
                "column {} {} {} {} {}",
                col.name,
                c,
                kind,
                u8::from(col.missing_state),
                col.role.as_str()
            ));
            for v in values {
                out.push(' ');
                out.push_str(&v);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the `column` lines of `text`, ignoring every other line.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        let mut source = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.first() != Some(&"column") {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            if tokens.len() < 6 {
                return Err(err(format!("short column line {line:?}")));
            }
            let c: usize = tokens[2].parse().map_err(|e| err(format!("bad column index: {e}")))?;
            let missing_state = match tokens[4] {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("bad missing flag {other:?}"))),
            };
            let role: Role = tokens[5].parse().map_err(|e: Error| err(e.to_string()))?;
            let values = &tokens[6..];
            let kind = match tokens[3] {
                "numerical" => ColumnKind::Numerical {
                    boundaries: values
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|e| err(format!("bad boundary {v:?}: {e}"))))
                        .collect::<Result<_>>()?,
                },
                "categorical" => ColumnKind::Categorical {
                    levels: values.iter().map(|v| unescape(v)).collect(),
                },
                other => return Err(err(format!("unknown column kind {other:?}"))),
            };
            columns.push(ColumnMap {
                name: tokens[1].to_string(),
                kind,
                missing_state,
                role,
            });
            source.push(c);
        }
        Ok(DiscretizationMap { columns, source })
    }
}

/// Replaces whitespace so names fit the whitespace-separated structure format.
pub fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|ch| if ch.is_whitespace() { '_' } else { ch })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn escape(level: &str) -> String {
    level.replace('%', "%25").replace(' ', "%20").replace('\t', "%09")
}

fn unescape(token: &str) -> String {
    token.replace("%20", " ").replace("%09", "\t").replace("%25", "%")
}

/// Seeded uniform holdout sample; the remainder keeps the original order.
pub fn split_holdout<T: Clone>(rows: &[T], holdout_size: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (h, s) = split_holdout_indices(rows.len(), holdout_size, seed)?;
    Ok((
        h.into_iter().map(|i| rows[i].clone()).collect(),
        s.into_iter().map(|i| rows[i].clone()).collect(),
    ))
}

/// Index form of [`split_holdout`]. Both lists are ascending.
pub fn split_holdout_indices(n: usize, holdout_size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n <= holdout_size {
        return Err(Error::Data(format!(
            "dataset of {n} rows is not larger than the holdout size {holdout_size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holdout = rand::seq::index::sample(&mut rng, n, holdout_size).into_vec();
    holdout.sort_unstable();
    let mut in_holdout = vec![false; n];
    for &i in &holdout {
        in_holdout[i] = true;
    }
    let stream = (0..n).filter(|&i| !in_holdout[i]).collect();
    Ok((holdout, stream))
}

/// Seeded shuffle, then round-robin assignment to `m` learners.
pub fn partition_horizontal<T: Clone>(stream: &[T], m: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if m == 0 {
        return Err(Error::Config("at least one learner is required".into()));
    }
    let mut order: Vec<usize> = (0..stream.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = vec![Vec::with_capacity(stream.len() / m + 1); m];
    for (pos, &i) in order.iter().enumerate() {
        parts[pos % m].push(stream[i].clone());
    }
    Ok(parts)
}
