//! Panel time-series datasets: N replicate series of m variables over a shared time grid.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },
    #[error("{path}: bad header: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("{path}:{line}: missing value in column `{column}`")]
    MissingCell {
        path: PathBuf,
        line: u64,
        column: String,
    },
    #[error("{path}:{line}: cannot parse `{raw}` in column `{column}` as a number")]
    NonNumeric {
        path: PathBuf,
        line: u64,
        column: String,
        raw: String,
    },
    #[error("{path}:{line}: duplicate row for series `{series}` at time {time}")]
    DuplicateRow {
        path: PathBuf,
        line: u64,
        series: String,
        time: String,
    },
    #[error("{path}: series `{series}` has {found} time points but `{reference}` has {expected} (or their grids differ)")]
    RaggedSeries {
        path: PathBuf,
        series: String,
        reference: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: time stamps do not form an arithmetic grid")]
    IrregularGrid { path: PathBuf },
    #[error("invalid panel: {0}")]
    Invalid(String),
}

/// An ordered set of variable indices in canonical (ascending, duplicate-free) form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableSet(Vec<usize>);

impl VariableSet {
    pub fn new<I: IntoIterator<Item = usize>>(members: I) -> Self {
        let mut v: Vec<usize> = members.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        VariableSet(v)
    }

    pub fn empty() -> Self {
        VariableSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn with(&self, v: usize) -> Self {
        let mut out = self.clone();
        if let Err(pos) = out.0.binary_search(&v) {
            out.0.insert(pos, v);
        }
        out
    }

    pub fn without(&self, v: usize) -> Self {
        VariableSet(self.0.iter().copied().filter(|&x| x != v).collect())
    }

    pub fn is_superset_of(&self, other: &VariableSet) -> bool {
        other.iter().all(|v| self.contains(v))
    }

    /// All subsets with at most `max_size` members, ordered by size and then
    /// lexicographically. The empty set comes first.
    pub fn subsets_up_to(&self, max_size: usize) -> Vec<VariableSet> {
        let cap = max_size.min(self.len());
        let mut out = Vec::new();
        for k in 0..=cap {
            combinations(&self.0, k, &mut |c| out.push(VariableSet(c.to_vec())));
        }
        out
    }

    /// Subsets with at most `max_size` members that contain `v`, in the same
    /// canonical order as [`VariableSet::subsets_up_to`].
    pub fn subsets_containing(&self, v: usize, max_size: usize) -> Vec<VariableSet> {
        if !self.contains(v) || max_size == 0 {
            return Vec::new();
        }
        let mut out: Vec<VariableSet> = self
            .without(v)
            .subsets_up_to(max_size - 1)
            .into_iter()
            .map(|s| s.with(v))
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

fn combinations(items: &[usize], k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        let need = k - cur.len();
        if items.len() < start + need {
            return;
        }
        for idx in start..=items.len() - need {
            cur.push(items[idx]);
            rec(items, k, idx + 1, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(k);
    rec(items, k, 0, &mut cur, f);
}

impl fmt::Display for VariableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<usize> for VariableSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        VariableSet::new(iter)
    }
}

/// N replicate series, each with `n_timesteps` observations of `n_vars` variables.
///
/// Values are stored replicate-major, then time, then variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    values: Vec<f64>,
    variable_names: Vec<String>,
    series_ids: Vec<String>,
    times: Vec<f64>,
    n_replicates: usize,
    n_timesteps: usize,
    n_vars: usize,
}

impl PanelData {
    /// Builds a panel from replicate-major values with default names (`X0`, `X1`, ...),
    /// series ids `0..N` and time stamps `0..T+1`.
    pub fn new(
        values: Vec<f64>,
        n_replicates: usize,
        n_timesteps: usize,
        n_vars: usize,
    ) -> Result<Self, DataError> {
        let names = (0..n_vars).map(|i| format!("X{i}")).collect();
        let ids = (0..n_replicates).map(|n| n.to_string()).collect();
        let times = (0..n_timesteps).map(|t| t as f64).collect();
        Self::with_labels(values, n_replicates, n_timesteps, names, ids, times)
    }

    pub fn with_labels(
        values: Vec<f64>,
        n_replicates: usize,
        n_timesteps: usize,
        variable_names: Vec<String>,
        series_ids: Vec<String>,
        times: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n_vars = variable_names.len();
        if n_replicates == 0 || n_timesteps == 0 || n_vars == 0 {
            return Err(DataError::Invalid(format!(
                "all dimensions must be >= 1 (N={n_replicates}, T+1={n_timesteps}, m={n_vars})"
            )));
        }
        if n_replicates * (n_timesteps - 1) < 1 {
            return Err(DataError::Invalid(
                "need at least one (t, t+1) transition".to_string(),
            ));
        }
        if values.len() != n_replicates * n_timesteps * n_vars {
            return Err(DataError::Invalid(format!(
                "expected {} values, got {}",
                n_replicates * n_timesteps * n_vars,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!("non-finite value at flat index {pos}")));
        }
        let mut seen = HashSet::new();
        for name in &variable_names {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(DataError::Invalid(format!(
                    "variable names must be unique and nonempty (offending: `{name}`)"
                )));
            }
        }
        if series_ids.len() != n_replicates || times.len() != n_timesteps {
            return Err(DataError::Invalid("label lengths do not match dimensions".into()));
        }
        Ok(PanelData {
            values,
            variable_names,
            series_ids,
            times,
            n_replicates,
            n_timesteps,
            n_vars,
        })
    }

    pub fn n_replicates(&self) -> usize {
        self.n_replicates
    }

    /// Number of time points per replicate (T+1).
    pub fn n_timesteps(&self) -> usize {
        self.n_timesteps
    }

    /// Number of transitions per replicate (T).
    pub fn n_transitions(&self) -> usize {
        self.n_timesteps - 1
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn series_ids(&self) -> &[String] {
        &self.series_ids
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[inline]
    pub fn get(&self, replicate: usize, time: usize, var: usize) -> f64 {
        self.values[(replicate * self.n_timesteps + time) * self.n_vars + var]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["series_id".to_string(), "time".to_string()];
        header.extend(self.variable_names.iter().cloned());
        wtr.write_record(&header)?;
        let mut row = Vec::with_capacity(self.n_vars + 2);
        for n in 0..self.n_replicates {
            for t in 0..self.n_timesteps {
                row.clear();
                row.push(self.series_ids[n].clone());
                row.push(format!("{}", self.times[t]));
                for i in 0..self.n_vars {
                    row.push(format!("{}", self.get(n, t, i)));
                }
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|source| DataError::Csv {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Loads a long-format CSV: `series_id,time,<var_1>,...,<var_m>`.
///
/// Replicates are ordered by series id (numerically when every id is an
/// integer, lexicographically otherwise) and each replicate by time.
pub fn load_panel(path: &Path) -> Result<PanelData, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(std::io::BufReader::new(file), path)
}

pub fn read_panel<R: Read>(reader: R, path: &Path) -> Result<PanelData, DataError> {
    let p = || path.to_path_buf();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|source| DataError::Csv { path: p(), source })?
        .clone();
    if header.len() < 3 {
        return Err(DataError::BadHeader {
            path: p(),
            reason: "expected `series_id,time,<var_1>,...`".into(),
        });
    }
    if &header[0] != "series_id" || &header[1] != "time" {
        return Err(DataError::BadHeader {
            path: p(),
            reason: format!("first columns must be `series_id,time`, got `{},{}`", &header[0], &header[1]),
        });
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for name in &names {
        if name.is_empty() || !seen.insert(name.as_str()) {
            return Err(DataError::BadHeader {
                path: p(),
                reason: format!("variable names must be unique and nonempty (`{name}`)"),
            });
        }
    }
    let m = names.len();

    // series id -> (time -> (line, row values))
    let mut series: HashMap<String, BTreeMap<TimeKey, (String, Vec<f64>)>> = HashMap::new();
    let mut n_rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|source| DataError::Csv { path: p(), source })?;
        let line = rec.position().map_or(0, |pos| pos.line());
        n_rows += 1;
        let cell = |k: usize| -> Result<&str, DataError> {
            match rec.get(k) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(DataError::MissingCell {
                    path: p(),
                    line,
                    column: header[k].to_string(),
                }),
            }
        };
        let sid = cell(0)?.to_string();
        let time_raw = cell(1)?.to_string();
        let time: f64 = parse_number(&time_raw).ok_or_else(|| DataError::NonNumeric {
            path: p(),
            line,
            column: "time".into(),
            raw: time_raw.clone(),
        })?;
        let mut row = Vec::with_capacity(m);
        for k in 2..2 + m {
            let raw = cell(k)?;
            let v = parse_number(raw).ok_or_else(|| DataError::NonNumeric {
                path: p(),
                line,
                column: header[k].to_string(),
                raw: raw.to_string(),
            })?;
            if v.is_nan() {
                return Err(DataError::MissingCell {
                    path: p(),
                    line,
                    column: header[k].to_string(),
                });
            }
            if !v.is_finite() {
                return Err(DataError::NonNumeric {
                    path: p(),
                    line,
                    column: header[k].to_string(),
                    raw: raw.to_string(),
                });
            }
            row.push(v);
        }
        let entry = series.entry(sid.clone()).or_default();
        if entry.insert(TimeKey(time), (time_raw.clone(), row)).is_some() {
            return Err(DataError::DuplicateRow {
                path: p(),
                line,
                series: sid,
                time: time_raw,
            });
        }
    }
    if n_rows == 0 {
        return Err(DataError::EmptyFile { path: p() });
    }

    let mut ids: Vec<String> = series.keys().cloned().collect();
    sort_series_ids(&mut ids);

    let reference = &ids[0];
    let grid: Vec<f64> = series[reference].keys().map(|k| k.0).collect();
    for id in &ids[1..] {
        let g: Vec<f64> = series[id].keys().map(|k| k.0).collect();
        if g != grid {
            return Err(DataError::RaggedSeries {
                path: p(),
                series: id.clone(),
                reference: reference.clone(),
                expected: grid.len(),
                found: g.len(),
            });
        }
    }
    if grid.len() >= 3 {
        let step = grid[1] - grid[0];
        let scale = grid.iter().fold(1.0f64, |a, &t| a.max(t.abs()));
        if grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * scale)
        {
            return Err(DataError::IrregularGrid { path: p() });
        }
    }

    let n = ids.len();
    let t1 = grid.len();
    let mut values = Vec::with_capacity(n * t1 * m);
    for id in &ids {
        for (_, row) in series[id].values() {
            values.extend_from_slice(row);
        }
    }
    PanelData::with_labels(values, n, t1, names, ids, grid).map_err(|e| match e {
        DataError::Invalid(reason) => DataError::BadHeader { path: p(), reason },
        other => other,
    })
}

fn parse_number(raw: &str) -> Option<f64> {
    let lower = raw.to_ascii_lowercase();
    if lower == "na" || lower == "nan" || lower == "null" {
        return Some(f64::NAN);
    }
    raw.parse::<f64>().ok()
}

fn sort_series_ids(ids: &mut [String]) {
    let all_int = ids.iter().all(|s| s.parse::<i64>().is_ok());
    if all_int {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TimeKey(f64);

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Stacked consecutive pairs: row r holds the time-t values (`current`) and the
/// time-(t+1) values (`next`) of the selected variables. Rows are grouped by
/// replicate; no pair crosses a replicate boundary.
#[derive(Debug, Clone)]
pub struct TransitionPairs {
    pub current: DMatrix<f64>,
    pub next: DMatrix<f64>,
}

pub fn transition_pairs(data: &PanelData, vars: &VariableSet) -> TransitionPairs {
    let t = data.n_transitions();
    let rows = data.n_replicates() * t;
    let cols = vars.len();
    let mut current = DMatrix::zeros(rows, cols);
    let mut next = DMatrix::zeros(rows, cols);
    for n in 0..data.n_replicates() {
        for s in 0..t {
            let r = n * t + s;
            for (c, v) in vars.iter().enumerate() {
                current[(r, c)] = data.get(n, s, v);
                next[(r, c)] = data.get(n, s + 1, v);
            }
        }
    }
    TransitionPairs { current, next }
}
