//! Loading a directory of delimited files into a profiled dataset collection.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{0} is not a readable directory")]
    NotADirectory(PathBuf),
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no table could be loaded from {path} ({} file(s) rejected)", malformed.len())]
    EmptyCollection {
        path: PathBuf,
        malformed: Vec<MalformedTable>,
    },
    #[error("unknown column {0}")]
    UnknownColumn(ColumnId),
}

/// A file that could not be turned into a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedTable {
    pub file: String,
    pub reason: String,
}

/// Column identity. Ordering is by table, then position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnId {
    pub table: String,
    pub ordinal: usize,
    pub column: String,
}

impl ColumnId {
    pub fn new(table: impl Into<String>, ordinal: usize, column: impl Into<String>) -> Self {
        ColumnId {
            table: table.into(),
            ordinal,
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}#{}", self.table, self.column, self.ordinal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Textual,
    Numerical,
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataKind::Textual => "textual",
            DataKind::Numerical => "numerical",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub delimiter: u8,
    pub null_markers: Vec<String>,
    pub numeric_kind_fraction: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            delimiter: b',',
            null_markers: crate::config::default_null_markers(),
            numeric_kind_fraction: 0.95,
        }
    }
}

impl IngestConfig {
    pub fn is_null(&self, raw: &str) -> bool {
        let t = raw.trim();
        self.null_markers.iter().any(|m| m.eq_ignore_ascii_case(t))
    }
}

/// Kind and value statistics of one column, before it is attached to an id.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFragment {
    pub kind: DataKind,
    /// Distinct non-null values in first-seen order. Numerical columns hold
    /// canonical decimal strings.
    pub unique_values: Vec<String>,
    /// Occurrence count of each entry of `unique_values`.
    pub value_counts: Vec<usize>,
    /// Parsed non-null values in row order (numerical columns only).
    pub numeric_values: Vec<f64>,
    pub row_count: usize,
    pub null_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnProfile {
    pub id: ColumnId,
    pub kind: DataKind,
    pub unique_values: Vec<String>,
    pub value_counts: Vec<usize>,
    pub numeric_values: Vec<f64>,
    pub row_count: usize,
    pub null_count: usize,
}

impl ColumnProfile {
    pub fn new(id: ColumnId, frag: ProfileFragment) -> Self {
        ColumnProfile {
            id,
            kind: frag.kind,
            unique_values: frag.unique_values,
            value_counts: frag.value_counts,
            numeric_values: frag.numeric_values,
            row_count: frag.row_count,
            null_count: frag.null_count,
        }
    }

    /// (value, count) pairs.
    pub fn value_multiset(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.unique_values
            .iter()
            .map(String::as_str)
            .zip(self.value_counts.iter().copied())
    }
}

static DECIMAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$").unwrap());

/// Parses a decimal literal. Words like `inf` or `nan` are not numbers here.
pub fn parse_decimal(raw: &str) -> Option<f64> {
    let t = raw.trim();
    if !DECIMAL.is_match(t) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Canonical decimal string used as a value identity: no sign on zero, no
/// leading zeros in the integer part, no trailing zeros in the fraction.
pub fn canonical_decimal(raw: &str) -> Option<String> {
    let t = raw.trim();
    let v = parse_decimal(t)?;
    if t.contains(['e', 'E']) {
        return Some(if v == 0.0 { "0".into() } else { format!("{v}") });
    }
    let (negative, digits) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let int_part = int_part.trim_start_matches('0');
    let frac_part = frac_part.trim_end_matches('0');
    let mut out = String::new();
    let is_zero = int_part.is_empty() && frac_part.is_empty();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(if int_part.is_empty() { "0" } else { int_part });
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    Some(out)
}

/// Profiles one column of raw cell strings.
pub fn profile_column<S: AsRef<str>>(raw: &[S], cfg: &IngestConfig) -> ProfileFragment {
    let non_null: Vec<&str> = raw
        .iter()
        .map(AsRef::as_ref)
        .filter(|v| !cfg.is_null(v))
        .collect();
    let null_count = raw.len() - non_null.len();
    let parsed: Vec<Option<f64>> = non_null.iter().map(|v| parse_decimal(v)).collect();
    let numeric_hits = parsed.iter().filter(|p| p.is_some()).count();
    let kind = if !non_null.is_empty()
        && numeric_hits as f64 >= cfg.numeric_kind_fraction * non_null.len() as f64
    {
        DataKind::Numerical
    } else {
        DataKind::Textual
    };

    let mut unique_values = Vec::new();
    let mut value_counts: Vec<usize> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut numeric_values = Vec::new();
    for (v, p) in non_null.iter().zip(&parsed) {
        let key = match kind {
            DataKind::Textual => v.to_string(),
            DataKind::Numerical => match p {
                Some(x) => {
                    numeric_values.push(*x);
                    canonical_decimal(v).expect("parsed values canonicalize")
                }
                // Stray non-numbers in a numerical column are dropped.
                None => continue,
            },
        };
        match seen.get(&key) {
            Some(&i) => value_counts[i] += 1,
            None => {
                seen.insert(key.clone(), unique_values.len());
                unique_values.push(key);
                value_counts.push(1);
            }
        }
    }
    ProfileFragment {
        kind,
        unique_values,
        value_counts,
        numeric_values,
        row_count: raw.len(),
        null_count,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    /// Cells with null markers already mapped to `None`.
    pub rows: Vec<Vec<Option<String>>>,
    pub columns: Vec<ColumnProfile>,
}

impl Table {
    /// Builds a table from a header and raw rows, profiling every column.
    pub fn from_rows(
        name: impl Into<String>,
        headers: Vec<String>,
        raw_rows: Vec<Vec<String>>,
        cfg: &IngestConfig,
    ) -> Table {
        let name = name.into();
        let width = headers.len();
        let raw_rows: Vec<Vec<String>> = raw_rows
            .into_iter()
            .map(|mut r| {
                r.resize(width, String::new());
                r
            })
            .collect();
        let columns = (0..width)
            .map(|j| {
                let raw: Vec<&str> = raw_rows.iter().map(|r| r[j].as_str()).collect();
                ColumnProfile::new(
                    ColumnId::new(name.clone(), j, headers[j].clone()),
                    profile_column(&raw, cfg),
                )
            })
            .collect();
        let rows = raw_rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| if cfg.is_null(&c) { None } else { Some(c) })
                    .collect()
            })
            .collect();
        Table {
            name,
            headers,
            rows,
            columns,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCollection {
    pub source_path: String,
    /// Sorted by table name.
    pub tables: Vec<Table>,
}

impl DatasetCollection {
    pub fn from_tables(source_path: impl Into<String>, mut tables: Vec<Table>) -> Self {
        tables.sort_by(|a, b| a.name.cmp(&b.name));
        DatasetCollection {
            source_path: source_path.into(),
            tables,
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnProfile> + '_ {
        self.tables.iter().flat_map(|t| t.columns.iter())
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables
            .binary_search_by(|t| t.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.tables[i])
    }

    pub fn column(&self, id: &ColumnId) -> Option<&ColumnProfile> {
        self.table(&id.table)
            .and_then(|t| t.columns.get(id.ordinal))
            .filter(|c| c.id == *id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub collection: DatasetCollection,
    pub malformed: Vec<MalformedTable>,
}

fn read_table(path: &Path, name: &str, cfg: &IngestConfig) -> Result<Table, String> {
    let bytes = fs::read(path).map_err(|e| format!("unreadable: {e}"))?;
    if bytes.contains(&0) {
        return Err("binary content".into());
    }
    let text = String::from_utf8(bytes).map_err(|_| "not valid UTF-8".to_string())?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| format!("bad header: {e}"))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err("missing header row".into());
    }
    if headers.iter().any(|h| h.trim().is_empty()) {
        return Err("header row has an empty column name".into());
    }
    if headers.iter().all(|h| parse_decimal(h).is_some()) {
        return Err("header row looks like data (header-less file)".into());
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format!("bad record: {e}"))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table::from_rows(name, headers, rows, cfg))
}

/// Loads every regular, non-hidden file of `dir` as a table. Files that fail
/// to parse are reported in `malformed`; only a collection with zero tables
/// is an error.
pub fn load_collection(dir: &Path, cfg: &IngestConfig) -> Result<LoadReport, IngestError> {
    if !dir.is_dir() {
        return Err(IngestError::NotADirectory(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            !p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    files.sort();

    let results: Vec<(String, String, Result<Table, String>)> = files
        .par_iter()
        .map(|p| {
            let file = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let name = p
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| file.clone());
            let table = read_table(p, &name, cfg);
            (file, name, table)
        })
        .collect();

    let mut tables: Vec<Table> = Vec::new();
    let mut malformed = Vec::new();
    let mut names = std::collections::HashSet::new();
    for (file, name, res) in results {
        match res {
            Ok(t) if names.insert(name.clone()) => tables.push(t),
            Ok(_) => malformed.push(MalformedTable {
                file,
                reason: format!("duplicate table name `{name}`"),
            }),
            Err(reason) => malformed.push(MalformedTable { file, reason }),
        }
    }
    if tables.is_empty() {
        return Err(IngestError::EmptyCollection {
            path: dir.to_path_buf(),
            malformed,
        });
    }
    Ok(LoadReport {
        collection: DatasetCollection::from_tables(dir.display().to_string(), tables),
        malformed,
    })
}

/// Header list plus a few information-dense rows of a column's host table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableContext {
    pub column_names: Vec<String>,
    pub sample_rows: Vec<Vec<Option<String>>>,
}

/// The host table's headers and its `l` rows with the fewest nulls (ties by
/// position), returned in table order.
pub fn table_context(
    collection: &DatasetCollection,
    id: &ColumnId,
    l: usize,
) -> Result<TableContext, IngestError> {
    collection
        .column(id)
        .ok_or_else(|| IngestError::UnknownColumn(id.clone()))?;
    let table = collection.table(&id.table).expect("column lookup found table");
    let mut ranked: Vec<(usize, usize)> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().filter(|c| c.is_none()).count(), i))
        .collect();
    ranked.sort_unstable();
    let mut chosen: Vec<usize> = ranked.into_iter().take(l).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(TableContext {
        column_names: table.headers.clone(),
        sample_rows: chosen.into_iter().map(|i| table.rows[i].clone()).collect(),
    })
}

/// One line of the profile report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub table: String,
    pub column: String,
    pub ordinal: usize,
    pub kind: DataKind,
    pub row_count: usize,
    pub null_count: usize,
    pub unique_count: usize,
}

pub const PROFILE_KIND: &str = "profile";

pub fn profile_report(collection: &DatasetCollection) -> Vec<ProfileRecord> {
    collection
        .columns()
        .map(|c| ProfileRecord {
            table: c.id.table.clone(),
            column: c.id.column.clone(),
            ordinal: c.id.ordinal,
            kind: c.kind,
            row_count: c.row_count,
            null_count: c.null_count,
            unique_count: c.unique_values.len(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IngestConfig {
        IngestConfig::default()
    }

    #[test]
    fn numeric_column_with_null() {
        let p = profile_column(&["1", "2", "2", "NA"], &cfg());
        assert_eq!(p.kind, DataKind::Numerical);
        assert_eq!(p.unique_values, vec!["1", "2"]);
        assert_eq!(p.value_counts, vec![1, 2]);
        assert_eq!(p.null_count, 1);
        assert_eq!(p.row_count, 4);
    }

    #[test]
    fn textual_column() {
        let p = profile_column(&["Bronx", "Queens", "Bronx"], &cfg());
        assert_eq!(p.kind, DataKind::Textual);
        assert_eq!(p.unique_values, vec!["Bronx", "Queens"]);
    }

    #[test]
    fn mixed_column_below_fraction_is_textual() {
        // 3 of 4 parse: 0.75 < 0.95
        let p = profile_column(&["1", "x", "2", "3"], &cfg());
        assert_eq!(p.kind, DataKind::Textual);
        assert_eq!(p.unique_values.len(), 4);
    }

    #[test]
    fn all_null_column_is_empty_textual() {
        let p = profile_column(&["", "null", "NaN", "n/a"], &cfg());
        assert_eq!(p.kind, DataKind::Textual);
        assert!(p.unique_values.is_empty());
        assert_eq!(p.null_count, 4);
    }

    #[test]
    fn null_markers_are_case_insensitive() {
        let c = cfg();
        assert!(c.is_null("nan"));
        assert!(c.is_null(" NULL "));
        assert!(!c.is_null("none"));
    }

    #[test]
    fn canonical_decimals() {
        for (raw, want) in [
            ("1.50", "1.5"),
            ("2.0", "2"),
            ("007", "7"),
            ("-0.0", "0"),
            ("+3", "3"),
            (".5", "0.5"),
            ("1e3", "1000"),
            ("-12.340", "-12.34"),
        ] {
            assert_eq!(canonical_decimal(raw).as_deref(), Some(want), "{raw}");
        }
        assert_eq!(canonical_decimal("inf"), None);
        assert_eq!(canonical_decimal("1,000"), None);
    }

    #[test]
    fn numeric_values_dedupe_by_canonical_form() {
        let p = profile_column(&["1.0", "1", "01.00", "2.5"], &cfg());
        assert_eq!(p.unique_values, vec!["1", "2.5"]);
        assert_eq!(p.value_counts, vec![3, 1]);
        assert_eq!(p.numeric_values, vec![1.0, 1.0, 1.0, 2.5]);
    }

    fn table(rows: &[&[&str]]) -> DatasetCollection {
        let headers = vec!["a".to_string(), "b".to_string()];
        let raw = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        DatasetCollection::from_tables("mem", vec![Table::from_rows("t", headers, raw, &cfg())])
    }

    #[test]
    fn context_prefers_null_free_rows() {
        // rows 2 and 4 (1-based) are null-free
        let c = table(&[
            &["x", ""],
            &["1", "2"],
            &["", "y"],
            &["3", "4"],
            &["", ""],
        ]);
        let id = ColumnId::new("t", 0, "a");
        let ctx = table_context(&c, &id, 2).unwrap();
        assert_eq!(ctx.column_names, vec!["a", "b"]);
        assert_eq!(
            ctx.sample_rows,
            vec![
                vec![Some("1".to_string()), Some("2".to_string())],
                vec![Some("3".to_string()), Some("4".to_string())],
            ]
        );
        assert!(table_context(&c, &id, 0).unwrap().sample_rows.is_empty());
        assert_eq!(table_context(&c, &id, 10).unwrap().sample_rows.len(), 5);
    }

    #[test]
    fn context_for_unknown_column_fails() {
        let c = table(&[&["1", "2"]]);
        let err = table_context(&c, &ColumnId::new("t", 5, "z"), 3).unwrap_err();
        assert!(matches!(err, IngestError::UnknownColumn(_)));
    }
}
