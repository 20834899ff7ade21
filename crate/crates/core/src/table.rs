//! Immutable, column-typed relational tables.
//!
//! A [`Table`] is the unit of data that flows through the whole pipeline: the
//! user's input, every intermediate result of a transformation program, and
//! the example tables recovered from demonstrated chart elements. Tables never
//! change after construction; transformations build new ones.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Relative tolerance used for every containment comparison unless overridden.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("malformed JSON table: {0}")]
    MalformedJson(String),
    #[error("table has no data rows")]
    EmptyTable,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cell ({row}, `{column}`) does not fit column type {ty}")]
    TypeMismatch {
        row: usize,
        column: String,
        ty: ColumnType,
    },
    #[error("cell ({row}, `{column}`) is not a finite number")]
    NonFinite { row: usize, column: String },
}

/// One cell of a table.
#[derive(Debug, Clone)]
pub enum CellValue {
    Number(f64),
    Text(Arc<str>),
    Date(NaiveDate),
    Missing,
}

impl CellValue {
    /// Builds a number cell, normalizing `-0.0` and rejecting NaN/infinity.
    pub fn number(x: f64) -> Option<CellValue> {
        if !x.is_finite() {
            return None;
        }
        Some(CellValue::Number(if x == 0.0 { 0.0 } else { x }))
    }

    pub fn text(s: impl AsRef<str>) -> CellValue {
        CellValue::Text(Arc::from(s.as_ref()))
    }

    pub fn date(y: i32, m: u32, d: u32) -> Option<CellValue> {
        NaiveDate::from_ymd_opt(y, m, d).map(CellValue::Date)
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, CellValue::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    /// Canonical text form: shortest round-trip decimal for numbers, ISO-8601
    /// for dates, the raw string for text and the empty string for missing.
    pub fn canonical(&self) -> String {
        match self {
            CellValue::Number(x) => format_number(*x),
            CellValue::Text(s) => s.to_string(),
            CellValue::Date(d) => d.format("%Y-%m-%d").to_string(),
            CellValue::Missing => String::new(),
        }
    }

    /// Parses a raw text cell according to a column type. Empty text is
    /// missing. Returns `None` when the text does not fit the type.
    pub fn parse_as(raw: &str, ty: ColumnType) -> Option<CellValue> {
        let t = raw.trim();
        if t.is_empty() {
            return Some(CellValue::Missing);
        }
        match ty {
            ColumnType::Quantitative => parse_number(t).map(CellValue::Number),
            ColumnType::Temporal => parse_iso_date(t).map(CellValue::Date),
            ColumnType::Nominal => Some(CellValue::text(raw)),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            CellValue::Missing => 0,
            CellValue::Number(_) => 1,
            CellValue::Date(_) => 2,
            CellValue::Text(_) => 3,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CellValue::Number(x) => number_json(*x),
            CellValue::Text(s) => Value::String(s.to_string()),
            CellValue::Date(_) => Value::String(self.canonical()),
            CellValue::Missing => Value::Null,
        }
    }

    /// Reads a loosely typed JSON scalar: numbers become `Number`, strings
    /// become `Text`, null becomes `Missing`.
    pub fn from_json_loose(v: &Value) -> Option<CellValue> {
        match v {
            Value::Null => Some(CellValue::Missing),
            Value::Number(n) => n.as_f64().and_then(CellValue::number),
            Value::String(s) => Some(CellValue::text(s)),
            Value::Bool(b) => Some(CellValue::text(if *b { "true" } else { "false" })),
            _ => None,
        }
    }
}

fn number_json(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        json!(x as i64)
    } else {
        json!(x)
    }
}

/// Shortest decimal text that parses back to the same float.
pub fn format_number(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x}")
}

/// Parses a finite decimal number; `inf`/`nan` spellings are rejected.
pub fn parse_number(s: &str) -> Option<f64> {
    let x: f64 = s.trim().parse().ok()?;
    x.is_finite().then_some(if x == 0.0 { 0.0 } else { x })
}

/// Parses exactly `YYYY-MM-DD`.
pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    if !b
        .iter()
        .enumerate()
        .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
    {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

impl PartialEq for CellValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CellValue {}

impl PartialOrd for CellValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order: missing < numbers < dates < text.
impl Ord for CellValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (CellValue::Number(a), CellValue::Number(b)) => a.total_cmp(b),
            (CellValue::Text(a), CellValue::Text(b)) => a.cmp(b),
            (CellValue::Date(a), CellValue::Date(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for CellValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            CellValue::Number(x) => x.to_bits().hash(state),
            CellValue::Text(s) => s.hash(state),
            CellValue::Date(d) => d.hash(state),
            CellValue::Missing => {}
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Missing => f.write_str("NA"),
            other => f.write_str(&other.canonical()),
        }
    }
}

/// Tolerant cell comparison used by containment checking.
///
/// Numbers match within `rel_tol * max(1, |a|, |b|)`. Text matches after
/// trimming. A number and a text that parses to a matching number are equal,
/// and likewise a date and a text holding the same ISO date.
pub fn cell_equal(a: &CellValue, b: &CellValue, rel_tol: f64) -> bool {
    use CellValue::*;
    match (a, b) {
        (Number(x), Number(y)) => numbers_close(*x, *y, rel_tol),
        (Text(x), Text(y)) => x.trim() == y.trim(),
        (Date(x), Date(y)) => x == y,
        (Missing, Missing) => true,
        (Number(x), Text(s)) | (Text(s), Number(x)) => {
            parse_number(s).is_some_and(|y| numbers_close(*x, y, rel_tol))
        }
        (Date(d), Text(s)) | (Text(s), Date(d)) => parse_iso_date(s.trim()) == Some(*d),
        _ => false,
    }
}

pub(crate) fn numbers_close(x: f64, y: f64, rel_tol: f64) -> bool {
    (x - y).abs() <= rel_tol * 1f64.max(x.abs()).max(y.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Quantitative,
    Nominal,
    Temporal,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Quantitative => "quantitative",
            ColumnType::Nominal => "nominal",
            ColumnType::Temporal => "temporal",
        }
    }

    /// Whether a cell may be stored in a column of this type.
    pub fn admits(self, cell: &CellValue) -> bool {
        match (self, cell) {
            (_, CellValue::Missing) => true,
            (ColumnType::Quantitative, CellValue::Number(_)) => true,
            (ColumnType::Temporal, CellValue::Date(_)) => true,
            (ColumnType::Nominal, _) => true,
            _ => false,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Infers a column type from raw text cells.
///
/// Temporal when every non-empty cell is an ISO date, otherwise Quantitative
/// when every non-empty cell is a number, otherwise Nominal. A column with no
/// non-empty cells is Nominal.
pub fn infer_column_type<S: AsRef<str>>(cells: &[S]) -> ColumnType {
    let present: Vec<&str> = cells
        .iter()
        .map(|c| c.as_ref().trim())
        .filter(|c| !c.is_empty())
        .collect();
    if present.is_empty() {
        ColumnType::Nominal
    } else if present.iter().all(|c| parse_iso_date(c).is_some()) {
        ColumnType::Temporal
    } else if present.iter().all(|c| parse_number(c).is_some()) {
        ColumnType::Quantitative
    } else {
        ColumnType::Nominal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Column {
        Column {
            name: name.into(),
            ty,
        }
    }
}

/// An immutable relational table.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Table {
    columns: Vec<Column>,
    /// Row-major cells.
    cells: Vec<CellValue>,
    num_rows: usize,
}

impl Table {
    /// Builds a table, checking name uniqueness, row widths and cell types.
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<CellValue>>) -> Result<Table, TableError> {
        let mut seen = HashSet::with_capacity(columns.len());
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::RaggedRow {
                    row: r,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
            for (cell, col) in row.iter().zip(&columns) {
                if let CellValue::Number(x) = cell {
                    if !x.is_finite() {
                        return Err(TableError::NonFinite {
                            row: r,
                            column: col.name.clone(),
                        });
                    }
                }
                if !col.ty.admits(cell) {
                    return Err(TableError::TypeMismatch {
                        row: r,
                        column: col.name.clone(),
                        ty: col.ty,
                    });
                }
            }
        }
        let num_rows = rows.len();
        Ok(Table {
            columns,
            cells: rows.into_iter().flatten().collect(),
            num_rows,
        })
    }

    /// Builds a table whose cell types and row widths the caller already
    /// guarantees. Column names are still checked.
    /// `cells` is row-major.
    pub(crate) fn from_parts(
        columns: Vec<Column>,
        cells: Vec<CellValue>,
    ) -> Result<Table, TableError> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|d| d.name == c.name) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        let num_rows = match columns.len() {
            0 => 0,
            n => {
                debug_assert_eq!(cells.len() % n, 0);
                cells.len() / n
            }
        };
        Ok(Table {
            columns,
            cells,
            num_rows,
        })
    }

    /// Builds a table from raw text cells, inferring each column's type.
    pub fn from_text_rows(
        names: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Table, TableError> {
        let width = names.len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(TableError::RaggedRow {
                    row: r,
                    expected: width,
                    found: row.len(),
                });
            }
        }
        let mut columns = Vec::with_capacity(width);
        for (c, name) in names.into_iter().enumerate() {
            let cells: Vec<&str> = rows.iter().map(|row| row[c].as_str()).collect();
            columns.push(Column::new(name, infer_column_type(&cells)));
        }
        let typed = rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&columns)
                    .map(|(raw, col)| {
                        CellValue::parse_as(raw, col.ty).expect("inferred type admits its cells")
                    })
                    .collect()
            })
            .collect();
        Table::new(columns, typed)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_type(&self, idx: usize) -> ColumnType {
        self.columns[idx].ty
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[CellValue]> + ExactSizeIterator + Clone {
        (0..self.num_rows).map(move |r| self.row(r))
    }

    pub fn row(&self, r: usize) -> &[CellValue] {
        let n = self.columns.len();
        &self.cells[r * n..(r + 1) * n]
    }

    /// All cells, row-major.
    pub fn cells(&self) -> &[CellValue] {
        &self.cells
    }

    pub fn to_rows(&self) -> Vec<Vec<CellValue>> {
        self.rows().map(<[CellValue]>::to_vec).collect()
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellValue {
        &self.cells[row * self.columns.len() + col]
    }

    pub fn column_cells(&self, col: usize) -> impl Iterator<Item = &CellValue> + '_ {
        self.rows().map(move |r| &r[col])
    }

    pub fn has_missing(&self) -> bool {
        self.cells.iter().any(CellValue::is_missing)
    }

    /// Serializes as RFC-4180 CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.column_names())
            .expect("writing to memory");
        for row in self.rows() {
            w.write_record(row.iter().map(CellValue::canonical))
                .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV output is UTF-8")
    }

    /// The JSON table form `{"columns": [{"name", "type"}], "rows": [[...]]}`.
    pub fn to_json(&self) -> Value {
        json!({
            "columns": self.columns,
            "rows": self.rows()
                .map(|r| Value::Array(r.iter().map(CellValue::to_json).collect()))
                .collect::<Vec<_>>(),
        })
    }

    /// Reads the JSON table form. A column without `"type"` has its type
    /// inferred from its cells.
    pub fn from_json(v: &Value) -> Result<Table, TableError> {
        let bad = |m: &str| TableError::MalformedJson(m.to_string());
        let cols = v
            .get("columns")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `columns` array"))?;
        let rows = v
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `rows` array"))?;
        let mut names = Vec::with_capacity(cols.len());
        let mut types = Vec::with_capacity(cols.len());
        for (i, c) in cols.iter().enumerate() {
            let name = c
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| bad(&format!("columns[{i}].name must be a string")))?;
            let ty = match c.get("type") {
                None | Some(Value::Null) => None,
                Some(t) => Some(
                    serde_json::from_value::<ColumnType>(t.clone())
                        .map_err(|e| bad(&format!("columns[{i}].type: {e}")))?,
                ),
            };
            names.push(name.to_string());
            types.push(ty);
        }
        let mut raw: Vec<Vec<String>> = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            let cells = row
                .as_array()
                .ok_or_else(|| bad(&format!("rows[{r}] must be an array")))?;
            if cells.len() != names.len() {
                return Err(TableError::RaggedRow {
                    row: r,
                    expected: names.len(),
                    found: cells.len(),
                });
            }
            let mut out = Vec::with_capacity(cells.len());
            for (c, cell) in cells.iter().enumerate() {
                let v = CellValue::from_json_loose(cell)
                    .ok_or_else(|| bad(&format!("rows[{r}][{c}] must be a scalar")))?;
                out.push(v.canonical());
            }
            raw.push(out);
        }
        let mut columns = Vec::with_capacity(names.len());
        for (c, (name, ty)) in names.into_iter().zip(types).enumerate() {
            let ty = ty.unwrap_or_else(|| {
                let cells: Vec<&str> = raw.iter().map(|row| row[c].as_str()).collect();
                infer_column_type(&cells)
            });
            columns.push(Column::new(name, ty));
        }
        let mut typed = Vec::with_capacity(raw.len());
        for (r, row) in raw.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (text, col) in row.iter().zip(&columns) {
                let cell =
                    CellValue::parse_as(text, col.ty).ok_or_else(|| TableError::TypeMismatch {
                        row: r,
                        column: col.name.clone(),
                        ty: col.ty,
                    })?;
                out.push(cell);
            }
            typed.push(out);
        }
        Table::new(columns, typed)
    }
}

impl Serialize for Table {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Table, D::Error> {
        let v = Value::deserialize(d)?;
        Table::from_json(&v).map_err(serde::de::Error::custom)
    }
}

/// Loads a CSV document. Without a header row, columns are named `C1`, `C2`, ...
pub fn load_csv(bytes: &[u8], has_header: bool) -> Result<Table, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| TableError::MalformedCsv(e.to_string()))?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let names = if has_header {
        if records.is_empty() {
            return Err(TableError::EmptyTable);
        }
        records.remove(0)
    } else {
        let width = records.first().map_or(0, Vec::len);
        (1..=width).map(|i| format!("C{i}")).collect()
    };
    if records.is_empty() {
        return Err(TableError::EmptyTable);
    }
    if let Some((r, row)) = records
        .iter()
        .enumerate()
        .find(|(_, row)| row.len() != names.len())
    {
        return Err(TableError::MalformedCsv(format!(
            "row {} has {} fields, expected {}",
            r + 1,
            row.len(),
            names.len()
        )));
    }
    Table::from_text_rows(names, records).map_err(|e| match e {
        TableError::DuplicateColumn(c) => {
            TableError::MalformedCsv(format!("duplicate header `{c}`"))
        }
        other => other,
    })
}

/// Returns `base` if unused, else `base_2`, `base_3`, ...
pub fn fresh_name<'a>(existing: impl IntoIterator<Item = &'a str> + Clone, base: &str) -> String {
    let taken = |n: &str| existing.clone().into_iter().any(|e| e == n);
    if !taken(base) {
        return base.to_string();
    }
    (2..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken(n))
        .expect("unbounded suffix search")
}
