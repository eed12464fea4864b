//! Result files: CSV with a commented schema header, JSON as `{meta, data}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A cell of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Bool(bool),
    Integer(i64),
    Number(f64),
    Text(String),
    Missing,
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Integer(n as i64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Number(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Number)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl Cell {
    /// 17 significant digits, enough to reproduce every double.
    fn csv(&self) -> String {
        match self {
            Cell::Bool(b) => b.to_string(),
            Cell::Integer(n) => n.to_string(),
            Cell::Number(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Number(x) => x.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Bool(b) => Value::from(*b),
            Cell::Integer(n) => Value::from(*n),
            Cell::Number(x) if x.is_finite() => Value::from(*x),
            Cell::Number(x) => Value::from(x.to_string()),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[k] {
                    Cell::Number(x) => x,
                    Cell::Integer(n) => n as f64,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Run metadata written with every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub group: String,
    pub version: String,
    pub generated_unix: u64,
    /// Engine parameters, tolerances and seed.
    pub parameters: BTreeMap<String, Value>,
    pub columns: Vec<String>,
}

impl Meta {
    pub fn new(command: &str, group: &str, parameters: BTreeMap<String, Value>) -> Self {
        Meta {
            command: command.to_string(),
            group: group.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            parameters,
            columns: Vec::new(),
        }
    }
}

pub fn render_csv(meta: &Meta, table: &Table) -> String {
    let mut out = String::new();
    out.push_str(&format!("# command: {}\n", meta.command));
    out.push_str(&format!("# group: {}\n", meta.group));
    out.push_str(&format!("# version: {}\n", meta.version));
    out.push_str(&format!("# generated_unix: {}\n", meta.generated_unix));
    for (k, v) in &meta.parameters {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// `data` is an array of row objects when `extra` is absent, otherwise the
/// object `extra` with the rows under `rows`.
pub fn render_json(meta: &Meta, table: &Table, extra: Option<Value>) -> String {
    let mut meta = meta.clone();
    meta.columns = table.columns.clone();
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            Value::Object(
                table
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), v.json()))
                    .collect(),
            )
        })
        .collect();
    let data = match extra {
        Some(Value::Object(mut m)) => {
            if !rows.is_empty() {
                m.insert("rows".into(), Value::Array(rows));
            }
            Value::Object(m)
        }
        Some(v) => v,
        None => Value::Array(rows),
    };
    let doc = serde_json::json!({ "meta": meta, "data": data });
    serde_json::to_string_pretty(&doc).expect("json serializes") + "\n"
}

/// Parse a CSV written by [`render_csv`]: header comments are skipped.
pub fn parse_csv(text: &str) -> Result<Table, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or("missing header row")?;
    let mut table = Table {
        columns: header.split(',').map(str::to_string).collect(),
        rows: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let row: Vec<Cell> = line
            .split(',')
            .map(|f| {
                if f.is_empty() {
                    Cell::Missing
                } else {
                    f.parse::<f64>().map_or_else(|_| Cell::Text(f.to_string()), Cell::Number)
                }
            })
            .collect();
        if row.len() != table.columns.len() {
            return Err(format!("row {}: {} fields, expected {}", i + 1, row.len(), table.columns.len()));
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}
