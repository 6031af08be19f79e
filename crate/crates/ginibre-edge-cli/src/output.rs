//! Tables and their CSV and JSON renderings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ConfigError, RunConfig, CONFIG_PREFIX};

/// One table cell. Non-finite numbers are stored as `Missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn num(v: f64) -> Self {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Missing
        }
    }

    pub fn int(v: impl TryInto<i64>) -> Self {
        v.try_into().map_or(Cell::Missing, Cell::Int)
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    /// CSV form: 17 significant digits for floats.
    pub fn to_csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub diagnostics: BTreeMap<String, Value>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn diag(&mut self, key: &str, value: impl Into<Value>) {
        self.diagnostics.insert(key.to_string(), value.into());
    }

    /// Column by name as floats.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }
}

/// The JSON output: `{config, columns, rows, diagnostics}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDocument {
    pub config: RunConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub diagnostics: BTreeMap<String, Value>,
}

impl OutputDocument {
    pub fn new(config: &RunConfig, table: &Table) -> Self {
        Self {
            config: config.clone(),
            columns: table.columns.clone(),
            rows: table.rows.clone(),
            diagnostics: table.diagnostics.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }
}

/// Parses and checks a JSON output document.
pub fn parse_json_output(text: &str) -> Result<OutputDocument, ConfigError> {
    let doc: OutputDocument = serde_json::from_str(text).map_err(|e| ConfigError::Document(e.to_string()))?;
    doc.config.validate()?;
    if let Some(r) = doc.rows.iter().find(|r| r.len() != doc.columns.len()) {
        return Err(ConfigError::Document(format!(
            "row has {} cells for {} columns",
            r.len(),
            doc.columns.len()
        )));
    }
    Ok(doc)
}

/// CSV with a `#` header carrying the version, the config and diagnostics.
pub fn render_csv(config: &RunConfig, table: &Table) -> String {
    let mut out = String::new();
    out.push_str(&format!("# ginibre-edge {}\n", config.version));
    out.push_str(CONFIG_PREFIX);
    out.push_str(&config.to_json());
    out.push('\n');
    if !table.diagnostics.is_empty() {
        out.push_str("# diagnostics: ");
        out.push_str(&serde_json::to_string(&table.diagnostics).expect("diagnostics serialize"));
        out.push('\n');
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
