//! Self-describing reports and their JSON / CSV rendering.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const TOOL: &str = "linenet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(headers: &[S]) -> Self {
        Self { headers: headers.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, preamble: &[String]) -> Result<String, CliError> {
        let mut out = Vec::new();
        for line in preamble {
            writeln!(out, "# {line}").expect("write to vec");
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.headers)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush().map_err(|e| CliError::Io { path: PathBuf::from("<buffer>"), source: e })?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

/// Renders a float in shortest round-trip form; missing values are empty.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub result: Value,
    #[serde(skip)]
    pub table: Option<Table>,
}

impl Report {
    pub fn new(command: &str, config: Value, result: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config,
            result: serde_json::to_value(result)?,
            table: None,
        })
    }

    pub fn with_table(mut self, t: Table) -> Self {
        self.table = Some(t);
        self
    }

    pub fn preamble(&self) -> Vec<String> {
        vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("config: {}", self.config),
        ]
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
            Format::Csv => match &self.table {
                Some(t) => t.to_csv(&self.preamble()),
                None => key_values(&self.result).to_csv(&self.preamble()),
            },
        }
    }
}

/// Flattens scalar and array leaves into `key,value` rows.
fn key_values(v: &Value) -> Table {
    fn walk(prefix: &str, v: &Value, t: &mut Table) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, t);
                }
            }
            Value::String(s) => t.push(vec![prefix.to_string(), s.clone()]),
            Value::Null => t.push(vec![prefix.to_string(), String::new()]),
            other => t.push(vec![prefix.to_string(), other.to_string()]),
        }
    }
    let mut t = Table::new(&["key", "value"]);
    walk("", v, &mut t);
    t
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io { path: p.to_path_buf(), source: e }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io { path: PathBuf::from("<stdout>"), source: e })
        }
    }
}
