//! Report structure and rendering.
//!
//! Every experiment produces one [`EnsembleReport`]: a fixed column list, a
//! row-major table, and an aggregate block whose entries are recomputable
//! from the rows. JSON output is the report serialized as a single object;
//! CSV output is the header line plus one line per row, `.` as the decimal
//! separator, newline-terminated. All maps are ordered, so identical
//! configs render to identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::OutFormat;

/// One experiment's complete output.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    /// Which experiment ran.
    pub command: String,
    /// The run-defining configuration, echoed as flat text pairs.
    pub config: BTreeMap<String, String>,
    /// Column names, in CSV emission order.
    pub columns: Vec<String>,
    /// Row-major table; each row holds one value per column.
    pub rows: Vec<Vec<Value>>,
    /// Summary statistics derived from the rows.
    pub aggregate: BTreeMap<String, Value>,
}

impl EnsembleReport {
    pub fn new(
        command: &str,
        config: BTreeMap<String, String>,
        columns: &[&str],
    ) -> EnsembleReport {
        EnsembleReport {
            command: command.into(),
            config,
            columns: columns.iter().map(|c| (*c).to_string()).collect(),
            rows: Vec::new(),
            aggregate: BTreeMap::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn set_agg(&mut self, key: &str, value: Value) {
        self.aggregate.insert(key.into(), value);
    }

    /// Renders to the requested format; the result always ends in a newline.
    pub fn render(&self, format: OutFormat) -> String {
        match format {
            OutFormat::Csv => self.to_csv(),
            OutFormat::Json => {
                let mut text = serde_json::to_string_pretty(self)
                    .expect("report serialization cannot fail");
                text.push('\n');
                text
            }
        }
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&csv_cell(cell));
            }
            out.push('\n');
        }
        out
    }
}

/// Renders one cell: numbers in their shortest round-trip form, nulls as
/// empty cells, strings verbatim (report strings are label words, never
/// free text, so no quoting is needed).
fn csv_cell(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => {
            debug_assert!(
                !s.contains([',', '"', '\n']),
                "CSV label cells must not need quoting: {s:?}"
            );
            s.clone()
        }
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => panic!("composite value {other:?} has no CSV cell form"),
    }
}

/// A finite float as a JSON value.
pub fn num(x: f64) -> Value {
    debug_assert!(x.is_finite(), "report floats must be finite, got {x}");
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Writes the rendered report to `out_path`, or to stdout when no path is
/// given.
pub fn emit_report(
    report: &EnsembleReport,
    format: OutFormat,
    out_path: Option<&Path>,
) -> io::Result<()> {
    let text = report.render(format);
    match out_path {
        Some(path) => fs::write(path, text),
        None => {
            let stdout = io::stdout();
            let mut handle = stdout.lock();
            handle.write_all(text.as_bytes())
        }
    }
}
