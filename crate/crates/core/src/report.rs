//! Output formatting shared by the library reports and the CLI.
//!
//! Every float is written with 17 significant digits so that reruns can be
//! compared byte for byte.

use serde::Serialize;
use serde_json::{Number, Value};

/// 17 significant digits in scientific notation with a signed exponent; `NaN`/`inf`/`-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.16e}");
        match s.split_once('e') {
            Some((m, e)) if !e.starts_with('-') => format!("{m}e+{e}"),
            _ => s,
        }
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn is_float_literal(n: &Number) -> bool {
    n.to_string().contains(['.', 'e', 'E'])
}

fn reformat(v: Value) -> Value {
    match v {
        Value::Number(n) if is_float_literal(&n) => match n.as_f64() {
            Some(x) if x.is_finite() => Value::Number(
                serde_json::from_str(&fmt_f64(x)).expect("formatted float is valid JSON"),
            ),
            _ => Value::Null,
        },
        Value::Array(items) => Value::Array(items.into_iter().map(reformat).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, reformat(v))).collect())
        }
        other => other,
    }
}

/// JSON value with every float rewritten to 17 significant digits.
/// Non-finite floats become `null`.
pub fn to_json_value<T: Serialize + ?Sized>(value: &T) -> Value {
    reformat(serde_json::to_value(value).expect("report types serialize to JSON"))
}

/// Pretty-printed JSON with 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(&to_json_value(value)).expect("JSON values always print")
}

/// Comma-separated rows with a header; floats via [`fmt_f64`].
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
pub enum Cell<'a> {
    Int(u64),
    Float(f64),
    Text(&'a str),
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: &[Cell<'_>]) {
        self.rows.push(
            cells
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(x) => fmt_f64(*x),
                    Cell::Text(s) => s.to_string(),
                })
                .collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
