//! Result documents: JSON with 17-significant-digit numbers, or CSV.

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Number, Value};

use crate::failure::Failure;

/// Builds JSON values, converting nat-valued quantities to bits when asked.
#[derive(Debug, Clone, Copy)]
pub struct Units {
    pub bits: bool,
}

impl Units {
    pub fn name(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    /// An information quantity, in the selected unit.
    pub fn nat(&self, v: f64) -> Value {
        num(if self.bits { v / std::f64::consts::LN_2 } else { v })
    }
}

/// `v` with 17 significant digits; `null` when not finite.
pub fn num(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let text = format!("{v:.16e}");
    Value::Number(text.parse::<Number>().expect("exponent notation is valid JSON"))
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

pub fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(m.row_iter().map(|r| Value::Array(r.iter().map(|x| num(*x)).collect())).collect())
}

/// Object builder that keeps insertion order.
#[derive(Debug, Default)]
pub struct Obj(Map<String, Value>);

impl Obj {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn build(self) -> Value {
        Value::Object(self.0)
    }
}

impl From<Obj> for Value {
    fn from(o: Obj) -> Self {
        o.build()
    }
}

pub fn to_json(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, out);
            }
        }
        other => out.push((prefix.to_string(), scalar_text(other))),
    }
}

/// CSV rendering of the results. When `table` names an array in the results,
/// its rows become records under a header of flattened field names; otherwise
/// every leaf is written as a `field,value` pair.
pub fn to_csv(results: &Value, table: Option<&str>) -> Result<String, Failure> {
    let io = |e: csv::Error| Failure::spec("IO_ERROR", e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = table.and_then(|key| results.get(key)).and_then(Value::as_array).filter(|rows| !rows.is_empty());
    if let Some(rows) = rows {
        let flat_row = |row: &Value| {
            let mut cells = Vec::new();
            flatten(if row.is_array() { "state" } else { "" }, row, &mut cells);
            cells
        };
        let header: Vec<String> = flat_row(&rows[0]).into_iter().map(|(k, _)| k).collect();
        w.write_record(&header).map_err(io)?;
        for row in rows {
            w.write_record(flat_row(row).into_iter().map(|(_, v)| v)).map_err(io)?;
        }
    } else {
        w.write_record(["field", "value"]).map_err(io)?;
        let mut cells = Vec::new();
        flatten("", results, &mut cells);
        for (k, v) in cells {
            w.write_record([k, v]).map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::spec("IO_ERROR", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
