//! Report envelope and its JSON / CSV renderings.

use std::fmt::Write as _;

use distinct_core::{KernelSpec, TestConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::Command;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything that determines a run's results. Embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub engine_version: String,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub test: TestConfig,
    pub reduce_dims: Option<usize>,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub results: Value,
    pub runtime_ms: u64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Long-format `path,value` rows, one per JSON leaf. Numbers are printed
    /// exactly as in the JSON rendering.
    pub fn to_csv(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut rows = Vec::new();
        flatten(&value, String::new(), &mut rows);
        let mut out = String::from("path,value\n");
        for (path, leaf) in rows {
            let _ = writeln!(out, "{},{}", quote(&path), quote(&leaf));
        }
        out
    }
}

fn flatten(v: &Value, path: String, rows: &mut Vec<(String, String)>) {
    let join = |key: &str| {
        if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(child, join(k), rows);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(child, join(&i.to_string()), rows);
            }
        }
        Value::String(s) => rows.push((path, s.clone())),
        Value::Null => rows.push((path, String::new())),
        other => rows.push((path, other.to_string())),
    }
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Drops `runtime_ms` so two renderings of the same run can be compared.
pub fn without_timing(json: &str) -> serde_json::Result<Value> {
    let mut v: Value = serde_json::from_str(json)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("runtime_ms");
    }
    Ok(v)
}
