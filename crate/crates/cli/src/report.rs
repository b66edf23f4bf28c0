//! Run reports, deterministic serialization and CSV tables.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Significant digits kept for every float in a report.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Tabular results: one row per sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    /// The fully resolved configuration, defaults included.
    pub config: Value,
    pub metrics: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub wall_clock_seconds: f64,
}

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Rounds every non-integer number in `value`.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_significant(n.as_f64().unwrap_or_default());
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

impl RunReport {
    /// Pretty JSON with floats rounded and object keys sorted.
    pub fn to_json_string(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        round_floats(&mut value);
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json_string()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading report {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn cell(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => serde_json::Number::from_f64(round_significant(x))
                .map_or_else(|| x.to_string(), |r| r.to_string()),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

/// The report's sweep as CSV text; the header is the sweep's column names.
pub fn table_csv(report: &RunReport) -> Result<String> {
    let Some(sweep) = &report.sweep else {
        bail!("report has no sweep to tabulate");
    };
    if sweep.rows.is_empty() {
        bail!("report sweep is empty");
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(&sweep.columns)?;
    for row in &sweep.rows {
        if row.len() != sweep.columns.len() {
            bail!("sweep row has {} cells for {} columns", row.len(), sweep.columns.len());
        }
        out.write_record(row.iter().map(cell))?;
    }
    Ok(String::from_utf8(out.into_inner()?)?)
}

/// Writes the sweep of `report` to `path` as CSV.
pub fn emit_table(report: &RunReport, path: &Path) -> Result<()> {
    write_atomic(path, table_csv(report)?.as_bytes())
}
