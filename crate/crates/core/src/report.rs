//! Self-describing report files (JSON envelope or per-row CSV).
//!
//! JSON layout, schema version 1:
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "kind": "evaluation" | "importance" | "transfer" | "mi" | "exact_mi" | "truth",
//!   "tool": { "name": "modkit", "version": "<crate version>" },
//!   "config": { ...every setting that influenced the result... },
//!   "master_seed": <u64 or null>,
//!   "result": { ...kind-specific payload... }
//! }
//! ```
//!
//! Non-finite floats (unbounded ratios) are written as the strings `"inf"`,
//! `"-inf"` or `"nan"`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: "modkit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    pub tool: ToolInfo,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub result: T,
}

impl<T> Envelope<T> {
    pub fn new(kind: &str, config: serde_json::Value, master_seed: Option<u64>, result: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            tool: ToolInfo::default(),
            config,
            master_seed,
            result,
        }
    }
}

/// Output encoding of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// `.csv` → CSV, anything else → JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Tabular view of a result for CSV export.
pub trait CsvTable {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

/// Float formatting used in CSV outputs: shortest string that parses back to
/// the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn to_json_string<T: Serialize>(envelope: &Envelope<T>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(envelope)?;
    s.push('\n');
    Ok(s)
}

pub fn to_csv_string<T: CsvTable>(table: &T) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(table.header())?;
    for row in table.rows() {
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

/// Writes `envelope` as JSON, or its result as CSV.
pub fn write_report<T: Serialize + CsvTable>(envelope: &Envelope<T>, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Json => to_json_string(envelope)?,
        Format::Csv => to_csv_string(&envelope.result)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(envelope: &Envelope<T>, path: &Path) -> Result<()> {
    fs::write(path, to_json_string(envelope)?)?;
    Ok(())
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>> {
    let text = fs::read_to_string(path)?;
    let env: Envelope<T> = serde_json::from_str(&text)?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::Serialization(format!(
            "unsupported report schema version {}",
            env.schema_version
        )));
    }
    Ok(env)
}

/// Serde adapter for `f64` fields that may hold infinities or NaN.
pub mod float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&super::fmt_f64(*x))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid float {other:?}"))),
            },
        }
    }
}
