//! CSV ingestion and export of datasets.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FactorColumn, FeatureColumn, FeatureKind};
use crate::error::{Error, Result};
use crate::report::fmt_f64;

/// A factor column, given by name alone or with its feasibility flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorSpec {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        feasible: bool,
    },
}

impl FactorSpec {
    pub fn name(&self) -> &str {
        match self {
            FactorSpec::Name(n) | FactorSpec::Full { name: n, .. } => n,
        }
    }

    pub fn feasible(&self) -> bool {
        matches!(self, FactorSpec::Full { feasible: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSpec {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        kind: FeatureKind,
    },
}

impl FeatureSpec {
    pub fn name(&self) -> &str {
        match self {
            FeatureSpec::Name(n) | FeatureSpec::Full { name: n, .. } => n,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureSpec::Name(_) => FeatureKind::Generic,
            FeatureSpec::Full { kind, .. } => *kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remaining {
    AllRemaining,
}

/// Which columns hold features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureColumns {
    /// Every column that is not a factor, as generic features.
    Wildcard(Remaining),
    List(Vec<FeatureSpec>),
}

impl Default for FeatureColumns {
    fn default() -> Self {
        FeatureColumns::Wildcard(Remaining::AllRemaining)
    }
}

/// Column roles of a CSV table. JSON form:
///
/// ```json
/// { "factor_columns": ["diet", {"name": "cancer", "feasible": false}],
///   "feature_columns": "all_remaining",
///   "delimiter": "," }
/// ```
///
/// `feature_columns` may instead list names or `{"name", "kind"}` objects;
/// unlisted non-factor columns are then ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub factor_columns: Vec<FactorSpec>,
    #[serde(default)]
    pub feature_columns: FeatureColumns,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl TableSchema {
    /// Named factors, every other column a feature.
    pub fn with_factors<S: AsRef<str>>(factors: &[S]) -> Self {
        Self {
            factor_columns: factors
                .iter()
                .map(|f| FactorSpec::Name(f.as_ref().to_string()))
                .collect(),
            feature_columns: FeatureColumns::default(),
            delimiter: ',',
        }
    }

    /// Schema describing `ds` exactly, as written by [`write_csv`].
    pub fn for_dataset(ds: &Dataset) -> Self {
        Self {
            factor_columns: ds
                .factors()
                .iter()
                .map(|f| FactorSpec::Full {
                    name: f.name().to_string(),
                    feasible: f.feasible(),
                })
                .collect(),
            feature_columns: FeatureColumns::List(
                ds.features()
                    .iter()
                    .map(|f| FeatureSpec::Full {
                        name: f.name().to_string(),
                        kind: f.kind(),
                    })
                    .collect(),
            ),
            delimiter: ',',
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(|b| b.is_ascii() && *b != b'.' && *b != b'"')
            .ok_or_else(|| Error::SchemaMismatch(format!("unsupported delimiter {:?}", self.delimiter)))
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

/// Reads a delimited table. Row and column numbers in errors are 1-based
/// and count data rows (the header is row 0).
pub fn load_csv(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    parse_csv(&bytes, schema, &path.display().to_string())
}

/// [`load_csv`] on in-memory bytes.
pub fn parse_csv(bytes: &[u8], schema: &TableSchema, provenance: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::HeaderMissing),
        Some(r) => r?,
    };
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::HeaderMissing);
    }
    let mut position = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if h.is_empty() {
            return Err(Error::SchemaMismatch(format!("column {} has an empty name", i + 1)));
        }
        if position.insert(h.as_str(), i).is_some() {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let locate = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::SchemaMismatch(format!("column {name:?} not found in header")))
    };

    if schema.factor_columns.is_empty() {
        return Err(Error::SchemaMismatch("schema names no factor columns".into()));
    }
    let factor_cols = schema
        .factor_columns
        .iter()
        .map(|f| locate(f.name()))
        .collect::<Result<Vec<_>>>()?;
    let factor_set: HashSet<usize> = factor_cols.iter().copied().collect();
    if factor_set.len() != factor_cols.len() {
        return Err(Error::SchemaMismatch("a factor column is listed twice".into()));
    }
    let feature_cols: Vec<(usize, FeatureKind)> = match &schema.feature_columns {
        FeatureColumns::Wildcard(_) => (0..header.len())
            .filter(|i| !factor_set.contains(i))
            .map(|i| (i, FeatureKind::Generic))
            .collect(),
        FeatureColumns::List(list) => {
            let mut seen = HashSet::new();
            list.iter()
                .map(|f| {
                    let i = locate(f.name())?;
                    if factor_set.contains(&i) {
                        return Err(Error::SchemaMismatch(format!(
                            "{:?} is listed as both factor and feature",
                            f.name()
                        )));
                    }
                    if !seen.insert(i) {
                        return Err(Error::SchemaMismatch(format!("feature {:?} is listed twice", f.name())));
                    }
                    Ok((i, f.kind()))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    if feature_cols.is_empty() {
        return Err(Error::SchemaMismatch("schema selects no feature columns".into()));
    }

    let mut factor_cells: Vec<Vec<String>> = vec![Vec::new(); factor_cols.len()];
    let mut feature_vals: Vec<Vec<f64>> = vec![Vec::new(); feature_cols.len()];
    for (idx, rec) in records.enumerate() {
        let rec = rec?;
        let row = idx + 1;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) && header.len() > 1 {
            // Blank line.
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::SchemaMismatch(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        for (k, &c) in factor_cols.iter().enumerate() {
            let cell = rec[c].trim();
            if is_missing(cell) {
                return Err(Error::MissingValue { row, col: c + 1 });
            }
            factor_cells[k].push(cell.to_string());
        }
        for (k, &(c, _)) in feature_cols.iter().enumerate() {
            let cell = rec[c].trim();
            if is_missing(cell) {
                return Err(Error::MissingValue { row, col: c + 1 });
            }
            let value: f64 = cell.parse().map_err(|_| Error::ParseError {
                row,
                col: c + 1,
                token: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::ParseError {
                    row,
                    col: c + 1,
                    token: cell.to_string(),
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeFeature { row, col: c + 1 });
            }
            // Folds -0 into +0.
            feature_vals[k].push(value + 0.0);
        }
    }
    if factor_cells[0].is_empty() {
        return Err(Error::Empty);
    }

    let factors = schema
        .factor_columns
        .iter()
        .zip(factor_cells)
        .map(|(spec, cells)| Ok(FactorColumn::from_labels(spec.name(), &cells)?.with_feasible(spec.feasible())))
        .collect::<Result<Vec<_>>>()?;
    let features = feature_cols
        .iter()
        .zip(feature_vals)
        .map(|(&(c, kind), values)| FeatureColumn::new(header[c].clone(), values, kind))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(factors, features, provenance)
}

/// CSV text of `ds`: factor labels first, then features, floats in the
/// shortest form that parses back to the same value.
pub fn dataset_to_csv(ds: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.factors().iter().map(|f| f.name()).collect();
    header.extend(ds.features().iter().map(|f| f.name()));
    w.write_record(&header)?;
    for row in 0..ds.n_samples() {
        let mut rec: Vec<String> = ds.factors().iter().map(|f| f.label(row).to_string()).collect();
        rec.extend(ds.features().iter().map(|f| fmt_f64(f.values()[row])));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_csv(ds)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, factors: &[&str]) -> Result<Dataset> {
        parse_csv(text.as_bytes(), &TableSchema::with_factors(factors), "mem")
    }

    #[test]
    fn three_rows_all_remaining() {
        let ds = parse("diet,a,b\nhf,1,2\nlf,0.5,0\nhf,3,4\n", &["diet"]).unwrap();
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.feature_names(), vec!["a", "b"]);
        assert_eq!(ds.factor("diet").unwrap().categories(), ["hf", "lf"]);
    }

    #[test]
    fn negative_and_missing_cells() {
        assert!(matches!(
            parse("diet,a\nhf,-0.5\n", &["diet"]),
            Err(Error::NegativeFeature { row: 1, col: 2 })
        ));
        assert!(matches!(
            parse("diet,a,b\nhf,1,2\nlf,,3\n", &["diet"]),
            Err(Error::MissingValue { row: 2, col: 2 })
        ));
        assert!(matches!(
            parse("diet,a\n,1\n", &["diet"]),
            Err(Error::MissingValue { row: 1, col: 1 })
        ));
    }

    #[test]
    fn parse_and_header_errors() {
        assert!(matches!(
            parse("diet,a\nhf,x1\n", &["diet"]),
            Err(Error::ParseError { row: 1, col: 2, ref token }) if token == "x1"
        ));
        assert!(matches!(parse("", &["diet"]), Err(Error::HeaderMissing)));
        assert!(matches!(parse("diet,a\n", &["diet"]), Err(Error::Empty)));
        assert!(matches!(parse("d,a\nx,1\n", &["diet"]), Err(Error::SchemaMismatch(_))));
        assert!(matches!(parse("diet,a\nx,1,2\n", &["diet"]), Err(Error::SchemaMismatch(_))));
        assert!(matches!(parse("diet,a,a\nx,1,2\n", &["diet"]), Err(Error::DuplicateColumn(_))));
        assert!(matches!(parse("diet\nx\n", &["diet"]), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn explicit_schema_json() {
        let schema: TableSchema = serde_json::from_str(
            r#"{"factor_columns": [{"name": "diet", "feasible": true}, "type"],
                "feature_columns": ["b", {"name": "a", "kind": "serum_metabolite"}],
                "delimiter": ";"}"#,
        )
        .unwrap();
        let ds = parse_csv(b"a;type;diet;b;junk\n1;x;hf;2;z\n", &schema, "m").unwrap();
        assert_eq!(ds.feature_names(), vec!["b", "a"]);
        assert!(ds.factor("diet").unwrap().feasible());
        assert!(!ds.factor("type").unwrap().feasible());
        assert_eq!(ds.feature("a").unwrap().kind(), FeatureKind::SerumMetabolite);
        let wild: TableSchema = serde_json::from_str(r#"{"factor_columns": ["diet"]}"#).unwrap();
        assert_eq!(wild.feature_columns, FeatureColumns::default());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "g,x,y\nu,0.1,3\nv,1e-300,0.30000000000000004\nu,123456.789,0\n";
        let ds = parse(text, &["g"]).unwrap();
        let back = parse_csv(
            dataset_to_csv(&ds).unwrap().as_bytes(),
            &TableSchema::for_dataset(&ds),
            "mem",
        )
        .unwrap();
        assert_eq!(ds, back);
    }
}
