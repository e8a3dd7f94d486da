//! Rules document with its CSV column mapping, and row-to-tuple conversion.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::Context;
use chrono::{DateTime, NaiveDateTime};
use ksanon_core::{parse_rule_document_with, AttributeValue, Error, GeneralizationRule, HierarchySeed, IncomingTuple};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// `|`-separated generalization path, leaf first.
    Path,
    /// Date and time, mapped to seconds since the Unix epoch.
    Datetime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub index: usize,
    #[serde(rename = "type")]
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    /// Column holding the subject key.
    pub subject: String,
    /// Column holding the message id; row numbers are used when absent.
    #[serde(default)]
    pub id: Option<String>,
    /// Attribute columns. Indices must cover `0..columns.len()`.
    pub columns: Vec<Column>,
}

impl Mapping {
    pub fn validate(&self) -> anyhow::Result<()> {
        let mut seen = vec![false; self.columns.len()];
        for c in &self.columns {
            anyhow::ensure!(
                c.index < seen.len() && !std::mem::replace(&mut seen[c.index], true),
                "column `{}`: index {} duplicated or outside 0..{}",
                c.name,
                c.index,
                seen.len()
            );
        }
        Ok(())
    }

    /// Columns sorted by attribute index.
    pub fn ordered(&self) -> Vec<&Column> {
        let mut cols: Vec<&Column> = self.columns.iter().collect();
        cols.sort_by_key(|c| c.index);
        cols
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone)]
pub struct RulesFile {
    pub rules: Vec<GeneralizationRule>,
    pub mapping: Mapping,
}

#[derive(Deserialize)]
struct MappingOnly {
    mapping: Mapping,
}

impl RulesFile {
    /// Parses a rules document. String-valued hierarchies name JSON files
    /// resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> anyhow::Result<Self> {
        let rules = parse_rule_document_with(text, |name| {
            let path = match base {
                Some(b) => b.join(name),
                None => name.into(),
            };
            let body = fs::read_to_string(&path)
                .map_err(|e| Error::Invariant(format!("hierarchy file {}: {e}", path.display())))?;
            serde_json::from_str::<HierarchySeed>(&body).map_err(|e| Error::Parse {
                line: e.line(),
                field: "hierarchy".into(),
                message: e.to_string(),
            })
        })?;
        let MappingOnly { mapping } =
            serde_json::from_str(text).context("rules document needs a `mapping` object")?;
        mapping.validate()?;
        if let Some(r) = rules.iter().find(|r| r.attribute_index >= mapping.arity()) {
            anyhow::bail!("rule for attribute {} has no mapped column", r.attribute_index);
        }
        Ok(Self { rules, mapping })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, path.parent()).with_context(|| format!("rules document {}", path.display()))
    }
}

/// A CSV row that cannot be mapped to a tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    /// Line in the input file, the header being line 1.
    pub row: u64,
    pub column: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}, column `{}`: {}", self.row, self.column, self.message)
    }
}

impl std::error::Error for SchemaError {}

pub fn parse_datetime(cell: &str) -> Option<f64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(cell) {
        return Some(t.timestamp() as f64);
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(cell, f).ok())
        .map(|t| t.and_utc().timestamp() as f64)
}

pub fn format_datetime(secs: f64) -> String {
    match DateTime::from_timestamp(secs as i64, 0) {
        Some(t) if secs.fract() == 0.0 => t.format("%Y-%m-%d %H:%M:%S").to_string(),
        _ => secs.to_string(),
    }
}

pub fn parse_cell(kind: ColumnKind, cell: &str) -> Result<AttributeValue, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err("empty cell".into());
    }
    let value = match kind {
        ColumnKind::Numeric => {
            let x: f64 = cell.parse().map_err(|_| format!("`{cell}` is not a number"))?;
            AttributeValue::numeric(x)
        }
        ColumnKind::Datetime => {
            let x = parse_datetime(cell).ok_or_else(|| format!("`{cell}` is not a date-time"))?;
            AttributeValue::numeric(x)
        }
        ColumnKind::Categorical => AttributeValue::categorical(cell),
        ColumnKind::Path => AttributeValue::with_path(cell.split('|').map(str::trim)),
    };
    value.map_err(|e| e.to_string())
}

/// Maps CSV records onto tuples using a header row.
#[derive(Debug, Clone)]
pub struct RowMapper {
    subject: usize,
    id: Option<usize>,
    columns: Vec<(usize, ColumnKind, String)>,
}

impl RowMapper {
    pub fn new(mapping: &Mapping, header: &csv::StringRecord) -> Result<Self, SchemaError> {
        let positions: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let find = |name: &str| {
            positions.get(name).copied().ok_or_else(|| SchemaError {
                row: 1,
                column: name.to_owned(),
                message: "missing from header".into(),
            })
        };
        Ok(Self {
            subject: find(&mapping.subject)?,
            id: mapping.id.as_deref().map(find).transpose()?,
            columns: mapping
                .ordered()
                .into_iter()
                .map(|c| Ok((find(&c.name)?, c.kind, c.name.clone())))
                .collect::<Result<_, SchemaError>>()?,
        })
    }

    pub fn tuple(&self, record: &csv::StringRecord, row: u64) -> Result<IncomingTuple, SchemaError> {
        let err = |column: &str, message: String| SchemaError {
            row,
            column: column.to_owned(),
            message,
        };
        let cell = |i: usize, name: &str| record.get(i).ok_or_else(|| err(name, "missing cell".into()));
        let subject = cell(self.subject, "subject")?.trim().to_owned();
        if subject.is_empty() {
            return Err(err("subject", "empty subject key".into()));
        }
        let id = match self.id {
            Some(i) => cell(i, "id")?.trim().to_owned(),
            None => row.to_string(),
        };
        let attributes = self
            .columns
            .iter()
            .map(|(i, kind, name)| parse_cell(*kind, cell(*i, name)?).map_err(|m| err(name, m)))
            .collect::<Result<_, _>>()?;
        Ok(IncomingTuple::new(id, subject, attributes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ksanon_core::GeneralizerKind;

    const DOC: &str = r#"{
        "mapping": {"subject": "who", "columns": [
            {"name": "age", "index": 0, "type": "numeric"},
            {"name": "city", "index": 1, "type": "path"},
            {"name": "when", "index": 2, "type": "datetime"}
        ]},
        "rules": [
            {"index": 0, "kind": "interval", "quasiIdentifier": true},
            {"index": 1, "kind": "dgh", "quasiIdentifier": true}
        ]
    }"#;

    #[test]
    fn parses_document_and_rows() {
        let doc = RulesFile::parse(DOC, None).unwrap();
        assert_eq!(doc.rules.len(), 2);
        assert_eq!(doc.rules[1].kind, GeneralizerKind::CategoricalDgh);
        let header = csv::StringRecord::from(vec!["when", "who", "city", "age"]);
        let m = RowMapper::new(&doc.mapping, &header).unwrap();
        let rec = csv::StringRecord::from(vec!["2016-01-01 01:00:00", "b1", "Paris|France|EU", "34"]);
        let t = m.tuple(&rec, 2).unwrap();
        assert_eq!(t.message_id, "2");
        assert_eq!(t.subject_key, "b1");
        assert_eq!(t.attributes[0], AttributeValue::Numeric(34.0));
        assert_eq!(t.attributes[1].leaf_label(), Some("Paris"));
        assert_eq!(t.attributes[2], AttributeValue::Numeric(1_451_610_000.0));
    }

    #[test]
    fn bad_cells_report_row_and_column() {
        let doc = RulesFile::parse(DOC, None).unwrap();
        let header = csv::StringRecord::from(vec!["who", "age", "city", "when"]);
        let m = RowMapper::new(&doc.mapping, &header).unwrap();
        let rec = csv::StringRecord::from(vec!["b1", "old", "Paris", "2016-01-01 00:00"]);
        let e = m.tuple(&rec, 7).unwrap_err();
        assert_eq!((e.row, e.column.as_str()), (7, "age"));
        let rec = csv::StringRecord::from(vec!["b1", "3", "Paris", "yesterday"]);
        assert_eq!(m.tuple(&rec, 8).unwrap_err().column, "when");
        let short = csv::StringRecord::from(vec!["b1", "3"]);
        assert!(m.tuple(&short, 9).is_err());
    }

    #[test]
    fn header_must_name_mapped_columns() {
        let doc = RulesFile::parse(DOC, None).unwrap();
        let header = csv::StringRecord::from(vec!["who", "age"]);
        assert_eq!(RowMapper::new(&doc.mapping, &header).unwrap_err().column, "city");
    }

    #[test]
    fn rejects_gapped_indices_and_unmapped_rules() {
        let gapped = DOC.replace(r#""index": 2"#, r#""index": 5"#);
        assert!(RulesFile::parse(&gapped, None).is_err());
        let unmapped = DOC.replace(r#"{"index": 1, "kind""#, r#"{"index": 4, "kind""#);
        assert!(RulesFile::parse(&unmapped, None).is_err());
    }

    #[test]
    fn datetimes_round_trip() {
        let t = parse_datetime("2016-03-04 05:06:07").unwrap();
        assert_eq!(format_datetime(t), "2016-03-04 05:06:07");
        assert_eq!(parse_datetime("2016-03-04T05:06:07Z"), Some(t));
        assert_eq!(parse_datetime("2016-03-04 05:06"), Some(t - 7.0));
    }
}
