//! CSV rendering of released tuples.

use std::io::Write;

use ksanon_core::{AttributeValue, GeneralizedValue, ReleasedTuple};

use crate::schema::{format_datetime, ColumnKind, Mapping};

pub fn render_scalar(kind: ColumnKind, x: f64) -> String {
    match kind {
        ColumnKind::Datetime => format_datetime(x),
        _ => x.to_string(),
    }
}

pub fn render_value(kind: ColumnKind, value: &GeneralizedValue) -> String {
    match value {
        GeneralizedValue::Interval { low, high } => {
            format!("[{}..{}]", render_scalar(kind, *low), render_scalar(kind, *high))
        }
        GeneralizedValue::Node { label, .. } => label.clone(),
        GeneralizedValue::Exact(v) => match v {
            AttributeValue::Numeric(x) => render_scalar(kind, *x),
            AttributeValue::Categorical(s) => s.clone(),
            AttributeValue::CategoricalWithPath(p) => p.join("|"),
        },
        GeneralizedValue::Redacted => "*".into(),
    }
}

pub fn header(mapping: &Mapping) -> Vec<String> {
    let cols = mapping.ordered();
    let mut h: Vec<String> = ["id", "subject", "cluster", "suppressed"].map(String::from).into();
    h.extend(cols.iter().map(|c| c.name.clone()));
    h.extend(cols.iter().map(|c| format!("loss_{}", c.name)));
    h
}

pub fn record(mapping: &Mapping, r: &ReleasedTuple) -> Vec<String> {
    let cols = mapping.ordered();
    let mut row = vec![
        r.message_id.clone(),
        r.subject_key.clone(),
        r.cluster_id.to_string(),
        r.suppressed.to_string(),
    ];
    row.extend(cols.iter().map(|c| match r.generalized.get(c.index) {
        Some(v) => render_value(c.kind, v),
        None => String::new(),
    }));
    row.extend(
        cols.iter()
            .map(|c| r.attribute_loss.get(c.index).map_or_else(String::new, f64::to_string)),
    );
    row
}

pub fn write_csv<W: Write>(out: W, mapping: &Mapping, released: &[ReleasedTuple]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(mapping))?;
    for r in released {
        w.write_record(record(mapping, r))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn renders_each_form() {
        let iv = GeneralizedValue::Interval { low: 1.5, high: 4.0 };
        assert_eq!(render_value(ColumnKind::Numeric, &iv), "[1.5..4]");
        let node = GeneralizedValue::Node {
            label: "EU".into(),
            leaves: BTreeSet::from(["Paris".to_string(), "Madrid".to_string()]),
        };
        assert_eq!(render_value(ColumnKind::Path, &node), "EU");
        assert_eq!(render_value(ColumnKind::Numeric, &GeneralizedValue::Redacted), "*");
        let path = AttributeValue::with_path(["Paris", "France"]).unwrap();
        assert_eq!(render_value(ColumnKind::Path, &GeneralizedValue::Exact(path)), "Paris|France");
        let t = GeneralizedValue::Interval {
            low: 1_451_606_400.0,
            high: 1_451_610_000.0,
        };
        assert_eq!(
            render_value(ColumnKind::Datetime, &t),
            "[2016-01-01 00:00:00..2016-01-01 01:00:00]"
        );
    }
}
