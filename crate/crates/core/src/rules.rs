//! Per-attribute generalization rules and the JSON rules document.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::value::MAX_ATTRIBUTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneralizerKind {
    #[serde(rename = "interval")]
    NumericInterval,
    #[serde(rename = "dgh")]
    CategoricalDgh,
    Passthrough,
    Suppress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMetric {
    #[default]
    Glm,
    Ncp,
    Prl,
}

/// Seed hierarchy attached to a categorical rule, as nested `{label, children}` objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySeed {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HierarchySeed>,
}

impl HierarchySeed {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<HierarchySeed>) -> Self {
        Self {
            label: label.into(),
            children,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationRule<T> {
    pub attribute_index: usize,
    pub kind: GeneralizerKind,
    /// Only consulted by `CategoricalDgh`; intervals always use the domain ratio.
    pub loss_metric: LossMetric,
    pub weight: T,
    pub is_sensitive: bool,
    pub is_quasi_identifier: bool,
    /// Fixed `[lower, upper]` bounds; observed stream bounds are used when absent.
    pub domain: Option<(T, T)>,
    /// Size of the categorical universe for NCP; the hierarchy's leaf count when absent.
    pub category_count: Option<usize>,
    pub hierarchy: Option<Arc<HierarchySeed>>,
}

impl<T: Scalar> GeneralizationRule<T> {
    pub fn new(attribute_index: usize, kind: GeneralizerKind) -> Self {
        Self {
            attribute_index,
            kind,
            loss_metric: LossMetric::Glm,
            weight: T::one(),
            is_sensitive: false,
            is_quasi_identifier: false,
            domain: None,
            category_count: None,
            hierarchy: None,
        }
    }

    pub fn quasi_identifier(mut self) -> Self {
        self.is_quasi_identifier = true;
        self
    }

    pub fn sensitive(mut self) -> Self {
        self.is_sensitive = true;
        self
    }

    pub fn with_metric(mut self, metric: LossMetric) -> Self {
        self.loss_metric = metric;
        self
    }

    pub fn with_weight(mut self, weight: T) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_domain(mut self, lower: T, upper: T) -> Self {
        self.domain = Some((lower, upper));
        self
    }

    pub fn with_category_count(mut self, count: usize) -> Self {
        self.category_count = Some(count);
        self
    }

    pub fn with_hierarchy(mut self, seed: HierarchySeed) -> Self {
        self.hierarchy = Some(Arc::new(seed));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let at = self.attribute_index;
        if at >= MAX_ATTRIBUTES {
            return Err(Error::Invariant(format!(
                "attribute index {at} exceeds the maximum position {}",
                MAX_ATTRIBUTES - 1
            )));
        }
        if !(self.weight >= T::zero() && self.weight <= T::one()) {
            return Err(Error::Invariant(format!(
                "weight {} of attribute {at} outside [0, 1]",
                self.weight
            )));
        }
        if self.is_sensitive && self.is_quasi_identifier {
            return Err(Error::Invariant(format!(
                "attribute {at} cannot be both sensitive and a quasi-identifier"
            )));
        }
        if let Some((lo, hi)) = self.domain {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Invariant(format!(
                    "domain [{lo}, {hi}] of attribute {at} is not a finite ordered range"
                )));
            }
        }
        if self.category_count == Some(0) {
            return Err(Error::Invariant(format!(
                "category count of attribute {at} must be positive"
            )));
        }
        Ok(())
    }

    /// The fail-closed rule applied to positions nobody configured.
    pub fn default_for(attribute_index: usize) -> Self {
        Self::new(attribute_index, GeneralizerKind::Suppress)
    }

    /// Whether this attribute takes part in the clustering objective.
    pub fn contributes_loss(&self) -> bool {
        self.is_quasi_identifier && !self.is_sensitive && self.kind != GeneralizerKind::Passthrough
    }
}

/// The rules in force, at most one per attribute position.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet<T> {
    configured: BTreeMap<usize, GeneralizationRule<T>>,
    /// Effective rule for every position, defaults included.
    dense: Vec<GeneralizationRule<T>>,
}

impl<T: Scalar> Default for RuleSet<T> {
    fn default() -> Self {
        Self {
            configured: BTreeMap::new(),
            dense: (0..MAX_ATTRIBUTES)
                .map(GeneralizationRule::default_for)
                .collect(),
        }
    }
}

impl<T: Scalar> RuleSet<T> {
    /// Builds a rule set; later rules for the same index replace earlier ones.
    pub fn new(rules: impl IntoIterator<Item = GeneralizationRule<T>>) -> Result<Self> {
        let mut set = Self::default();
        set.update(rules)?;
        Ok(set)
    }

    /// Index-replacement update. On error the set is left unchanged.
    pub fn update(&mut self, rules: impl IntoIterator<Item = GeneralizationRule<T>>) -> Result<()> {
        let incoming: Vec<_> = rules.into_iter().collect();
        incoming.iter().try_for_each(GeneralizationRule::validate)?;
        for rule in incoming {
            self.dense[rule.attribute_index] = rule.clone();
            self.configured.insert(rule.attribute_index, rule);
        }
        Ok(())
    }

    pub fn get(&self, attribute_index: usize) -> Option<&GeneralizationRule<T>> {
        self.configured.get(&attribute_index)
    }

    /// The configured rule, or the suppressing default.
    pub fn effective(&self, attribute_index: usize) -> &GeneralizationRule<T> {
        &self.dense[attribute_index]
    }

    /// Configured rules in index order.
    pub fn iter(&self) -> impl Iterator<Item = &GeneralizationRule<T>> {
        self.configured.values()
    }

    pub fn len(&self) -> usize {
        self.configured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configured.is_empty()
    }

    pub fn sensitive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.configured
            .values()
            .filter(|r| r.is_sensitive)
            .map(|r| r.attribute_index)
    }

    pub fn into_vec(self) -> Vec<GeneralizationRule<T>> {
        self.configured.into_values().collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct RuleEntry {
    index: usize,
    kind: GeneralizerKind,
    #[serde(default)]
    metric: LossMetric,
    #[serde(default = "one")]
    weight: f64,
    #[serde(default)]
    sensitive: bool,
    #[serde(default)]
    quasi_identifier: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hierarchy: Option<HierarchyRef>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum HierarchyRef {
    Inline(HierarchySeed),
    File(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Document {
    Bare(Vec<serde_json::Value>),
    Wrapped { rules: Vec<serde_json::Value> },
}

/// Parses a rules document: a JSON array of rule objects, or an object whose
/// `rules` field holds that array. Returned rules are sorted by index with
/// duplicates resolved last-wins.
pub fn parse_rule_document<T: Scalar>(text: &str) -> Result<Vec<GeneralizationRule<T>>> {
    parse_rule_document_with(text, |path| {
        Err(Error::Invariant(format!(
            "hierarchy file `{path}` referenced but no file resolver supplied"
        )))
    })
}

/// Like [`parse_rule_document`], resolving string-valued `hierarchy` fields with `resolve`.
pub fn parse_rule_document_with<T: Scalar>(
    text: &str,
    mut resolve: impl FnMut(&str) -> Result<HierarchySeed>,
) -> Result<Vec<GeneralizationRule<T>>> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    let raw = match doc {
        Document::Bare(v) | Document::Wrapped { rules: v } => v,
    };
    let mut rules = Vec::with_capacity(raw.len());
    for (position, value) in raw.into_iter().enumerate() {
        let entry: RuleEntry = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: entry_line(text, position),
            field: format!("rules[{position}]"),
            message: e.to_string(),
        })?;
        rules.push(entry_to_rule(entry, &mut resolve)?);
    }
    Ok(RuleSet::new(rules)?.into_vec())
}

/// Best-effort line of the `position`-th top-level rule object.
fn entry_line(text: &str, position: usize) -> usize {
    let mut depth = 0usize;
    let mut seen = 0usize;
    let mut line = 1usize;
    let mut in_string = false;
    let mut escaped = false;
    let array_depth = if text.trim_start().starts_with('{') { 2 } else { 1 };
    for c in text.chars() {
        if c == '\n' {
            line += 1;
        }
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => {
                if c == '{' && depth == array_depth {
                    if seen == position {
                        return line;
                    }
                    seen += 1;
                }
                depth += 1;
            }
            '}' | ']' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    line
}

fn entry_to_rule<T: Scalar>(
    entry: RuleEntry,
    resolve: &mut impl FnMut(&str) -> Result<HierarchySeed>,
) -> Result<GeneralizationRule<T>> {
    let hierarchy = match entry.hierarchy {
        None => None,
        Some(HierarchyRef::Inline(seed)) => Some(Arc::new(seed)),
        Some(HierarchyRef::File(path)) => Some(Arc::new(resolve(&path)?)),
    };
    let rule = GeneralizationRule {
        attribute_index: entry.index,
        kind: entry.kind,
        loss_metric: entry.metric,
        weight: T::from_f64_lossy(entry.weight),
        is_sensitive: entry.sensitive,
        is_quasi_identifier: entry.quasi_identifier,
        domain: entry
            .domain
            .map(|[lo, hi]| (T::from_f64_lossy(lo), T::from_f64_lossy(hi))),
        category_count: entry.categories,
        hierarchy,
    };
    rule.validate()?;
    Ok(rule)
}

/// Serializes rules back into a document accepted by [`parse_rule_document`].
/// Hierarchies are written inline.
pub fn serialize_rules<T: Scalar>(rules: &[GeneralizationRule<T>]) -> String {
    let entries: Vec<RuleEntry> = rules
        .iter()
        .map(|r| RuleEntry {
            index: r.attribute_index,
            kind: r.kind,
            metric: r.loss_metric,
            weight: r.weight.as_f64(),
            sensitive: r.is_sensitive,
            quasi_identifier: r.is_quasi_identifier,
            domain: r.domain.map(|(lo, hi)| [lo.as_f64(), hi.as_f64()]),
            categories: r.category_count,
            hierarchy: r
                .hierarchy
                .as_ref()
                .map(|h| HierarchyRef::Inline(HierarchySeed::clone(h))),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("rule entries serialize")
}
