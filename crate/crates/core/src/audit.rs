//! Checks a release stream against the anonymity guarantees.

use std::collections::{BTreeMap, HashSet};

use crate::release::{ClusterId, GeneralizedValue, ReleasedTuple};
use crate::rules::RuleSet;
use crate::scalar::Scalar;
use crate::value::ValueKey;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub tuples: usize,
    pub clusters: usize,
    pub suppressed_clusters: usize,
    pub violations: Vec<String>,
}

impl Audit {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits `released` for `k` subjects and `l` sensitive values per
/// non-suppressed cluster, uniform quasi-identifier output within each
/// cluster, losses in `[0, 1]` and unique message ids. Sensitive and
/// quasi-identifier positions are taken from `rules`.
pub fn audit_releases<T: Scalar>(released: &[ReleasedTuple<T>], rules: &RuleSet<T>, k: usize, l: usize) -> Audit {
    let mut audit = Audit {
        tuples: released.len(),
        ..Audit::default()
    };
    let mut seen = HashSet::new();
    let mut clusters: BTreeMap<ClusterId, Vec<&ReleasedTuple<T>>> = BTreeMap::new();
    for r in released {
        if !seen.insert(r.message_id.as_str()) {
            audit.violations.push(format!("message {} released twice", r.message_id));
        }
        if let Some(x) = r.attribute_loss.iter().find(|x| !(**x >= T::zero() && **x <= T::one())) {
            audit.violations.push(format!("message {}: loss {x} outside [0, 1]", r.message_id));
        }
        clusters.entry(r.cluster_id).or_default().push(r);
    }
    audit.clusters = clusters.len();
    for (id, members) in &clusters {
        let suppressed = members[0].suppressed;
        if members.iter().any(|m| m.suppressed != suppressed) {
            audit.violations.push(format!("cluster {id}: mixed suppression flags"));
        }
        if suppressed {
            audit.suppressed_clusters += 1;
        }
        let arity = members[0].generalized.len();
        for i in (0..arity).filter(|&i| rules.effective(i).is_quasi_identifier) {
            if members.iter().any(|m| m.generalized.get(i) != members[0].generalized.get(i)) {
                audit.violations.push(format!("cluster {id}: attribute {i} not uniform"));
            }
        }
        if suppressed {
            continue;
        }
        let subjects: HashSet<&str> = members.iter().map(|m| m.subject_key.as_str()).collect();
        if subjects.len() < k {
            audit
                .violations
                .push(format!("cluster {id}: {} subjects < k = {k}", subjects.len()));
        }
        for i in rules.sensitive_indices().filter(|&i| i < arity) {
            let values: HashSet<ValueKey> = members
                .iter()
                .filter_map(|m| match &m.generalized[i] {
                    GeneralizedValue::Exact(v) => Some(v.key()),
                    _ => None,
                })
                .collect();
            if values.len() < l {
                audit.violations.push(format!(
                    "cluster {id}: attribute {i} has {} distinct values < l = {l}",
                    values.len()
                ));
            }
        }
    }
    audit
}
