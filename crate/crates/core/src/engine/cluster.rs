use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use crate::dgh::Dgh;
use crate::loss::{AttrSummary, AttributeContext, LossContext, NumericDomain, SetSummary};
use crate::release::{ClusterId, GeneralizedValue, ReleasedTuple};
use crate::rules::{GeneralizationRule, GeneralizerKind, RuleSet};
use crate::scalar::Scalar;
use crate::value::{DataTuple, ValueKey};

#[derive(Debug, Clone)]
pub(crate) struct Member<T> {
    pub tuple: DataTuple<T>,
    /// Rule-independent summary of each value; node ids are shared by every
    /// hierarchy instance of the attribute.
    pub singles: Vec<AttrSummary<T>>,
    pub assigned_at: Instant,
}

#[derive(Debug, Clone)]
pub(crate) struct Cluster<T> {
    pub id: ClusterId,
    /// Arrival index of the oldest member.
    pub created_at: u64,
    pub rules: Arc<RuleSet<T>>,
    pub members: Vec<Member<T>>,
    pub subjects: HashMap<String, u32>,
    /// Own hierarchy instance per position generalized through one.
    pub dghs: Vec<Option<Dgh>>,
    pub summary: SetSummary<T>,
}

/// Loss context of one cluster: its hierarchies, its rules' fixed domains,
/// and the stream-wide observed domains otherwise.
pub(crate) struct ClusterCtx<'a, T> {
    pub dghs: &'a [Option<Dgh>],
    pub rules: &'a RuleSet<T>,
    pub domains: &'a [Option<NumericDomain<T>>],
}

impl<T: Scalar> LossContext<T> for ClusterCtx<'_, T> {
    fn attribute(&self, index: usize) -> AttributeContext<'_, T> {
        let rule = self.rules.effective(index);
        match rule.kind {
            GeneralizerKind::CategoricalDgh => match self.dghs.get(index) {
                Some(Some(dgh)) => AttributeContext::Hierarchy {
                    dgh,
                    universe: rule.category_count,
                },
                _ => AttributeContext::Absent,
            },
            GeneralizerKind::NumericInterval => rule
                .domain
                .map(|(lo, hi)| NumericDomain::fixed(lo, hi))
                .or_else(|| self.domains.get(index).copied().flatten())
                .map_or(AttributeContext::Absent, AttributeContext::Numeric),
            _ => AttributeContext::Absent,
        }
    }
}

pub(crate) fn uses_hierarchy<T: Scalar>(rule: &GeneralizationRule<T>) -> bool {
    rule.kind == GeneralizerKind::CategoricalDgh && !rule.is_sensitive
}

impl<T: Scalar> Cluster<T> {
    pub fn new(
        id: ClusterId,
        created_at: u64,
        rules: Arc<RuleSet<T>>,
        arity: usize,
        global: &[Option<Dgh>],
    ) -> Self {
        let dghs = (0..arity)
            .map(|i| {
                if !uses_hierarchy(rules.effective(i)) {
                    return None;
                }
                global.get(i).cloned().flatten().map(|mut d| {
                    d.reset_coverage();
                    d
                })
            })
            .collect();
        Self {
            id,
            created_at,
            rules,
            members: Vec::new(),
            subjects: HashMap::new(),
            dghs,
            summary: SetSummary::empty(arity),
        }
    }

    pub fn ctx<'a>(&'a self, domains: &'a [Option<NumericDomain<T>>]) -> ClusterCtx<'a, T> {
        ClusterCtx {
            dghs: &self.dghs,
            rules: &self.rules,
            domains,
        }
    }

    pub fn subject_count(&self) -> usize {
        self.subjects.len()
    }

    pub fn enlargement(&self, candidate: &[AttrSummary<T>], domains: &[Option<NumericDomain<T>>]) -> T {
        if self.members.is_empty() {
            return T::zero();
        }
        self.summary
            .enlargement_with(candidate, &self.rules, &self.ctx(domains))
    }

    pub fn push(&mut self, member: Member<T>, domains: &[Option<NumericDomain<T>>]) {
        for (dgh, s) in self.dghs.iter_mut().zip(&member.singles) {
            if let (Some(d), AttrSummary::Node(id)) = (dgh, s) {
                d.observe(*id);
            }
        }
        let ctx = ClusterCtx {
            dghs: &self.dghs,
            rules: &self.rules,
            domains,
        };
        self.summary.extend(&member.singles, &ctx);
        *self.subjects.entry(member.tuple.subject_key.clone()).or_default() += 1;
        self.members.push(member);
    }

    /// New cluster over `members` sharing this cluster's rules and request
    /// counts, with coverage recounted.
    pub fn regroup(&self, id: ClusterId, members: Vec<Member<T>>, domains: &[Option<NumericDomain<T>>]) -> Self {
        let mut dghs = self.dghs.clone();
        for d in dghs.iter_mut().flatten() {
            d.reset_coverage();
        }
        let mut out = Self {
            id,
            created_at: members.first().map_or(self.created_at, |m| m.tuple.arrival_index),
            rules: Arc::clone(&self.rules),
            members: Vec::with_capacity(members.len()),
            subjects: HashMap::new(),
            dghs,
            summary: SetSummary::empty(self.summary.arity()),
        };
        for m in members {
            for (dgh, s) in out.dghs.iter_mut().zip(&m.singles) {
                if let (Some(d), AttrSummary::Node(id)) = (dgh, s) {
                    d.cover(*id);
                }
            }
            let ctx = ClusterCtx {
                dghs: &out.dghs,
                rules: &out.rules,
                domains,
            };
            out.summary.extend(&m.singles, &ctx);
            *out.subjects.entry(m.tuple.subject_key.clone()).or_default() += 1;
            out.members.push(m);
        }
        out
    }
}

/// Whether every sensitive position shows at least `l` distinct values.
pub(crate) fn is_diverse<'a, T: Scalar + 'a>(
    members: impl Iterator<Item = &'a Member<T>> + Clone,
    sensitive: &BTreeSet<usize>,
    l: usize,
) -> bool {
    if l <= 1 {
        return true;
    }
    sensitive.iter().all(|&i| {
        let mut seen: HashSet<ValueKey> = HashSet::new();
        for m in members.clone() {
            if let Some(v) = m.tuple.attributes.get(i) {
                seen.insert(v.key());
                if seen.len() >= l {
                    return true;
                }
            }
        }
        false
    })
}

/// Per-position output of a released cluster.
enum Slot<T> {
    Shared(GeneralizedValue<T>),
    Own,
}

pub(crate) struct Generalized<T> {
    slots: Vec<Slot<T>>,
    pub losses: Vec<T>,
    /// Objective value of the release.
    pub total: T,
}

/// Generalization of `summary` under `rules`, evaluated in `ctx`.
pub(crate) fn generalize<T: Scalar>(
    summary: &SetSummary<T>,
    rules: &RuleSet<T>,
    ctx: &ClusterCtx<'_, T>,
    suppressed: bool,
) -> Generalized<T> {
    let arity = summary.arity();
    let mut slots = Vec::with_capacity(arity);
    let mut losses = Vec::with_capacity(arity);
    for i in 0..arity {
        let rule = rules.effective(i);
        let (slot, loss) = if rule.is_sensitive {
            (Slot::Own, T::zero())
        } else if suppressed {
            maximal(rule, &ctx.attribute(i))
        } else {
            regular(summary.get(i), rule, &ctx.attribute(i))
        };
        slots.push(slot);
        losses.push(loss);
    }
    let contributing: Vec<T> = (0..arity)
        .filter(|&i| rules.effective(i).contributes_loss())
        .map(|i| losses[i] * rules.effective(i).weight)
        .collect();
    let total = if contributing.is_empty() {
        T::zero()
    } else {
        contributing.iter().fold(T::zero(), |a, b| a + *b) / T::from_count(contributing.len())
    };
    Generalized { slots, losses, total }
}

fn regular<T: Scalar>(
    summary: AttrSummary<T>,
    rule: &GeneralizationRule<T>,
    actx: &AttributeContext<'_, T>,
) -> (Slot<T>, T) {
    match rule.kind {
        GeneralizerKind::Passthrough => return (Slot::Own, T::zero()),
        GeneralizerKind::Suppress => return (Slot::Shared(GeneralizedValue::Redacted), T::one()),
        _ => {}
    }
    let loss = summary.raw_loss(rule, actx).unwrap_or_else(|_| T::one());
    let value = match (summary, actx) {
        (AttrSummary::Interval { low, high }, _) if rule.kind == GeneralizerKind::NumericInterval => {
            GeneralizedValue::Interval { low, high }
        }
        (AttrSummary::Node(id), AttributeContext::Hierarchy { dgh, .. })
            if rule.kind == GeneralizerKind::CategoricalDgh =>
        {
            node_value(dgh, id)
        }
        _ => return (Slot::Shared(GeneralizedValue::Redacted), T::one()),
    };
    (Slot::Shared(value), loss)
}

fn maximal<T: Scalar>(rule: &GeneralizationRule<T>, actx: &AttributeContext<'_, T>) -> (Slot<T>, T) {
    let value = match (rule.kind, actx) {
        (GeneralizerKind::Passthrough, _) if !rule.is_quasi_identifier => return (Slot::Own, T::zero()),
        (GeneralizerKind::NumericInterval, AttributeContext::Numeric(d)) => GeneralizedValue::Interval {
            low: d.lower,
            high: d.upper,
        },
        (GeneralizerKind::CategoricalDgh, AttributeContext::Hierarchy { dgh, .. }) => match dgh.root_id() {
            Some(root) => node_value(dgh, root),
            None => GeneralizedValue::Redacted,
        },
        _ => GeneralizedValue::Redacted,
    };
    (Slot::Shared(value), T::one())
}

fn node_value<T>(dgh: &Dgh, id: crate::dgh::NodeId) -> GeneralizedValue<T> {
    GeneralizedValue::Node {
        label: dgh.node(id).label().to_owned(),
        leaves: dgh.leaves_under(id),
    }
}

impl<T: Scalar> Generalized<T> {
    pub fn release(
        &self,
        member: Member<T>,
        cluster_id: ClusterId,
        suppressed: bool,
        egress_index: u64,
        egress: Instant,
    ) -> ReleasedTuple<T> {
        let generalized = self
            .slots
            .iter()
            .zip(&member.tuple.attributes)
            .map(|(slot, own)| match slot {
                Slot::Shared(v) => v.clone(),
                Slot::Own => GeneralizedValue::Exact(own.clone()),
            })
            .collect();
        ReleasedTuple {
            message_id: member.tuple.message_id,
            subject_key: member.tuple.subject_key,
            generalized,
            cluster_id,
            suppressed,
            attribute_loss: self.losses.clone(),
            arrival_index: member.tuple.arrival_index,
            egress_index,
            ingress: member.tuple.ingress,
            egress,
        }
    }
}
