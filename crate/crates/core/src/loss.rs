//! Information-loss metrics and their aggregation over tuple sets.
//!
//! Categorical generalizations are scored on hierarchy nodes with one of
//! three metrics:
//!
//! * GLM: `(M_p - 1) / (M - 1)` with `M_p` the leaves below the node and `M`
//!   all leaves of the hierarchy;
//! * NCP: `card(u) / |A|` for non-leaf nodes, `|A|` the categorical universe;
//! * PRL: `RNC(u) / RNC(root)` for non-leaf nodes, so frequently requested
//!   values are cheaper to keep precise.
//!
//! Numeric generalizations are intervals scored by the fraction of the
//! attribute domain they span.

use crate::dgh::{Dgh, NodeId, NodeRef};
use crate::error::{Error, Result};
use crate::rules::{GeneralizationRule, GeneralizerKind, LossMetric, RuleSet};
use crate::scalar::Scalar;
use crate::value::AttributeValue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericDomain<T> {
    pub lower: T,
    pub upper: T,
    /// Learned from the stream rather than configured.
    pub observed: bool,
}

impl<T: Scalar> NumericDomain<T> {
    pub fn fixed(lower: T, upper: T) -> Self {
        Self {
            lower,
            upper,
            observed: false,
        }
    }

    pub fn observed_from(value: T) -> Self {
        Self {
            lower: value,
            upper: value,
            observed: true,
        }
    }

    pub fn observe(&mut self, value: T) {
        self.lower = self.lower.min(value);
        self.upper = self.upper.max(value);
    }

    pub fn contains(&self, value: T) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

pub fn glm_ratio<T: Scalar>(covered: usize, total: usize) -> T {
    if total <= 1 {
        return T::zero();
    }
    T::from_count(covered.saturating_sub(1)) / T::from_count(total - 1)
}

/// GLM of a hierarchy node; 0 for single-leaf hierarchies.
pub fn glm_categorical<T: Scalar>(node: NodeRef<'_>) -> T {
    glm_ratio(node.leaf_count(), node.hierarchy().leaf_count_total())
}

/// Fraction of `domain` covered by `[low, high]`; 0 for a single-point domain.
pub fn glm_numeric<T: Scalar>(low: T, high: T, domain: &NumericDomain<T>) -> Result<T> {
    if low > high || low < domain.lower || high > domain.upper {
        return Err(Error::DomainViolation {
            low: low.as_f64(),
            high: high.as_f64(),
            lower: domain.lower.as_f64(),
            upper: domain.upper.as_f64(),
        });
    }
    let width = domain.width();
    if width <= T::zero() {
        return Ok(T::zero());
    }
    Ok(((high - low) / width).min(T::one()))
}

pub fn ncp_ratio<T: Scalar>(card: usize, universe: usize) -> T {
    if card <= 1 {
        return T::zero();
    }
    (T::from_count(card) / T::from_count(universe.max(1))).min(T::one())
}

pub fn ncp_categorical<T: Scalar>(node: NodeRef<'_>, universe: usize) -> T {
    ncp_ratio(node.leaf_count(), universe)
}

/// PRL from raw counts. An unrequested hierarchy scores non-leaf nodes at 1.
pub fn prl_ratio<T: Scalar>(card: usize, node_rnc: u64, root_rnc: u64) -> T {
    if card <= 1 {
        return T::zero();
    }
    if root_rnc == 0 {
        return T::one();
    }
    (T::from_f64_lossy(node_rnc as f64) / T::from_f64_lossy(root_rnc as f64)).min(T::one())
}

pub fn prl<T: Scalar>(node: NodeRef<'_>) -> T {
    prl_ratio(node.leaf_count(), node.rnc(), node.hierarchy().total_requests())
}

/// Loss of generalizing to `node` under `metric`. `universe` overrides the
/// categorical universe size used by NCP.
pub fn categorical_loss<T: Scalar>(metric: LossMetric, node: NodeRef<'_>, universe: Option<usize>) -> T {
    match metric {
        LossMetric::Glm => glm_categorical(node),
        LossMetric::Ncp => ncp_categorical(
            node,
            universe.unwrap_or_else(|| node.hierarchy().leaf_count_total()),
        ),
        LossMetric::Prl => prl(node),
    }
}

/// What a loss evaluation knows about one attribute position.
pub enum AttributeContext<'a, T> {
    Numeric(NumericDomain<T>),
    Hierarchy { dgh: &'a Dgh, universe: Option<usize> },
    Absent,
}

/// Supplies domains and hierarchies to loss evaluation.
pub trait LossContext<T> {
    fn attribute(&self, index: usize) -> AttributeContext<'_, T>;
}

/// Owned context, mostly for direct use of [`tuple_set_loss`].
#[derive(Debug, Clone, Default)]
pub struct StaticContext<T> {
    pub domains: Vec<Option<NumericDomain<T>>>,
    pub hierarchies: Vec<Option<(Dgh, Option<usize>)>>,
}

impl<T: Scalar> StaticContext<T> {
    pub fn with_domain(mut self, index: usize, domain: NumericDomain<T>) -> Self {
        grow(&mut self.domains, index);
        self.domains[index] = Some(domain);
        self
    }

    pub fn with_hierarchy(mut self, index: usize, dgh: Dgh, universe: Option<usize>) -> Self {
        grow(&mut self.hierarchies, index);
        self.hierarchies[index] = Some((dgh, universe));
        self
    }
}

fn grow<X>(v: &mut Vec<Option<X>>, index: usize) {
    if v.len() <= index {
        v.resize_with(index + 1, || None);
    }
}

impl<T: Scalar> LossContext<T> for StaticContext<T> {
    fn attribute(&self, index: usize) -> AttributeContext<'_, T> {
        if let Some(Some((dgh, universe))) = self.hierarchies.get(index) {
            return AttributeContext::Hierarchy {
                dgh,
                universe: *universe,
            };
        }
        match self.domains.get(index) {
            Some(Some(d)) => AttributeContext::Numeric(*d),
            _ => AttributeContext::Absent,
        }
    }
}

/// The generalization a set of values needs at one attribute position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttrSummary<T> {
    Empty,
    Interval { low: T, high: T },
    Node(NodeId),
    /// Member values incompatible with the rule; scored as fully generalized.
    Invalid,
}

impl<T: Scalar> AttrSummary<T> {
    /// Summary of a single value under `rule`.
    pub fn of_value(
        value: &AttributeValue<T>,
        rule: &GeneralizationRule<T>,
        ctx: &AttributeContext<'_, T>,
    ) -> Result<Self> {
        if rule.is_sensitive {
            return Ok(Self::Empty);
        }
        match rule.kind {
            GeneralizerKind::NumericInterval => match value {
                AttributeValue::Numeric(v) => Ok(Self::Interval { low: *v, high: *v }),
                _ => Err(Error::InvalidTuple(format!(
                    "attribute {} expects a numeric value",
                    rule.attribute_index
                ))),
            },
            GeneralizerKind::CategoricalDgh => match ctx {
                AttributeContext::Hierarchy { dgh, .. } => dgh.resolve_value(value).map(Self::Node),
                _ => Err(Error::Invariant(format!(
                    "no hierarchy available for attribute {}",
                    rule.attribute_index
                ))),
            },
            GeneralizerKind::Passthrough | GeneralizerKind::Suppress => Ok(Self::Empty),
        }
    }

    /// Summary of a value independent of any rule: numbers become point
    /// intervals, labels the leaf they name in `dgh`.
    pub fn of_raw(value: &AttributeValue<T>, dgh: Option<&Dgh>) -> Self {
        match value {
            AttributeValue::Numeric(v) => Self::Interval { low: *v, high: *v },
            _ => dgh
                .zip(value.leaf_label())
                .and_then(|(d, label)| d.id_of(label).filter(|&id| d.node(id).is_leaf()))
                .map_or(Self::Invalid, Self::Node),
        }
    }

    /// Smallest generalization covering both summaries.
    pub fn join(self, other: Self, ctx: &AttributeContext<'_, T>) -> Self {
        match (self, other) {
            (Self::Empty, x) | (x, Self::Empty) => x,
            (Self::Invalid, _) | (_, Self::Invalid) => Self::Invalid,
            (Self::Interval { low: a, high: b }, Self::Interval { low: c, high: d }) => {
                Self::Interval {
                    low: a.min(c),
                    high: b.max(d),
                }
            }
            (Self::Node(a), Self::Node(b)) => match ctx {
                AttributeContext::Hierarchy { dgh, .. } => Self::Node(dgh.lca(a, b)),
                _ => Self::Invalid,
            },
            _ => Self::Invalid,
        }
    }

    /// Unweighted loss of this generalization under `rule`.
    pub fn raw_loss(&self, rule: &GeneralizationRule<T>, ctx: &AttributeContext<'_, T>) -> Result<T> {
        if rule.is_sensitive {
            return Ok(T::zero());
        }
        match rule.kind {
            GeneralizerKind::Passthrough => Ok(T::zero()),
            GeneralizerKind::Suppress => Ok(T::one()),
            GeneralizerKind::NumericInterval | GeneralizerKind::CategoricalDgh => match (self, ctx) {
                (Self::Empty, _) => Ok(T::zero()),
                (Self::Invalid, _) => Ok(T::one()),
                (Self::Interval { low, high }, AttributeContext::Numeric(domain)) => {
                    glm_numeric(*low, *high, domain)
                }
                (Self::Node(id), AttributeContext::Hierarchy { dgh, universe }) => Ok(
                    categorical_loss(rule.loss_metric, dgh.node(*id), rule.category_count.or(*universe)),
                ),
                _ => Err(Error::Invariant(format!(
                    "no loss context for attribute {}",
                    rule.attribute_index
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeLoss<T> {
    pub attribute_index: usize,
    pub raw: T,
    pub weight: T,
    pub weighted: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    /// One entry per quasi-identifier taking part in the objective.
    pub per_attribute: Vec<AttributeLoss<T>>,
    /// Mean of the weighted losses; 0 with no contributing attribute.
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    fn from_entries(per_attribute: Vec<AttributeLoss<T>>) -> Self {
        let total = mean(per_attribute.iter().map(|a| a.weighted), per_attribute.len());
        Self { per_attribute, total }
    }
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>, n: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    values.fold(T::zero(), |a, b| a + b) / T::from_count(n)
}

/// Per-position generalization summary of a set of tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSummary<T> {
    attrs: Vec<AttrSummary<T>>,
}

impl<T: Scalar> SetSummary<T> {
    pub fn empty(arity: usize) -> Self {
        Self {
            attrs: vec![AttrSummary::Empty; arity],
        }
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }

    pub fn get(&self, index: usize) -> AttrSummary<T> {
        self.attrs.get(index).copied().unwrap_or(AttrSummary::Empty)
    }

    fn check_arity(&self, values: &[AttributeValue<T>]) -> Result<()> {
        if values.len() != self.attrs.len() {
            return Err(Error::InvalidTuple(format!(
                "arity {} differs from {}",
                values.len(),
                self.attrs.len()
            )));
        }
        Ok(())
    }

    /// Adds one tuple. Values incompatible with their rule are an error.
    pub fn absorb(
        &mut self,
        values: &[AttributeValue<T>],
        rules: &RuleSet<T>,
        ctx: &impl LossContext<T>,
    ) -> Result<()> {
        self.check_arity(values)?;
        let mut next = self.attrs.clone();
        for (i, value) in values.iter().enumerate() {
            let actx = ctx.attribute(i);
            let single = AttrSummary::of_value(value, rules.effective(i), &actx)?;
            next[i] = next[i].join(single, &actx);
        }
        self.attrs = next;
        Ok(())
    }

    /// Adds one tuple, scoring incompatible values as fully generalized.
    pub fn absorb_lenient(
        &mut self,
        values: &[AttributeValue<T>],
        rules: &RuleSet<T>,
        ctx: &impl LossContext<T>,
    ) {
        for (i, value) in values.iter().enumerate().take(self.attrs.len()) {
            let actx = ctx.attribute(i);
            let single = AttrSummary::of_value(value, rules.effective(i), &actx)
                .unwrap_or(AttrSummary::Invalid);
            self.attrs[i] = self.attrs[i].join(single, &actx);
        }
    }

    pub fn join(&self, other: &Self, ctx: &impl LossContext<T>) -> Self {
        let attrs = self
            .attrs
            .iter()
            .zip(&other.attrs)
            .enumerate()
            .map(|(i, (a, b))| a.join(*b, &ctx.attribute(i)))
            .collect();
        Self { attrs }
    }

    pub fn breakdown(&self, rules: &RuleSet<T>, ctx: &impl LossContext<T>) -> Result<LossBreakdown<T>> {
        let mut entries = Vec::new();
        for (i, summary) in self.attrs.iter().enumerate() {
            let rule = rules.effective(i);
            if !rule.contributes_loss() {
                continue;
            }
            let raw = summary.raw_loss(rule, &ctx.attribute(i))?;
            entries.push(AttributeLoss {
                attribute_index: i,
                raw,
                weight: rule.weight,
                weighted: raw * rule.weight,
            });
        }
        Ok(LossBreakdown::from_entries(entries))
    }

    /// Objective value without materializing the breakdown. Attributes whose
    /// loss cannot be evaluated count as fully generalized.
    pub fn total(&self, rules: &RuleSet<T>, ctx: &impl LossContext<T>) -> T {
        self.total_with(None, rules, ctx)
    }

    /// Objective value of this set extended by one candidate tuple.
    pub fn total_with(
        &self,
        candidate: Option<&[AttrSummary<T>]>,
        rules: &RuleSet<T>,
        ctx: &impl LossContext<T>,
    ) -> T {
        let mut sum = T::zero();
        let mut n = 0usize;
        for (i, summary) in self.attrs.iter().enumerate() {
            let rule = rules.effective(i);
            if !rule.contributes_loss() {
                continue;
            }
            let actx = ctx.attribute(i);
            let s = match candidate {
                Some(c) => summary.join(c[i], &actx),
                None => *summary,
            };
            let raw = s.raw_loss(rule, &actx).unwrap_or_else(|_| T::one());
            sum = sum + raw * rule.weight;
            n += 1;
        }
        if n == 0 {
            T::zero()
        } else {
            sum / T::from_count(n)
        }
    }

    /// Folds rule-independent value summaries (see [`AttrSummary::of_raw`]) into the set.
    pub fn extend(&mut self, singles: &[AttrSummary<T>], ctx: &impl LossContext<T>) {
        for (i, (acc, s)) in self.attrs.iter_mut().zip(singles).enumerate() {
            *acc = acc.join(*s, &ctx.attribute(i));
        }
    }

    /// Increase in total loss from folding `candidate` into this set, never negative.
    pub fn enlargement_with(
        &self,
        candidate: &[AttrSummary<T>],
        rules: &RuleSet<T>,
        ctx: &impl LossContext<T>,
    ) -> T {
        let mut now = T::zero();
        let mut with = T::zero();
        let mut n = 0usize;
        for (i, summary) in self.attrs.iter().enumerate() {
            let rule = rules.effective(i);
            if !rule.contributes_loss() {
                continue;
            }
            let actx = ctx.attribute(i);
            let joined = summary.join(candidate[i], &actx);
            let a = summary.raw_loss(rule, &actx).unwrap_or_else(|_| T::one());
            let b = if joined == *summary {
                a
            } else {
                joined.raw_loss(rule, &actx).unwrap_or_else(|_| T::one())
            };
            now = now + a * rule.weight;
            with = with + b * rule.weight;
            n += 1;
        }
        if n == 0 {
            return T::zero();
        }
        let n = T::from_count(n);
        (with / n - now / n).max(T::zero())
    }

    /// Snapshot of this set for scoring many candidates against it.
    pub fn scorer<'a, C: LossContext<T>>(&self, rules: &'a RuleSet<T>, ctx: &'a C) -> Scorer<'a, T> {
        let mut now = T::zero();
        let entries: Vec<_> = self
            .attrs
            .iter()
            .enumerate()
            .filter_map(|(index, summary)| {
                let rule = rules.effective(index);
                if !rule.contributes_loss() {
                    return None;
                }
                let actx = ctx.attribute(index);
                let loss = summary.raw_loss(rule, &actx).unwrap_or_else(|_| T::one());
                now = now + loss * rule.weight;
                Some(ScoreEntry {
                    index,
                    rule,
                    actx,
                    summary: *summary,
                    loss,
                })
            })
            .collect();
        Scorer { entries, now }
    }

    /// Unweighted loss at every position, as stamped on released tuples.
    pub fn attribute_losses(&self, rules: &RuleSet<T>, ctx: &impl LossContext<T>) -> Vec<T> {
        self.attrs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.raw_loss(rules.effective(i), &ctx.attribute(i))
                    .unwrap_or_else(|_| T::one())
            })
            .collect()
    }
}

struct ScoreEntry<'a, T> {
    index: usize,
    rule: &'a GeneralizationRule<T>,
    actx: AttributeContext<'a, T>,
    summary: AttrSummary<T>,
    loss: T,
}

impl<T: Scalar> ScoreEntry<'_, T> {
    fn joined_loss(&self, candidate: AttrSummary<T>) -> T {
        if let (
            AttrSummary::Interval { low, high },
            AttrSummary::Interval { low: cl, high: ch },
            AttributeContext::Numeric(d),
        ) = (self.summary, candidate, &self.actx)
        {
            let (lo, hi) = (low.min(cl), high.max(ch));
            if lo == low && hi == high {
                return self.loss;
            }
            if lo < d.lower || hi > d.upper {
                return T::one();
            }
            let width = d.width();
            return if width <= T::zero() {
                T::zero()
            } else {
                ((hi - lo) / width).min(T::one())
            };
        }
        let joined = self.summary.join(candidate, &self.actx);
        if joined == self.summary {
            self.loss
        } else {
            joined.raw_loss(self.rule, &self.actx).unwrap_or_else(|_| T::one())
        }
    }
}

/// A set summary with its contexts and current loss resolved once, for
/// scoring many candidates against the same set.
pub struct Scorer<'a, T> {
    entries: Vec<ScoreEntry<'a, T>>,
    now: T,
}

impl<T: Scalar> Scorer<'_, T> {
    /// Same value as [`SetSummary::enlargement_with`].
    pub fn enlargement(&self, candidate: &[AttrSummary<T>]) -> T {
        if self.entries.is_empty() {
            return T::zero();
        }
        let mut with = T::zero();
        for e in &self.entries {
            with = with + e.joined_loss(candidate[e.index]) * e.rule.weight;
        }
        let n = T::from_count(self.entries.len());
        (with / n - self.now / n).max(T::zero())
    }
}

/// Loss of generalizing `tuples` together: numeric attributes to the
/// `[min, max]` envelope, categorical ones to the lowest common ancestor.
pub fn tuple_set_loss<'t, T: Scalar + 't>(
    tuples: impl IntoIterator<Item = &'t [AttributeValue<T>]>,
    rules: &RuleSet<T>,
    ctx: &impl LossContext<T>,
) -> Result<LossBreakdown<T>> {
    let mut iter = tuples.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Invariant("loss of an empty tuple set".into()))?;
    let mut summary = SetSummary::empty(first.len());
    summary.absorb(first, rules, ctx)?;
    for t in iter {
        summary.absorb(t, rules, ctx)?;
    }
    summary.breakdown(rules, ctx)
}

/// Increase in total loss from adding `candidate` to `cluster`, never negative.
pub fn enlargement<'t, T: Scalar + 't>(
    cluster_loss_now: &LossBreakdown<T>,
    cluster: impl IntoIterator<Item = &'t [AttributeValue<T>]>,
    candidate: &'t [AttributeValue<T>],
    rules: &RuleSet<T>,
    ctx: &impl LossContext<T>,
) -> Result<T> {
    let mut members = cluster.into_iter().peekable();
    if members.peek().is_none() {
        return Ok(T::zero());
    }
    let with = tuple_set_loss(members.chain(std::iter::once(candidate)), rules, ctx)?;
    Ok((with.total - cluster_loss_now.total).max(T::zero()))
}
