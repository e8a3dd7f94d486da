//! The clustering state machine.
//!
//! Every ingested tuple joins the open cluster it enlarges least, or opens a
//! new one when that enlargement exceeds `tau` and fewer than `beta`
//! clusters are open. Once the oldest buffered tuple has waited `delta - 1`
//! further ingestions its cluster is released: split first when it covers
//! at least `2k` subjects, merged with its cheapest partners when it misses
//! `k` or `l`, and suppressed when no partner set suffices.

mod cluster;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::config::{validate_config, EngineConfig, RncClear, Tau};
use crate::dgh::Dgh;
use crate::error::{Error, Result};
use crate::loss::{AttrSummary, NumericDomain, SetSummary};
use crate::release::{ClusterId, ReleasedTuple};
use crate::rules::{GeneralizationRule, GeneralizerKind, RuleSet};
use crate::scalar::{RunningMean, Scalar};
use crate::value::{AttributeValue, DataTuple, IncomingTuple, MAX_ATTRIBUTES};

use cluster::{generalize, is_diverse, uses_hierarchy, Cluster, ClusterCtx, Member};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    AssignTo(ClusterId),
    CreateNew,
}

/// Accumulated time spent in the two phases of the algorithm and between them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Timings {
    pub best_selection: Duration,
    pub best_selection_calls: u64,
    /// From the start of a release decision to the last tuple it emits.
    pub delay_constraint: Duration,
    pub delay_constraint_calls: u64,
    /// Time released tuples spent in their cluster before the release started.
    pub wait_time: Duration,
    pub waited_tuples: u64,
}

impl Timings {
    pub fn absorb(&mut self, other: &Timings) {
        self.best_selection += other.best_selection;
        self.best_selection_calls += other.best_selection_calls;
        self.delay_constraint += other.delay_constraint;
        self.delay_constraint_calls += other.delay_constraint_calls;
        self.wait_time += other.wait_time;
        self.waited_tuples += other.waited_tuples;
    }
}

/// One single-threaded anonymizer instance.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    config: EngineConfig<T>,
    partition: u32,
    rules: Option<Arc<RuleSet<T>>>,
    arity: Option<usize>,
    /// Observed value range per position.
    domains: Vec<Option<NumericDomain<T>>>,
    /// Stream-wide hierarchy per position; every cluster hierarchy is a copy
    /// extended in lockstep, so node ids agree across all of them.
    global: Vec<Option<Dgh>>,
    clusters: Vec<Cluster<T>>,
    buffer: BTreeMap<u64, ClusterId>,
    next_cluster: u64,
    ingested: u64,
    released_loss: RunningMean<T>,
    timings: Timings,
}

impl<T: Scalar> Engine<T> {
    pub fn new(config: EngineConfig<T>) -> Result<Self> {
        Ok(Self {
            config: validate_config(config)?,
            partition: 0,
            rules: None,
            arity: None,
            domains: vec![None; MAX_ATTRIBUTES],
            global: vec![None; MAX_ATTRIBUTES],
            clusters: Vec::new(),
            buffer: BTreeMap::new(),
            next_cluster: 0,
            ingested: 0,
            released_loss: RunningMean::default(),
            timings: Timings::default(),
        })
    }

    /// Tags cluster ids with `partition`.
    pub fn with_partition(mut self, partition: u32) -> Self {
        self.partition = partition;
        self
    }

    pub fn config(&self) -> &EngineConfig<T> {
        &self.config
    }

    pub fn partition(&self) -> u32 {
        self.partition
    }

    pub fn rules(&self) -> Option<&RuleSet<T>> {
        self.rules.as_deref()
    }

    pub fn timings(&self) -> &Timings {
        &self.timings
    }

    pub fn ingested(&self) -> u64 {
        self.ingested
    }

    pub fn open_cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn open_cluster_ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.iter().map(|c| c.id)
    }

    /// Rules a still open cluster was created with.
    pub fn cluster_rules(&self, id: ClusterId) -> Option<&RuleSet<T>> {
        self.clusters.iter().find(|c| c.id == id).map(|c| &*c.rules)
    }

    /// Buffered tuples as (arrival index, cluster) in arrival order.
    pub fn buffered(&self) -> impl Iterator<Item = (u64, ClusterId)> + '_ {
        self.buffer.iter().map(|(a, c)| (*a, *c))
    }

    pub fn buffered_count(&self) -> usize {
        self.buffer.len()
    }

    /// Ingestions since the oldest buffered tuple arrived, itself included.
    pub fn max_buffered_age(&self) -> Option<u64> {
        self.buffer.keys().next().map(|a| self.ingested - a)
    }

    /// Current join threshold.
    pub fn tau(&self) -> T {
        match self.config.tau {
            Tau::Fixed(t) => t,
            Tau::Auto => self.released_loss.mean().unwrap_or_else(T::infinity),
        }
    }

    /// Installs rules by index replacement. Clusters already open keep the
    /// rules they were created with.
    pub fn apply_rules(&mut self, rules: impl IntoIterator<Item = GeneralizationRule<T>>) -> Result<()> {
        let rules: Vec<_> = rules.into_iter().collect();
        let (set, global) = self.prepare_rules(&rules)?;
        for cluster in &mut self.clusters {
            for rule in &rules {
                if let (Some(seed), Some(Some(dgh))) = (&rule.hierarchy, cluster.dghs.get_mut(rule.attribute_index)) {
                    dgh.merge_seed(seed)?;
                }
            }
        }
        self.global = global;
        self.rules = Some(Arc::new(set));
        Ok(())
    }

    /// Whether [`Engine::apply_rules`] would accept `rules`, without applying them.
    pub fn check_rules(&self, rules: &[GeneralizationRule<T>]) -> Result<()> {
        self.prepare_rules(rules).map(drop)
    }

    #[allow(clippy::type_complexity)]
    fn prepare_rules(&self, rules: &[GeneralizationRule<T>]) -> Result<(RuleSet<T>, Vec<Option<Dgh>>)> {
        let mut set = self.rules.as_deref().cloned().unwrap_or_default();
        set.update(rules.iter().cloned())?;
        let mut global = self.global.clone();
        for rule in rules {
            if let (GeneralizerKind::CategoricalDgh, Some(seed)) = (rule.kind, &rule.hierarchy) {
                global[rule.attribute_index]
                    .get_or_insert_with(Dgh::new)
                    .merge_seed(seed)?;
            }
        }
        for rule in set.iter() {
            if uses_hierarchy(rule) {
                global[rule.attribute_index].get_or_insert_with(Dgh::new);
            }
        }
        Ok((set, global))
    }

    /// Where a tuple would go under the current state, without ingesting it.
    pub fn best_selection(&self, tuple: &IncomingTuple<T>) -> Result<Decision> {
        if self.rules.is_none() {
            return Err(Error::NoRules);
        }
        let singles: Vec<_> = tuple
            .attributes
            .iter()
            .enumerate()
            .map(|(i, v)| AttrSummary::of_raw(v, self.global[i].as_ref()))
            .collect();
        Ok(match self.select(&singles) {
            Some(i) => Decision::AssignTo(self.clusters[i].id),
            None => Decision::CreateNew,
        })
    }

    /// Ingests one tuple and returns every tuple released in this step.
    /// A rejected tuple leaves the engine untouched.
    pub fn ingest(&mut self, incoming: IncomingTuple<T>) -> Result<Vec<ReleasedTuple<T>>> {
        let rules = self.rules.clone().ok_or(Error::NoRules)?;
        incoming.validate()?;
        let arity = incoming.attributes.len();
        if let Some(expected) = self.arity {
            if arity != expected {
                return Err(Error::InvalidTuple(format!(
                    "tuple {} has {arity} attributes, stream has {expected}",
                    incoming.message_id
                )));
            }
        }
        self.check(&incoming, &rules)?;
        self.arity = Some(arity);

        let arrival = self.ingested;
        self.ingested += 1;
        let tuple = DataTuple::from_incoming(incoming, arrival);
        let singles = self.learn(&tuple, &rules);

        let mut out = Vec::new();
        self.expire(arrival, &mut out);

        let start = Instant::now();
        let target = self.select(&singles);
        let idx = match target {
            Some(i) => i,
            None => {
                let id = self.fresh_id();
                self.clusters
                    .push(Cluster::new(id, arrival, rules, arity, &self.global));
                self.clusters.len() - 1
            }
        };
        let assigned_at = Instant::now();
        self.timings.best_selection += assigned_at - start;
        self.timings.best_selection_calls += 1;
        self.buffer.insert(arrival, self.clusters[idx].id);
        self.clusters[idx].push(
            Member {
                tuple,
                singles,
                assigned_at,
            },
            &self.domains,
        );

        self.expire(arrival, &mut out);

        if let RncClear::Every(n) = self.config.rnc_clear {
            if self.ingested % n == 0 {
                self.clear_rnc();
            }
        }
        Ok(out)
    }

    /// Releases every buffered tuple, oldest cluster first.
    pub fn flush(&mut self) -> Vec<ReleasedTuple<T>> {
        let last = self.ingested.saturating_sub(1);
        let mut out = Vec::new();
        while let Some((_, &id)) = self.buffer.first_key_value() {
            self.delay_constraint(id, last, &mut out);
        }
        out
    }

    fn clear_rnc(&mut self) {
        for d in self.global.iter_mut().flatten() {
            d.clear_rnc();
        }
        for c in &mut self.clusters {
            for d in c.dghs.iter_mut().flatten() {
                d.clear_rnc();
            }
        }
    }

    fn fresh_id(&mut self) -> ClusterId {
        let id = ClusterId {
            partition: self.partition,
            sequence: self.next_cluster,
        };
        self.next_cluster += 1;
        id
    }

    /// Rejects tuples whose values do not fit the current rules.
    fn check(&self, tuple: &IncomingTuple<T>, rules: &RuleSet<T>) -> Result<()> {
        for (i, value) in tuple.attributes.iter().enumerate() {
            let rule = rules.effective(i);
            if rule.is_sensitive {
                continue;
            }
            match (rule.kind, value) {
                (GeneralizerKind::NumericInterval, AttributeValue::Numeric(v)) => {
                    if let Some((lo, hi)) = rule.domain {
                        if *v < lo || *v > hi {
                            return Err(Error::DomainViolation {
                                low: v.as_f64(),
                                high: v.as_f64(),
                                lower: lo.as_f64(),
                                upper: hi.as_f64(),
                            });
                        }
                    }
                }
                (GeneralizerKind::NumericInterval, _) => {
                    return Err(Error::InvalidTuple(format!(
                        "tuple {}: attribute {i} must be numeric",
                        tuple.message_id
                    )))
                }
                (GeneralizerKind::CategoricalDgh, AttributeValue::Numeric(_)) => {
                    return Err(Error::InvalidTuple(format!(
                        "tuple {}: attribute {i} must be categorical",
                        tuple.message_id
                    )))
                }
                (GeneralizerKind::CategoricalDgh, v) => {
                    if let Some(dgh) = &self.global[i] {
                        let path = dgh.value_path(v).expect("categorical value");
                        dgh.check_path(&path)?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Folds a checked tuple into stream-wide knowledge and returns its value summaries.
    fn learn(&mut self, tuple: &DataTuple<T>, rules: &RuleSet<T>) -> Vec<AttrSummary<T>> {
        let mut singles = Vec::with_capacity(tuple.attributes.len());
        for (i, value) in tuple.attributes.iter().enumerate() {
            if let AttributeValue::Numeric(v) = value {
                match &mut self.domains[i] {
                    Some(d) => d.observe(*v),
                    slot => *slot = Some(NumericDomain::observed_from(*v)),
                }
            }
            let rule = rules.effective(i);
            if uses_hierarchy(rule) && value.leaf_label().is_some() {
                let dgh = self.global[i].get_or_insert_with(Dgh::new);
                let path = dgh.value_path(value).expect("categorical value");
                let (leaf, created) = dgh.add_structure(&path).expect("path checked");
                dgh.observe(leaf);
                if created {
                    for c in &mut self.clusters {
                        if let Some(Some(d)) = c.dghs.get_mut(i) {
                            d.add_structure(&path).expect("hierarchies agree");
                        }
                    }
                }
                singles.push(AttrSummary::Node(leaf));
            } else {
                singles.push(AttrSummary::of_raw(value, self.global[i].as_ref()));
            }
        }
        singles
    }

    /// Position of the cluster to join, or `None` to open one.
    fn select(&self, singles: &[AttrSummary<T>]) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, c) in self.clusters.iter().enumerate() {
            let e = c.enlargement(singles, &self.domains);
            let better = match best {
                None => true,
                Some((j, b)) => {
                    e < b || (e == b && (c.created_at, c.id) < (self.clusters[j].created_at, self.clusters[j].id))
                }
            };
            if better {
                best = Some((i, e));
            }
        }
        let (i, e) = best?;
        if e <= self.tau() || self.clusters.len() >= self.config.beta {
            Some(i)
        } else {
            None
        }
    }

    fn expire(&mut self, now: u64, out: &mut Vec<ReleasedTuple<T>>) {
        while let Some((&oldest, &id)) = self.buffer.first_key_value() {
            if now - oldest + 1 < self.config.delta {
                break;
            }
            self.delay_constraint(id, now, out);
        }
    }

    fn position(&self, id: ClusterId) -> usize {
        self.clusters
            .iter()
            .position(|c| c.id == id)
            .expect("buffered tuple belongs to an open cluster")
    }

    /// Sensitive positions checked for a cluster created under `snapshot`.
    fn sensitive_for(&self, snapshot: &RuleSet<T>, into: &mut BTreeSet<usize>) {
        let arity = self.arity.unwrap_or(0);
        into.extend(snapshot.sensitive_indices().filter(|&i| i < arity));
        if let Some(current) = &self.rules {
            into.extend(current.sensitive_indices().filter(|&i| i < arity));
        }
    }

    fn delay_constraint(&mut self, id: ClusterId, egress_index: u64, out: &mut Vec<ReleasedTuple<T>>) {
        let start = Instant::now();
        let idx = self.position(id);
        let k = self.config.k;
        let l = self.config.l;
        let mut sensitive = BTreeSet::new();
        self.sensitive_for(&self.clusters[idx].rules, &mut sensitive);

        let c = &self.clusters[idx];
        if c.subject_count() >= k && is_diverse(c.members.iter(), &sensitive, l) {
            if c.subject_count() >= 2 * k {
                let max_groups = self.config.beta + 2 - self.clusters.len();
                let groups = split::split_members(c, k, max_groups, &self.domains);
                if groups.len() >= 2 && is_diverse(groups[0].iter().map(|&i| &c.members[i]), &sensitive, l) {
                    self.split_release(idx, groups, egress_index, start, out);
                    return self.finish(start);
                }
            }
            let c = self.clusters.remove(idx);
            self.release(c, false, egress_index, start, out);
            return self.finish(start);
        }

        self.merge_release(idx, sensitive, egress_index, start, out);
        self.finish(start);
    }

    fn finish(&mut self, start: Instant) {
        self.timings.delay_constraint += start.elapsed();
        self.timings.delay_constraint_calls += 1;
    }

    fn split_release(
        &mut self,
        idx: usize,
        groups: Vec<Vec<usize>>,
        egress_index: u64,
        start: Instant,
        out: &mut Vec<ReleasedTuple<T>>,
    ) {
        let original = self.clusters.remove(idx);
        let mut pool: Vec<Option<Member<T>>> = original.members.iter().cloned().map(Some).collect();
        let mut take = |g: &[usize]| -> Vec<Member<T>> { g.iter().map(|&i| pool[i].take().expect("partition")).collect() };
        let released = original.regroup(original.id, take(&groups[0]), &self.domains);
        let mut rest = Vec::with_capacity(groups.len() - 1);
        for g in &groups[1..] {
            let members = take(g);
            let id = self.fresh_id();
            rest.push(original.regroup(id, members, &self.domains));
        }
        for (offset, c) in rest.into_iter().enumerate() {
            for m in &c.members {
                self.buffer.insert(m.tuple.arrival_index, c.id);
            }
            self.clusters.insert(idx + offset, c);
        }
        self.release(released, false, egress_index, start, out);
    }

    fn merge_release(
        &mut self,
        idx: usize,
        mut sensitive: BTreeSet<usize>,
        egress_index: u64,
        start: Instant,
        out: &mut Vec<ReleasedTuple<T>>,
    ) {
        let k = self.config.k;
        let l = self.config.l;
        let base = &self.clusters[idx];
        let ctx = base.ctx(&self.domains);
        let rules = &*base.rules;
        let mut summary = base.summary.clone();
        let mut subjects: HashSet<&str> = base.subjects.keys().map(String::as_str).collect();
        let mut chosen: Vec<usize> = Vec::new();
        let satisfied = loop {
            let members = std::iter::once(idx)
                .chain(chosen.iter().copied())
                .flat_map(|j| self.clusters[j].members.iter());
            if subjects.len() >= k && is_diverse(members, &sensitive, l) {
                break true;
            }
            let mut best: Option<(usize, T, SetSummary<T>)> = None;
            for (j, other) in self.clusters.iter().enumerate() {
                if j == idx || chosen.contains(&j) {
                    continue;
                }
                let joined = summary.join(&other.summary, &ctx);
                let loss = joined.total(rules, &ctx);
                let better = match &best {
                    None => true,
                    Some((b, bl, _)) => {
                        let o = &self.clusters[*b];
                        loss < *bl || (loss == *bl && (other.created_at, other.id) < (o.created_at, o.id))
                    }
                };
                if better {
                    best = Some((j, loss, joined));
                }
            }
            let Some((j, _, joined)) = best else {
                break false;
            };
            summary = joined;
            subjects.extend(self.clusters[j].subjects.keys().map(String::as_str));
            chosen.push(j);
            let snapshot = Arc::clone(&self.clusters[j].rules);
            self.sensitive_for(&snapshot, &mut sensitive);
        };

        if !satisfied {
            let c = self.clusters.remove(idx);
            self.release(c, true, egress_index, start, out);
            return;
        }
        let base_id = self.clusters[idx].id;
        let mut positions: Vec<usize> = std::iter::once(idx).chain(chosen).collect();
        positions.sort_unstable_by(|a, b| b.cmp(a));
        let mut parts: Vec<Cluster<T>> = positions.into_iter().map(|p| self.clusters.remove(p)).collect();
        let base_pos = parts.iter().position(|c| c.id == base_id).expect("expiring cluster");
        let mut base = parts.swap_remove(base_pos);
        for p in parts {
            base.members.extend(p.members);
        }
        base.members.sort_by_key(|m| m.tuple.arrival_index);
        base.summary = summary;
        self.release(base, false, egress_index, start, out);
    }

    fn release(
        &mut self,
        cluster: Cluster<T>,
        suppressed: bool,
        egress_index: u64,
        start: Instant,
        out: &mut Vec<ReleasedTuple<T>>,
    ) {
        let ctx = ClusterCtx {
            dghs: &cluster.dghs,
            rules: &cluster.rules,
            domains: &self.domains,
        };
        let generalized = generalize(&cluster.summary, &cluster.rules, &ctx, suppressed);
        if !suppressed {
            self.released_loss.push(generalized.total);
        }
        let egress = Instant::now();
        for m in cluster.members {
            self.buffer.remove(&m.tuple.arrival_index);
            self.timings.wait_time += start.saturating_duration_since(m.assigned_at);
            self.timings.waited_tuples += 1;
            out.push(generalized.release(m, cluster.id, suppressed, egress_index, egress));
        }
    }
}

#[cfg(test)]
mod tests;
