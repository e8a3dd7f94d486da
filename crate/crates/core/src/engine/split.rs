use std::collections::HashMap;

use super::cluster::{Cluster, Member};
use crate::loss::{AttrSummary, LossContext, NumericDomain, SetSummary};
use crate::scalar::Scalar;

struct Group<T> {
    summary: SetSummary<T>,
    has: Vec<bool>,
    covered: usize,
    members: Vec<usize>,
}

impl<T: Scalar> Group<T> {
    fn add(&mut self, i: usize, subject: usize, singles: &[AttrSummary<T>], ctx: &impl LossContext<T>) {
        self.summary.extend(singles, ctx);
        if !std::mem::replace(&mut self.has[subject], true) {
            self.covered += 1;
        }
        self.members.push(i);
    }
}

/// Partitions the members of `cluster` into at most `max_groups` groups of
/// at least `k` distinct subjects each. Groups hold member positions; the
/// first group contains the oldest member.
///
/// Each group is seeded with the oldest unassigned member and grown greedily
/// by the cheapest member of a subject it lacks until it covers `k`
/// subjects. Whatever is left once fewer than `k` distinct subjects remain
/// joins the group it enlarges least.
pub(crate) fn split_members<T: Scalar>(
    cluster: &Cluster<T>,
    k: usize,
    max_groups: usize,
    domains: &[Option<NumericDomain<T>>],
) -> Vec<Vec<usize>> {
    let members = &cluster.members;
    let ctx = cluster.ctx(domains);
    let rules = &*cluster.rules;
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by_key(|&i| members[i].tuple.arrival_index);

    let (subject, subjects) = subject_ids(members);
    let mut free_per_subject = vec![0usize; subjects];
    for &s in &subject {
        free_per_subject[s] += 1;
    }
    let mut free_subjects = subjects;
    let mut assigned = vec![false; members.len()];
    let mut groups: Vec<Group<T>> = Vec::new();
    let mut take = |i: usize, assigned: &mut [bool], free_subjects: &mut usize| {
        assigned[i] = true;
        free_per_subject[subject[i]] -= 1;
        if free_per_subject[subject[i]] == 0 {
            *free_subjects -= 1;
        }
    };
    while groups.len() < max_groups && free_subjects >= k {
        let seed = *order.iter().find(|&&i| !assigned[i]).expect("free members exist");
        let mut group = Group {
            summary: SetSummary::empty(cluster.summary.arity()),
            has: vec![false; subjects],
            covered: 0,
            members: Vec::new(),
        };
        loop {
            let i = match group.members.is_empty() {
                true => seed,
                false => {
                    let scorer = group.summary.scorer(rules, &ctx);
                    let mut best: Option<(usize, T)> = None;
                    for &i in &order {
                        if assigned[i] || group.has[subject[i]] {
                            continue;
                        }
                        let e = scorer.enlargement(&members[i].singles);
                        if best.map_or(true, |(_, b)| e < b) {
                            best = Some((i, e));
                            if e == T::zero() {
                                break;
                            }
                        }
                    }
                    best.expect("enough free subjects").0
                }
            };
            group.add(i, subject[i], &members[i].singles, &ctx);
            take(i, &mut assigned, &mut free_subjects);
            if group.covered >= k {
                break;
            }
        }
        groups.push(group);
    }

    let mut scorers: Vec<_> = groups.iter().map(|g| g.summary.scorer(rules, &ctx)).collect();
    for &i in &order {
        if assigned[i] {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for (g, scorer) in scorers.iter().enumerate() {
            let e = scorer.enlargement(&members[i].singles);
            if best.map_or(true, |(_, b)| e < b) {
                best = Some((g, e));
                if e == T::zero() {
                    break;
                }
            }
        }
        let (g, _) = best.expect("at least one group");
        groups[g].add(i, subject[i], &members[i].singles, &ctx);
        scorers[g] = groups[g].summary.scorer(rules, &ctx);
    }

    groups
        .into_iter()
        .map(|mut g| {
            g.members.sort_by_key(|&i| members[i].tuple.arrival_index);
            g.members
        })
        .collect()
}

/// Dense subject ids per member, and how many distinct subjects there are.
fn subject_ids<T>(members: &[Member<T>]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let subject = members
        .iter()
        .map(|m| {
            let n = ids.len();
            *ids.entry(m.tuple.subject_key.as_str()).or_insert(n)
        })
        .collect();
    (subject, ids.len())
}
