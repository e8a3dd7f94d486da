//! Run report: configuration echo, information loss, latency and timings.

use std::collections::BTreeMap;
use std::io::Read;
use std::time::Duration;

use anyhow::Context;
use ksanon_core::{EngineConfig, RncClear, ReleasedTuple, Tau, Timings};
use serde::{Deserialize, Serialize};

use crate::schema::RulesFile;

pub const LATENCY_NOTE: &str =
    "in-process latency: measured from ingestion into the engine to release, excluding any transport";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub l: usize,
    pub delta: u64,
    pub beta: usize,
    pub tau: String,
    pub rnc_clear: String,
    pub partitions: usize,
}

impl ConfigEcho {
    pub fn new(config: &EngineConfig, partitions: usize) -> Self {
        Self {
            k: config.k,
            l: config.l,
            delta: config.delta,
            beta: config.beta,
            tau: match config.tau {
                Tau::Auto => "auto".into(),
                Tau::Fixed(x) => x.to_string(),
            },
            rnc_clear: match config.rnc_clear {
                RncClear::Every(n) => n.to_string(),
                RncClear::Never => "never".into(),
            },
            partitions,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tuples_in: usize,
    pub released: usize,
    pub rejected: usize,
    pub clusters: usize,
    pub suppressed_clusters: usize,
    pub suppressed_tuples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub index: usize,
    pub name: String,
    pub quasi_identifier: bool,
    /// Mean loss over released clusters, each cluster counted once.
    pub average_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        // nearest rank
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            count: n,
            min: v[0],
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            p95: v[rank - 1],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub time_us: Summary,
    pub index: Summary,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub best_selection_ms: f64,
    pub best_selection_calls: u64,
    pub best_selection_mean_us: f64,
    pub delay_constraint_ms: f64,
    pub delay_constraint_calls: u64,
    pub delay_constraint_mean_us: f64,
    pub wait_time_ms: f64,
    pub waited_tuples: u64,
    pub wait_time_mean_us: f64,
}

fn mean_us(total: Duration, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        total.as_secs_f64() * 1e6 / n as f64
    }
}

impl From<&Timings> for TimingReport {
    fn from(t: &Timings) -> Self {
        Self {
            best_selection_ms: t.best_selection.as_secs_f64() * 1e3,
            best_selection_calls: t.best_selection_calls,
            best_selection_mean_us: mean_us(t.best_selection, t.best_selection_calls),
            delay_constraint_ms: t.delay_constraint.as_secs_f64() * 1e3,
            delay_constraint_calls: t.delay_constraint_calls,
            delay_constraint_mean_us: mean_us(t.delay_constraint, t.delay_constraint_calls),
            wait_time_ms: t.wait_time.as_secs_f64() * 1e3,
            waited_tuples: t.waited_tuples,
            wait_time_mean_us: mean_us(t.wait_time, t.waited_tuples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub counts: Counts,
    pub attributes: Vec<AttributeReport>,
    /// Mean of `average_loss` over quasi-identifier attributes.
    pub mean_qi_loss: f64,
    pub latency: Latency,
    pub timings: TimingReport,
    pub wall_ms: f64,
    pub tuples_per_second: f64,
}

/// Per-attribute mean loss over clusters, one loss vector per cluster.
pub fn cluster_averages<'a>(clusters: impl IntoIterator<Item = &'a [f64]>, arity: usize) -> Vec<f64> {
    let mut sums = vec![0.0; arity];
    let mut n = 0usize;
    for losses in clusters {
        n += 1;
        for (s, x) in sums.iter_mut().zip(losses) {
            *s += x;
        }
    }
    if n > 0 {
        for s in &mut sums {
            *s /= n as f64;
        }
    }
    sums
}

fn attribute_reports(rules: &RulesFile, averages: &[f64]) -> (Vec<AttributeReport>, f64) {
    let set = ksanon_core::RuleSet::new(rules.rules.iter().cloned()).unwrap_or_default();
    let attrs: Vec<AttributeReport> = rules
        .mapping
        .ordered()
        .into_iter()
        .map(|c| AttributeReport {
            index: c.index,
            name: c.name.clone(),
            quasi_identifier: set.effective(c.index).contributes_loss(),
            average_loss: averages.get(c.index).copied().unwrap_or(0.0),
        })
        .collect();
    let qi: Vec<f64> = attrs.iter().filter(|a| a.quasi_identifier).map(|a| a.average_loss).collect();
    let mean = if qi.is_empty() {
        0.0
    } else {
        qi.iter().sum::<f64>() / qi.len() as f64
    };
    (attrs, mean)
}

/// Inputs gathered by a run besides the released tuples.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub config: ConfigEcho,
    pub tuples_in: usize,
    pub rejected: usize,
    pub timings: Timings,
    pub wall: Duration,
}

pub fn compute_report(rules: &RulesFile, released: &[ReleasedTuple], stats: &RunStats) -> RunReport {
    let mut clusters: BTreeMap<_, &ReleasedTuple> = BTreeMap::new();
    for r in released {
        clusters.entry(r.cluster_id).or_insert(r);
    }
    let averages = cluster_averages(clusters.values().map(|r| r.attribute_loss.as_slice()), rules.mapping.arity());
    let (attributes, mean_qi_loss) = attribute_reports(rules, &averages);
    let time: Vec<f64> = released
        .iter()
        .map(|r| r.egress.saturating_duration_since(r.ingress).as_secs_f64() * 1e6)
        .collect();
    let index: Vec<f64> = released.iter().map(|r| r.index_latency() as f64).collect();
    let suppressed: Vec<_> = clusters.values().filter(|r| r.suppressed).collect();
    let wall_s = stats.wall.as_secs_f64();
    RunReport {
        config: stats.config.clone(),
        counts: Counts {
            tuples_in: stats.tuples_in,
            released: released.len(),
            rejected: stats.rejected,
            clusters: clusters.len(),
            suppressed_clusters: suppressed.len(),
            suppressed_tuples: released.iter().filter(|r| r.suppressed).count(),
        },
        attributes,
        mean_qi_loss,
        latency: Latency {
            time_us: Summary::of(&time),
            index: Summary::of(&index),
            note: LATENCY_NOTE.into(),
        },
        timings: TimingReport::from(&stats.timings),
        wall_ms: wall_s * 1e3,
        tuples_per_second: if wall_s > 0.0 {
            stats.tuples_in as f64 / wall_s
        } else {
            0.0
        },
    }
}

/// Loss section recomputed from an output CSV: per-attribute averages and
/// the quasi-identifier mean.
pub fn loss_from_csv<R: Read>(input: R, rules: &RulesFile) -> anyhow::Result<(Vec<AttributeReport>, f64)> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).with_context(|| format!("no `{name}` column"));
    let cluster = col("cluster")?;
    let loss_cols = rules
        .mapping
        .ordered()
        .into_iter()
        .map(|c| col(&format!("loss_{}", c.name)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut clusters: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let key = rec[cluster].to_owned();
        if clusters.contains_key(&key) {
            continue;
        }
        let losses = loss_cols
            .iter()
            .map(|&i| rec[i].parse::<f64>().with_context(|| format!("bad loss `{}`", &rec[i])))
            .collect::<anyhow::Result<_>>()?;
        clusters.insert(key, losses);
    }
    let averages = cluster_averages(clusters.values().map(Vec::as_slice), rules.mapping.arity());
    Ok(attribute_reports(rules, &averages))
}
