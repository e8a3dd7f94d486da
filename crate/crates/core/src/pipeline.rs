//! Subject-keyed partitioning over independent engines.
//!
//! Every tuple of a subject lands on the same partition, so a cluster that
//! covers `k` subjects within its partition covers `k` subjects globally.

use std::thread;
use std::time::Instant;

use crate::config::EngineConfig;
use crate::engine::{Engine, Timings};
use crate::error::{Error, Result};
use crate::release::ReleasedTuple;
use crate::rules::GeneralizationRule;
use crate::scalar::Scalar;
use crate::value::IncomingTuple;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Partition of `subject_key` among `partitions`.
pub fn route(subject_key: &str, partitions: usize) -> usize {
    assert!(partitions > 0, "at least one partition");
    (fnv1a64(subject_key.as_bytes()) % partitions as u64) as usize
}

/// What one partition produced from a batch.
#[derive(Debug, Default)]
pub struct PartitionOutput<T> {
    pub released: Vec<ReleasedTuple<T>>,
    /// Message ids of rejected tuples with the reason.
    pub rejected: Vec<(String, Error)>,
}

#[derive(Debug, Clone)]
pub struct Pipeline<T> {
    engines: Vec<Engine<T>>,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(config: EngineConfig<T>, partitions: usize) -> Result<Self> {
        if partitions == 0 {
            return Err(Error::Config("partitions must be at least 1".into()));
        }
        let engines = (0..partitions)
            .map(|p| Engine::new(config).map(|e| e.with_partition(p as u32)))
            .collect::<Result<_>>()?;
        Ok(Self { engines })
    }

    pub fn partitions(&self) -> usize {
        self.engines.len()
    }

    pub fn engine(&self, partition: usize) -> &Engine<T> {
        &self.engines[partition]
    }

    pub fn engines(&self) -> &[Engine<T>] {
        &self.engines
    }

    pub fn route(&self, subject_key: &str) -> usize {
        route(subject_key, self.engines.len())
    }

    /// Applies `rules` on every partition, or on none if any would reject them.
    pub fn broadcast_rules(&mut self, rules: impl IntoIterator<Item = GeneralizationRule<T>>) -> Result<()> {
        let rules: Vec<_> = rules.into_iter().collect();
        for e in &self.engines {
            e.check_rules(&rules)?;
        }
        for e in &mut self.engines {
            e.apply_rules(rules.iter().cloned())?;
        }
        Ok(())
    }

    /// Ingests on the tuple's partition; returns that partition's releases.
    pub fn ingest_routed(&mut self, tuple: IncomingTuple<T>) -> Result<Vec<ReleasedTuple<T>>> {
        let p = self.route(&tuple.subject_key);
        self.engines[p].ingest(tuple)
    }

    /// Drains every partition, in partition order.
    pub fn flush(&mut self) -> Vec<ReleasedTuple<T>> {
        self.engines.iter_mut().flat_map(Engine::flush).collect()
    }

    /// Routes a batch and runs the partitions concurrently, one thread each.
    /// Ingress times are restamped as each tuple enters its engine.
    /// With `flush` the partitions are drained afterwards.
    pub fn run_batch(&mut self, tuples: impl IntoIterator<Item = IncomingTuple<T>>, flush: bool) -> Vec<PartitionOutput<T>> {
        let mut streams: Vec<Vec<IncomingTuple<T>>> = vec![Vec::new(); self.engines.len()];
        for t in tuples {
            streams[self.route(&t.subject_key)].push(t);
        }
        let drive = |engine: &mut Engine<T>, stream: Vec<IncomingTuple<T>>| {
            let mut out = PartitionOutput {
                released: Vec::new(),
                rejected: Vec::new(),
            };
            for mut t in stream {
                t.ingress = Instant::now();
                let id = t.message_id.clone();
                match engine.ingest(t) {
                    Ok(r) => out.released.extend(r),
                    Err(e) => out.rejected.push((id, e)),
                }
            }
            if flush {
                out.released.extend(engine.flush());
            }
            out
        };
        if self.engines.len() == 1 {
            let stream = streams.pop().expect("one stream");
            return vec![drive(&mut self.engines[0], stream)];
        }
        thread::scope(|s| {
            let handles: Vec<_> = self
                .engines
                .iter_mut()
                .zip(streams)
                .map(|(e, stream)| s.spawn(move || drive(e, stream)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("partition thread panicked"))
                .collect()
        })
    }

    /// Timings summed over partitions.
    pub fn timings(&self) -> Timings {
        let mut t = Timings::default();
        for e in &self.engines {
            t.absorb(e.timings());
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tau;
    use crate::rules::GeneralizerKind;
    use crate::value::AttributeValue;

    type Rule = GeneralizationRule<f64>;

    /// Independent FNV-1a: byte-at-a-time over u128 arithmetic, reduced mod 2^64.
    fn reference_fnv(s: &str) -> u64 {
        let mut h: u128 = 14695981039346656037;
        for b in s.bytes() {
            h ^= b as u128;
            h = (h * 1099511628211) % (1u128 << 64);
        }
        h as u64
    }

    fn rules() -> Vec<Rule> {
        vec![
            Rule::new(0, GeneralizerKind::NumericInterval).quasi_identifier(),
            Rule::new(1, GeneralizerKind::CategoricalDgh).quasi_identifier(),
        ]
    }

    fn stream(n: usize, subjects: usize) -> Vec<IncomingTuple<f64>> {
        let cats = [["Paris", "France", "EU"], ["Lyon", "France", "EU"], ["Madrid", "Spain", "EU"]];
        (0..n)
            .map(|i| {
                IncomingTuple::new(
                    format!("m{i}"),
                    format!("subject-{}", (i * 7) % subjects),
                    vec![
                        AttributeValue::Numeric(((i * 31) % 97) as f64),
                        AttributeValue::with_path(cats[i % 3]).unwrap(),
                    ],
                )
            })
            .collect()
    }

    fn render(r: &ReleasedTuple<f64>) -> String {
        format!("{}|{}|{}|{:?}|{:?}", r.message_id, r.cluster_id, r.suppressed, r.generalized, r.attribute_loss)
    }

    fn config() -> EngineConfig<f64> {
        EngineConfig::new(3, 1, 12, 4).with_tau(Tau::Auto)
    }

    #[test]
    fn known_fnv_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn routing_matches_reference_hash() {
        assert!((0..50).all(|i| route(&format!("s{i}"), 1) == 0));
        assert_eq!(route("building-565", 8), route("building-565", 8));
        let mut counts = [0usize; 4];
        let mut rng = 0x2545_f491_4f6c_dd1du64;
        for _ in 0..1000 {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            let key = format!("{rng:x}");
            let p = route(&key, 4);
            assert_eq!(p as u64, reference_fnv(&key) % 4);
            counts[p] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn single_partition_matches_plain_engine() {
        let mut p = Pipeline::new(config(), 1).unwrap();
        p.broadcast_rules(rules()).unwrap();
        let mut e = Engine::new(config()).unwrap();
        e.apply_rules(rules()).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for t in stream(200, 9) {
            a.extend(p.ingest_routed(t.clone()).unwrap());
            b.extend(e.ingest(t).unwrap());
        }
        a.extend(p.flush());
        b.extend(e.flush());
        assert_eq!(a.iter().map(render).collect::<Vec<_>>(), b.iter().map(render).collect::<Vec<_>>());
    }

    #[test]
    fn partitions_match_engines_on_routed_substreams() {
        for parts in [2, 4] {
            let mut p = Pipeline::new(config(), parts).unwrap();
            p.broadcast_rules(rules()).unwrap();
            let outputs = p.run_batch(stream(300, 23), true);
            for (i, out) in outputs.iter().enumerate() {
                let mut e = Engine::new(config()).unwrap().with_partition(i as u32);
                e.apply_rules(rules()).unwrap();
                let mut expected = Vec::new();
                for t in stream(300, 23).into_iter().filter(|t| route(&t.subject_key, parts) == i) {
                    expected.extend(e.ingest(t).unwrap());
                }
                expected.extend(e.flush());
                assert!(out.rejected.is_empty());
                assert_eq!(
                    out.released.iter().map(render).collect::<Vec<_>>(),
                    expected.iter().map(render).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn broadcast_reaches_every_partition() {
        let mut p = Pipeline::new(config(), 4).unwrap();
        p.broadcast_rules(rules()).unwrap();
        for t in stream(40, 11) {
            p.ingest_routed(t).unwrap();
        }
        p.broadcast_rules([Rule::new(0, GeneralizerKind::NumericInterval).quasi_identifier().with_weight(0.25)])
            .unwrap();
        for e in p.engines() {
            let r = e.rules().unwrap();
            assert_eq!(r.effective(0).weight, 0.25);
            assert_eq!(r.effective(1).kind, GeneralizerKind::CategoricalDgh);
        }
    }

    #[test]
    fn rejected_broadcast_changes_no_partition() {
        use crate::rules::HierarchySeed as S;
        let mut p = Pipeline::new(config(), 2).unwrap();
        p.broadcast_rules(rules()).unwrap();
        for t in stream(40, 11) {
            p.ingest_routed(t).unwrap();
        }
        // Paris already sits under France
        let bad = Rule::new(1, GeneralizerKind::CategoricalDgh)
            .quasi_identifier()
            .with_weight(0.5)
            .with_hierarchy(S::node("US", vec![S::leaf("Paris")]));
        assert!(p.broadcast_rules([bad]).is_err());
        assert!(p.engines().iter().all(|e| e.rules().unwrap().effective(1).weight == 1.0));
    }
}
