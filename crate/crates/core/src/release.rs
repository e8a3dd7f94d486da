use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use crate::value::AttributeValue;

/// Identifies a cluster within a partitioned deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterId {
    pub partition: u32,
    pub sequence: u64,
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.partition, self.sequence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneralizedValue<T> {
    Interval { low: T, high: T },
    Node { label: String, leaves: BTreeSet<String> },
    Exact(AttributeValue<T>),
    Redacted,
}

/// A tuple leaving the engine together with the rest of its cluster.
#[derive(Debug, Clone)]
pub struct ReleasedTuple<T> {
    pub message_id: String,
    pub subject_key: String,
    pub generalized: Vec<GeneralizedValue<T>>,
    pub cluster_id: ClusterId,
    /// Released under maximal generalization because k or l could not be met in time.
    pub suppressed: bool,
    /// Unweighted information loss per attribute position.
    pub attribute_loss: Vec<T>,
    pub arrival_index: u64,
    /// Arrival index of the most recent tuple when this one was released.
    pub egress_index: u64,
    pub ingress: Instant,
    pub egress: Instant,
}

impl<T> ReleasedTuple<T> {
    pub fn index_latency(&self) -> u64 {
        self.egress_index - self.arrival_index
    }
}
