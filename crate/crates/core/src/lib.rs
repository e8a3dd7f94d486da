//! Streaming k_s-anonymization.
//!
//! Tuples are buffered in clusters keyed on their quasi-identifiers and
//! released, generalized, once their oldest member has waited `delta`
//! ingestions. Released clusters cover at least `k` distinct subjects and
//! `l` distinct values of every sensitive attribute, or are flagged as
//! suppressed and released under maximal generalization.
//!
//! Everything is generic over the scalar type; the aliases at the crate root
//! fix it to `f64`.

pub mod audit;
pub mod config;
pub mod dgh;
pub mod error;
pub mod engine;
pub mod loss;
pub mod pipeline;
pub mod release;
pub mod rules;
pub mod scalar;
pub mod value;

pub use config::{validate_config, RncClear, Tau};
pub use dgh::{Dgh, NodeId, NodeRef, ROOT_LABEL};
pub use engine::{Decision, Timings};
pub use error::{Error, Result};
pub use pipeline::{fnv1a64, route};
pub use release::ClusterId;
pub use rules::{parse_rule_document, parse_rule_document_with, serialize_rules, GeneralizerKind, HierarchySeed, LossMetric};
pub use scalar::Scalar;
pub use value::{ValueKey, MAX_ATTRIBUTES};

pub type AttributeValue = value::AttributeValue<f64>;
pub type IncomingTuple = value::IncomingTuple<f64>;
pub type DataTuple = value::DataTuple<f64>;
pub type GeneralizationRule = rules::GeneralizationRule<f64>;
pub type RuleSet = rules::RuleSet<f64>;
pub type EngineConfig = config::EngineConfig<f64>;
pub type GeneralizedValue = release::GeneralizedValue<f64>;
pub type ReleasedTuple = release::ReleasedTuple<f64>;
pub type NumericDomain = loss::NumericDomain<f64>;
pub type LossBreakdown = loss::LossBreakdown<f64>;
pub type Engine = engine::Engine<f64>;
pub type Pipeline = pipeline::Pipeline<f64>;
