//! Runs the streaming anonymizer over CSV files and TCP sockets, generates
//! synthetic building data and reports information loss and latency.

pub mod output;
pub mod replay;
pub mod report;
pub mod schema;
pub mod serve;
pub mod synth;
