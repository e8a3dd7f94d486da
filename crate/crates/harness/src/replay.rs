//! Replays a CSV file through a pipeline.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use ksanon_core::{EngineConfig, Error, IncomingTuple, Pipeline, ReleasedTuple};

use crate::output::write_csv;
use crate::report::{compute_report, ConfigEcho, RunReport, RunStats};
use crate::schema::{RowMapper, RulesFile};

#[derive(Debug)]
pub struct ReplayOutcome {
    /// Releases in partition order, each partition in release order.
    pub released: Vec<ReleasedTuple>,
    pub rejected: Vec<(String, Error)>,
    pub report: RunReport,
}

/// Reads every row up front. Fails on the first row that does not fit the mapping.
pub fn read_tuples<R: Read>(input: R, rules: &RulesFile) -> anyhow::Result<Vec<IncomingTuple>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rd.headers().context("reading CSV header")?.clone();
    let mapper = RowMapper::new(&rules.mapping, &header)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.context("reading CSV record")?;
        let row = rec.position().map_or(out.len() as u64 + 2, |p| p.line());
        out.push(mapper.tuple(&rec, row)?);
    }
    Ok(out)
}

/// Streams `tuples` in order through a fresh pipeline and flushes it.
pub fn run(tuples: Vec<IncomingTuple>, rules: &RulesFile, config: EngineConfig, partitions: usize) -> anyhow::Result<ReplayOutcome> {
    let mut pipeline = Pipeline::new(config, partitions)?;
    pipeline.broadcast_rules(rules.rules.iter().cloned())?;
    let tuples_in = tuples.len();
    let start = Instant::now();
    let outputs = pipeline.run_batch(tuples, true);
    let wall = start.elapsed();
    let mut released = Vec::with_capacity(tuples_in);
    let mut rejected = Vec::new();
    for o in outputs {
        released.extend(o.released);
        rejected.extend(o.rejected);
    }
    let stats = RunStats {
        config: ConfigEcho::new(&config, partitions),
        tuples_in,
        rejected: rejected.len(),
        timings: pipeline.timings(),
        wall,
    };
    let report = compute_report(rules, &released, &stats);
    Ok(ReplayOutcome {
        released,
        rejected,
        report,
    })
}

pub struct ReplayPaths<'a> {
    pub input: &'a Path,
    pub rules: &'a Path,
    pub output: &'a Path,
    pub report: &'a Path,
}

/// File-to-file replay: writes the released CSV and the JSON report.
pub fn replay_files(paths: &ReplayPaths<'_>, config: EngineConfig, partitions: usize) -> anyhow::Result<ReplayOutcome> {
    let rules = RulesFile::load(paths.rules)?;
    let input = File::open(paths.input).with_context(|| format!("opening {}", paths.input.display()))?;
    let tuples = read_tuples(input, &rules)?;
    let outcome = run(tuples, &rules, config, partitions)?;
    let out = File::create(paths.output).with_context(|| format!("creating {}", paths.output.display()))?;
    write_csv(BufWriter::new(out), &rules.mapping, &outcome.released)?;
    let report = File::create(paths.report).with_context(|| format!("creating {}", paths.report.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(report), &outcome.report)?;
    Ok(outcome)
}
