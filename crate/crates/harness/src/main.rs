use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ksanon_core::{EngineConfig, Pipeline, RncClear, Tau};
use ksanon_harness::replay::{replay_files, ReplayPaths};
use ksanon_harness::schema::RulesFile;
use ksanon_harness::serve::Server;
use ksanon_harness::synth;

#[derive(Parser)]
#[command(name = "ksanon", version, about = "Streaming k-anonymity with l-diversity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a CSV file through the engine and write the released rows.
    Replay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Accept newline-delimited JSON tuples over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        rules: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Write a synthetic building-energy CSV.
    Synth {
        #[arg(long, default_value_t = 20_000)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        /// Also write the matching rules document here.
        #[arg(long)]
        rules_output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long)]
    delta: u64,
    #[arg(long)]
    beta: usize,
    /// Enlargement threshold: a number, or `auto` for the running mean of released losses.
    #[arg(long, default_value = "auto", value_parser = parse_tau)]
    tau: Tau<f64>,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    /// Reset hierarchy request counters every N tuples, or `never`.
    #[arg(long, default_value = "never", value_parser = parse_rnc)]
    rnc_clear: RncClear,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig::new(self.k, self.l, self.delta, self.beta)
            .with_tau(self.tau)
            .with_rnc_clear(self.rnc_clear)
    }
}

fn parse_tau(s: &str) -> Result<Tau<f64>, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Tau::Auto);
    }
    s.parse().map(Tau::Fixed).map_err(|_| format!("expected a number or `auto`, got `{s}`"))
}

fn parse_rnc(s: &str) -> Result<RncClear, String> {
    if s.eq_ignore_ascii_case("never") {
        return Ok(RncClear::Never);
    }
    s.parse().map(RncClear::Every).map_err(|_| format!("expected an integer or `never`, got `{s}`"))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Replay {
            input,
            rules,
            engine,
            output,
            report,
        } => {
            let paths = ReplayPaths {
                input: &input,
                rules: &rules,
                output: &output,
                report: &report,
            };
            let outcome = replay_files(&paths, engine.config(), engine.partitions)?;
            let r = &outcome.report;
            eprintln!(
                "released {} of {} tuples ({} rejected) in {} clusters, {} suppressed; mean QI loss {:.4}; {:.0} tuples/s",
                r.counts.released,
                r.counts.tuples_in,
                r.counts.rejected,
                r.counts.clusters,
                r.counts.suppressed_clusters,
                r.mean_qi_loss,
                r.tuples_per_second
            );
            for (id, e) in outcome.rejected.iter().take(10) {
                eprintln!("rejected {id}: {e}");
            }
        }
        Command::Serve {
            host,
            port,
            rules,
            engine,
        } => {
            let doc = RulesFile::load(&rules)?;
            let mut pipeline = Pipeline::new(engine.config(), engine.partitions)?;
            pipeline.broadcast_rules(doc.rules.iter().cloned())?;
            let server = Server::bind((host.as_str(), port), pipeline, Some(&doc.mapping))
                .with_context(|| format!("binding {host}:{port}"))?;
            eprintln!("listening on {}", server.local_addr());
            let summary = server.run()?;
            eprintln!(
                "served {} connections, {} releases undelivered",
                summary.connections, summary.undelivered
            );
        }
        Command::Synth {
            rows,
            seed,
            output,
            rules_output,
        } => {
            let f = File::create(&output).with_context(|| format!("creating {}", output.display()))?;
            synth::write_csv(BufWriter::new(f), rows, seed)?;
            if let Some(p) = rules_output {
                fs::write(&p, synth::RULES_JSON).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}
