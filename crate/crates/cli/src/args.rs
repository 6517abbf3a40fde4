use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use edgefuse::fusion::HandoffMode;
use edgefuse::sim::System;

/// Edge-cloud assistant runtime: scenario runs, latency benchmarks,
/// classifier inspection and a live streaming REPL.
///
/// Settings precedence: built-in defaults < scenario overrides < --config file < flags.
/// Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.
#[derive(Debug, Parser)]
#[command(name = "edgefuse", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML settings file (classifier, handoff, editor_latency_ms, jitter_ms, endpoints)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Handoff-index prediction rule: literal or additive
    #[arg(long, global = true, value_name = "MODE")]
    pub handoff_mode: Option<HandoffMode>,
    /// Urgency threshold; a query is urgent when its score strictly exceeds it
    #[arg(long, global = true, visible_alias = "threshold", value_name = "T")]
    pub urgency_threshold: Option<f64>,
    /// Expert-routing threshold; the top expert score must strictly exceed it
    #[arg(long, global = true, value_name = "T")]
    pub route_threshold: Option<f64>,
    /// Seed for latency jitter (defaults to the scenario's seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for metrics and reports
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Print extra diagnostics to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one system over a scenario and write its metrics
    Run(RunArgs),
    /// Compare all three systems over a scenario and write a report
    Bench(BenchArgs),
    /// Show urgency and routing decisions for one query
    Classify(ClassifyArgs),
    /// Interactive session that streams paced, fused answers
    Repl(ReplArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (line-delimited JSON)
    pub scenario: PathBuf,
    /// System to run: audo-sight, edge-only or cloud-only
    #[arg(long, default_value = "audo-sight")]
    pub system: System,
    /// Evaluate records one at a time instead of in parallel
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario file (line-delimited JSON)
    pub scenario: PathBuf,
    /// Evaluate records one at a time instead of in parallel
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Query text
    pub text: String,
    /// Print the decision as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReplArgs {
    /// Use the HTTP endpoints from the config file instead of the scripted demo backends
    #[arg(long)]
    pub live: bool,
    /// Run on a virtual clock and print answers at once instead of pacing them
    #[arg(long)]
    pub instant: bool,
    /// Frame id handed to expert agents
    #[arg(long, default_value = "gate-02")]
    pub frame: String,
    /// Command that receives each final answer on stdin (for example a speech synthesizer)
    #[arg(long, value_name = "CMD")]
    pub tts_command: Option<String>,
}
