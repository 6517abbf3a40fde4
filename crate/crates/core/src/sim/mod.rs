//! Deterministic scenario runner and the three-system latency comparison.
//!
//! Each record runs on its own virtual clock starting at zero, so records are
//! independent and can be evaluated in parallel without changing any output
//! byte. Results are always returned in record order.

pub mod figure5;
mod report;
pub mod scenario;
pub mod settings;
pub mod trials;

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ExpertEntry, ExpertFixtures, RuleEditor};
use crate::backends::{ScriptedHub, StreamHub, StreamRequest, StreamScript};
use crate::classify::{Classifier, LexiconClassifier};
use crate::fusion::{FusionTrace, TtsQueue};
use crate::pipeline::{speak_notice, stream_single, Delivery, Pipeline, FAILURE_NOTICE};
use crate::types::{BackendKind, FrameRef, Query, Track};

pub use report::{compare_systems, compare_systems_with, summarize, ClassStats, Comparison, ComparisonReport, LatencySummary, Reductions, Stats, SystemStats};
pub use scenario::{Scenario, ScenarioError, ScenarioRecord, ValidationErrors};
pub use settings::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    AudoSight,
    EdgeOnly,
    CloudOnly,
}

impl System {
    pub const ALL: [System; 3] = [System::AudoSight, System::EdgeOnly, System::CloudOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            System::AudoSight => "audo-sight",
            System::EdgeOnly => "edge-only",
            System::CloudOnly => "cloud-only",
        }
    }
}

impl std::fmt::Display for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        System::ALL
            .into_iter()
            .find(|sys| sys.as_str() == s)
            .ok_or_else(|| format!("unknown system `{s}` (expected audo-sight, edge-only or cloud-only)"))
    }
}

/// Whether independent records are evaluated on the rayon pool or one by one.
/// Without the `parallel` feature both variants run sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Order-preserving map over independent items.
pub fn par_map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub settings: Settings,
    pub seed: u64,
    pub execution: Execution,
}

impl RunOptions {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self { settings: s.settings(), seed: s.seed, execution: Execution::default() }
    }
}

/// One row of metrics output. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub id: String,
    pub system: System,
    pub truth_track: Track,
    /// Track chosen by the classifiers; absent for the single-model baselines.
    pub track: Option<Track>,
    pub urgent: bool,
    pub ttft_ms: u64,
    pub turnaround_ms: u64,
    pub edge_calls: u32,
    pub cloud_calls: u32,
    pub fusion_calls: u32,
    pub editor_calls: u32,
    pub delivery: Delivery,
    pub fusion: Option<FusionTrace>,
    pub error: Option<String>,
    pub final_text: String,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator per (seed, record, backend).
pub fn stream_rng(seed: u64, record: usize, kind: BackendKind) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix((record as u64) << 3 | kind as u64)))
}

fn jitter(script: &StreamScript, seed: u64, record: usize, kind: BackendKind, jitter_ms: u64) -> StreamScript {
    let mut s = script.clone();
    if jitter_ms > 0 {
        s.ttft_ms += stream_rng(seed, record, kind).random_range(0..=jitter_ms);
    }
    s
}

/// Scripted backends for one record, with seeded jitter applied.
pub fn record_hub(record: &ScenarioRecord, index: usize, opts: &RunOptions) -> ScriptedHub {
    let j = |s: &StreamScript, kind| jitter(s, opts.seed, index, kind, opts.settings.jitter_ms);
    let mut hub = ScriptedHub::new();
    for (kind, script) in [
        (BackendKind::Edge, &record.scripts.edge),
        (BackendKind::Cloud, &record.scripts.cloud),
        (BackendKind::Fusion, &record.scripts.fusion),
        (BackendKind::Editor, &record.scripts.editor),
    ] {
        if let Some(s) = script {
            hub = hub.with(kind, j(s, kind));
        }
    }
    if record.scripts.editor.is_none() {
        hub = hub.with(BackendKind::Editor, RuleEditor { latency_ms: opts.settings.editor_latency_ms, ..RuleEditor::default() });
    }
    hub
}

fn record_query(r: &ScenarioRecord) -> Query {
    let frame = FrameRef::new(r.frame.clone()).expect("validated frame id");
    Query::new(r.id.clone(), r.query.clone(), frame).expect("validated query")
}

fn record_fixtures(r: &ScenarioRecord) -> ExpertFixtures {
    let mut fx = ExpertFixtures::default();
    for e in &r.experts {
        fx.insert(ExpertEntry { frame: r.frame.clone(), route: e.route, payload: e.payload.clone(), latency_ms: e.latency_ms });
    }
    fx
}

/// Runs one record under one system.
pub fn run_record(
    record: &ScenarioRecord,
    index: usize,
    system: System,
    opts: &RunOptions,
    classifier: &Arc<dyn Classifier>,
) -> MetricsRecord {
    let mut hub = record_hub(record, index, opts);
    let q = record_query(record);
    let mut row = MetricsRecord {
        id: record.id.clone(),
        system,
        truth_track: record.truth.track(),
        track: None,
        urgent: record.truth.urgent,
        ttft_ms: 0,
        turnaround_ms: 0,
        edge_calls: 0,
        cloud_calls: 0,
        fusion_calls: 0,
        editor_calls: 0,
        delivery: Delivery::Answered,
        fusion: None,
        error: None,
        final_text: String::new(),
    };
    match system {
        System::AudoSight => {
            let result = Pipeline::new(opts.settings.pipeline(), classifier.clone(), classifier.clone(), record_fixtures(record))
                .and_then(|p| p.handle_query(&q, &mut hub));
            match result {
                Ok(r) => {
                    row.track = Some(r.track);
                    row.ttft_ms = r.ttft_ms;
                    row.turnaround_ms = r.turnaround_ms;
                    row.edge_calls = r.calls.edge;
                    row.cloud_calls = r.calls.cloud;
                    row.fusion_calls = r.calls.fusion;
                    row.editor_calls = r.calls.editor;
                    row.delivery = r.delivery;
                    row.fusion = r.fusion.as_ref().map(|f| f.trace());
                    row.final_text = r.final_text;
                }
                Err(e) => {
                    row.delivery = Delivery::Aborted;
                    row.error = Some(e.to_string());
                }
            }
        }
        System::EdgeOnly | System::CloudOnly => {
            let kind = if system == System::EdgeOnly { BackendKind::Edge } else { BackendKind::Cloud };
            let mut tts = TtsQueue::new(opts.settings.handoff.chars_per_sec);
            hub.open(kind, StreamRequest::text(q.text()).with_frame(q.frame().clone()));
            if !stream_single(&mut hub, kind, &mut tts) {
                speak_notice(&hub, &mut tts, FAILURE_NOTICE);
                row.delivery = Delivery::FailureNotice;
            }
            row.ttft_ms = tts.first_enqueue().map_or(0, |t| t.millis());
            row.turnaround_ms = tts.last_enqueue().map_or(0, |t| t.millis());
            row.edge_calls = hub.calls(BackendKind::Edge);
            row.cloud_calls = hub.calls(BackendKind::Cloud);
            row.final_text = tts.text();
        }
    }
    row
}

pub fn run_scenario(s: &Scenario, system: System) -> Vec<MetricsRecord> {
    run_scenario_with(s, system, &RunOptions::for_scenario(s))
}

pub fn run_scenario_with(s: &Scenario, system: System, opts: &RunOptions) -> Vec<MetricsRecord> {
    let classifier: Arc<dyn Classifier> = Arc::new(LexiconClassifier::bundled());
    par_map(opts.execution, &s.records, |i, r| run_record(r, i, system, opts, &classifier))
}

pub fn write_metrics(records: &[MetricsRecord], mut w: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes one JSON object per line.
pub fn export(records: &[MetricsRecord], path: &Path) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_metrics(records, std::io::BufWriter::new(f))
}

pub fn load_metrics(path: &Path) -> std::io::Result<Vec<MetricsRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}
