//! Per-query orchestration: classify, pick a track, dispatch, and measure.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{edit_response, nothing_found, run_expert, ExpertFixtures};
use crate::backends::{StreamHub, StreamRequest};
use crate::classify::{detect_urgency, route_query, Classifier, ClassifierConfig, ClassifierError, LexiconClassifier};
use crate::fusion::{run_fusion, FusionError, FusionOutcome, HandoffParams, TtsQueue, Winner};
use crate::types::{select_track, BackendKind, EventKind, Query, RouteLabel, Track};

pub const FAILURE_NOTICE: &str = "Sorry, I cannot reach any answering service right now. Please try again in a moment.";
pub const RESUBMIT_NOTICE: &str = "Sorry, I could not get an answer. Please ask your question again.";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("urgency detection failed: {0}")]
    Urgency(ClassifierError),
    #[error("routing failed: {0}")]
    Router(ClassifierError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub classifier: ClassifierConfig,
    pub handoff: HandoffParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.classifier.validate()?;
        self.handoff.validate()
    }
}

/// How the answer came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Answered,
    EdgeOnlyFallback,
    CloudOnlyFallback,
    /// Editor unavailable; raw expert payload spoken.
    EditorFallback,
    /// Every answering backend failed.
    FailureNotice,
    /// Cloud failed on the normal track; the user is asked to resubmit.
    ResubmitNotice,
    /// Classification failed and the query was not dispatched.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calls {
    pub edge: u32,
    pub cloud: u32,
    pub fusion: u32,
    pub editor: u32,
    pub expert: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub id: String,
    pub track: Track,
    pub urgency_score: f64,
    pub route: RouteLabel,
    pub final_text: String,
    pub ttft_ms: u64,
    pub turnaround_ms: u64,
    pub calls: Calls,
    pub delivery: Delivery,
    pub fusion: Option<FusionOutcome>,
}

impl QueryResult {
    pub fn edge_mllm_calls(&self) -> u32 {
        self.calls.edge
    }

    pub fn cloud_mllm_calls(&self) -> u32 {
        self.calls.cloud
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    urgency: Arc<dyn Classifier>,
    router: Arc<dyn Classifier>,
    experts: ExpertFixtures,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        urgency: Arc<dyn Classifier>,
        router: Arc<dyn Classifier>,
        experts: ExpertFixtures,
    ) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        Ok(Self { config, urgency, router, experts })
    }

    /// Bundled lexicon for both decisions.
    pub fn with_lexicon(config: PipelineConfig, experts: ExpertFixtures) -> Result<Self, PipelineError> {
        let lex: Arc<dyn Classifier> = Arc::new(LexiconClassifier::bundled());
        Self::new(config, lex.clone(), lex, experts)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn handle_query<H: StreamHub + ?Sized>(&self, q: &Query, hub: &mut H) -> Result<QueryResult, PipelineError> {
        let mut tts = TtsQueue::starting_at(self.config.handoff.chars_per_sec, hub.now());
        self.handle_query_with(q, hub, &mut tts)
    }

    /// Like [`Pipeline::handle_query`], speaking into a caller-provided queue.
    pub fn handle_query_with<H: StreamHub + ?Sized>(
        &self,
        q: &Query,
        hub: &mut H,
        tts: &mut TtsQueue,
    ) -> Result<QueryResult, PipelineError> {
        let start = hub.now();
        let before = Counts::read(hub);
        let cfg = &self.config.classifier;

        let urgency = detect_urgency(q, &*self.urgency, cfg).map_err(PipelineError::Urgency)?;
        hub.charge(urgency.overhead_ms);
        let route = route_query(q, &*self.router, cfg).map_err(PipelineError::Router)?;
        hub.charge(cfg.router_overhead_ms);
        let track = select_track(urgency.urgent, route.route);

        let mut expert_calls = 0;
        let mut fusion = None;
        let delivery = match track {
            Track::UrgentExpert => {
                expert_calls = 1;
                let raw = run_expert(route.route, q.frame(), &self.experts, hub);
                let text = if raw.payload.is_empty() { nothing_found(raw.route) } else { raw.payload.as_str() };
                tts.enqueue(hub.now(), text, None);
                Delivery::Answered
            }
            Track::NormalExpert => {
                expert_calls = 1;
                let raw = run_expert(route.route, q.frame(), &self.experts, hub);
                let edited = edit_response(&raw, q, hub, tts);
                if edited.fallback {
                    Delivery::EditorFallback
                } else {
                    Delivery::Answered
                }
            }
            Track::NormalGeneric => {
                hub.open(BackendKind::Cloud, request(q));
                if stream_single(hub, BackendKind::Cloud, tts) {
                    Delivery::Answered
                } else {
                    speak_notice(hub, tts, RESUBMIT_NOTICE);
                    Delivery::ResubmitNotice
                }
            }
            Track::UrgentGeneric => {
                hub.open(BackendKind::Edge, request(q));
                hub.open(BackendKind::Cloud, request(q));
                match run_fusion(hub, tts, &self.config.handoff) {
                    Ok(out) => {
                        let d = match out.winner {
                            Winner::EdgeOnlyFallback => Delivery::EdgeOnlyFallback,
                            Winner::CloudOnlyFallback => Delivery::CloudOnlyFallback,
                            Winner::CloudFirst | Winner::EdgeFirst => Delivery::Answered,
                        };
                        fusion = Some(out);
                        d
                    }
                    Err(FusionError::BothFailed | FusionError::EmptyCloudResponse) => {
                        speak_notice(hub, tts, FAILURE_NOTICE);
                        Delivery::FailureNotice
                    }
                }
            }
        };

        let after = Counts::read(hub);
        let first = tts.first_enqueue().unwrap_or(hub.now());
        let last = tts.last_enqueue().unwrap_or(first);
        Ok(QueryResult {
            id: q.id().to_owned(),
            track,
            urgency_score: urgency.score,
            route: route.route,
            final_text: tts.text(),
            ttft_ms: first - start,
            turnaround_ms: last - start,
            calls: Calls {
                edge: after.0[1] - before.0[1],
                cloud: after.0[0] - before.0[0],
                fusion: after.0[2] - before.0[2],
                editor: after.0[3] - before.0[3],
                expert: expert_calls,
            },
            delivery,
            fusion,
        })
    }
}

/// Per-kind open counts, indexed by `BackendKind as usize`.
struct Counts([u32; 4]);

impl Counts {
    fn read<H: StreamHub + ?Sized>(hub: &H) -> Self {
        Self(BackendKind::ALL.map(|k| hub.calls(k)))
    }
}

fn request(q: &Query) -> StreamRequest {
    StreamRequest::text(q.text()).with_frame(q.frame().clone())
}

/// Speaks one stream of `kind` to its end. Returns false if it failed or
/// produced no text; whatever arrived before a failure stays spoken.
pub fn stream_single<H: StreamHub + ?Sized>(hub: &mut H, kind: BackendKind, tts: &mut TtsQueue) -> bool {
    while let Some(ev) = hub.next_event() {
        if ev.source != kind {
            continue;
        }
        match ev.kind {
            EventKind::First | EventKind::Token => tts.enqueue(ev.at, &ev.text, Some(kind)),
            EventKind::End => return !hub.buffer(kind).trim().is_empty(),
            EventKind::Error => return false,
        }
    }
    false
}

/// Appends a notice after whatever was already spoken.
pub fn speak_notice<H: StreamHub + ?Sized>(hub: &H, tts: &mut TtsQueue, notice: &str) {
    let sep = if tts.is_empty() || tts.text().ends_with(char::is_whitespace) { "" } else { " " };
    tts.enqueue(hub.now(), &format!("{sep}{notice}"), None);
}

/// Edge-model call totals for a comparison of this system against an edge-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCallComparison {
    pub system: u64,
    pub edge_only: u64,
    /// `(edge_only - system) / edge_only`; zero when the baseline made no calls.
    pub reduction: f64,
}

pub fn count_edge_calls(results: &[QueryResult]) -> u64 {
    results.iter().map(|r| u64::from(r.calls.edge)).sum()
}

/// An edge-only baseline sends every query to the edge model exactly once.
pub fn compare_edge_calls(results: &[QueryResult]) -> EdgeCallComparison {
    let system = count_edge_calls(results);
    let edge_only = results.len() as u64;
    let reduction = if edge_only == 0 { 0.0 } else { (edge_only as f64 - system as f64) / edge_only as f64 };
    EdgeCallComparison { system, edge_only, reduction }
}
