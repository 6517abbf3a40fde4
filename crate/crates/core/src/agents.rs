//! Expert agents backed by fixtures, and the response editor that rewrites
//! their raw findings into a short spoken answer.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Responder, StreamHub, StreamRequest, StreamScript};
use crate::fusion::TtsQueue;
use crate::template;
use crate::types::{BackendKind, EventKind, FrameRef, Query, RouteLabel};

pub const DEFAULT_EXPERT_LATENCY_MS: u64 = 40;
pub const DEFAULT_EDITOR_LATENCY_MS: u64 = 800;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing expert fixtures: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate fixture for frame `{frame}` route {route}")]
    Duplicate { frame: String, route: RouteLabel },
    #[error("fixture for frame `{0}` uses the generic route")]
    GenericRoute(String),
}

fn default_latency() -> u64 {
    DEFAULT_EXPERT_LATENCY_MS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertEntry {
    pub frame: String,
    pub route: RouteLabel,
    pub payload: String,
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
}

/// Canned expert output keyed by `(frame id, route)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpertFixtures {
    entries: BTreeMap<(String, RouteLabel), (String, u64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    entries: Vec<ExpertEntry>,
}

impl ExpertFixtures {
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../assets/experts.json")).expect("bundled expert fixtures are valid")
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ExpertEntry>) -> Result<Self, FixtureError> {
        let mut out = Self::default();
        for e in entries {
            if e.route == RouteLabel::Generic {
                return Err(FixtureError::GenericRoute(e.frame));
            }
            let key = (e.frame, e.route);
            if out.entries.contains_key(&key) {
                return Err(FixtureError::Duplicate { frame: key.0, route: key.1 });
            }
            out.entries.insert(key, (e.payload, e.latency_ms));
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        let file: FixtureFile = serde_json::from_str(text)?;
        Self::from_entries(file.entries)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn insert(&mut self, entry: ExpertEntry) {
        self.entries.insert((entry.frame, entry.route), (entry.payload, entry.latency_ms));
    }

    pub fn get(&self, frame: &str, route: RouteLabel) -> Option<(&str, u64)> {
        self.entries.get(&(frame.to_owned(), route)).map(|(p, l)| (p.as_str(), *l))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExpertResponse {
    pub route: RouteLabel,
    /// Empty when nothing was detected.
    pub payload: String,
    pub latency_ms: u64,
}

/// Looks up the expert result for `frame` and charges its latency on the hub clock.
/// A missing fixture is a valid "nothing found" answer at the default latency.
pub fn run_expert<H: StreamHub + ?Sized>(
    route: RouteLabel,
    frame: &FrameRef,
    fixtures: &ExpertFixtures,
    hub: &mut H,
) -> RawExpertResponse {
    assert!(route.is_expert(), "run_expert needs an expert route");
    let (payload, latency_ms) = fixtures.get(frame.id(), route).unwrap_or(("", DEFAULT_EXPERT_LATENCY_MS));
    hub.charge(latency_ms);
    RawExpertResponse { route, payload: payload.to_owned(), latency_ms }
}

/// Structured editor input, carried next to the rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorContext {
    pub query: String,
    pub route: RouteLabel,
    pub payload: String,
}

pub fn editor_prompt(ctx: &EditorContext) -> String {
    let route = match ctx.route {
        RouteLabel::Ocr => "text recognition",
        RouteLabel::Object => "object detection",
        RouteLabel::Face => "face recognition",
        RouteLabel::Generic => "none",
    };
    let findings = if ctx.payload.trim().is_empty() { "(none)" } else { ctx.payload.as_str() };
    template::render(template::EDITOR_V1, &[("route", route), ("findings", findings), ("query", &ctx.query)])
}

/// What to say when an expert found nothing.
pub fn nothing_found(route: RouteLabel) -> &'static str {
    match route {
        RouteLabel::Ocr => "I could not find any readable text.",
        RouteLabel::Object => "I could not detect any objects nearby.",
        RouteLabel::Face => "I do not recognize anyone here.",
        RouteLabel::Generic => "I could not find anything relevant.",
    }
}

fn items(payload: &str) -> Vec<&str> {
    payload.split([';', ',', '\n']).map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn spoken_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

/// Deterministic template-driven rewrite used in place of an editor model.
pub fn rule_edit(ctx: &EditorContext) -> String {
    let found = items(&ctx.payload);
    if found.is_empty() {
        return nothing_found(ctx.route).to_owned();
    }
    match ctx.route {
        RouteLabel::Face => {
            let verb = if found.len() == 1 { "is" } else { "are" };
            format!("Yes, {} {verb} here.", spoken_list(&found))
        }
        RouteLabel::Ocr => format!("It says: {}.", ctx.payload.trim().trim_end_matches('.')),
        RouteLabel::Object => {
            let named: Vec<String> = found.iter().map(|i| with_article(i)).collect();
            let named: Vec<&str> = named.iter().map(String::as_str).collect();
            format!("Nearby there is {}.", spoken_list(&named))
        }
        RouteLabel::Generic => ctx.payload.trim().to_owned(),
    }
}

fn with_article(item: &str) -> String {
    let vowel = item.chars().next().is_some_and(|c| "aeiouAEIOU".contains(c));
    format!("{} {item}", if vowel { "an" } else { "a" })
}

/// Editor backend that applies [`rule_edit`] to the request's structured context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleEditor {
    pub latency_ms: u64,
    pub gap_ms: u64,
}

impl Default for RuleEditor {
    fn default() -> Self {
        Self { latency_ms: DEFAULT_EDITOR_LATENCY_MS, gap_ms: 40 }
    }
}

impl Responder for RuleEditor {
    fn respond(&self, request: &StreamRequest) -> StreamScript {
        match &request.editor {
            Some(ctx) => StreamScript::from_text(&rule_edit(ctx), self.latency_ms, self.gap_ms),
            None => StreamScript::offline(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditedResponse {
    pub text: String,
    /// From editor request to its last event.
    pub editor_latency_ms: u64,
    /// The editor was unavailable and the raw payload was spoken instead.
    pub fallback: bool,
}

/// Streams the editor's rewrite of `raw` into `tts`. If the editor fails before
/// producing anything, the raw payload is spoken verbatim (or the nothing-found
/// phrase when there is no payload).
pub fn edit_response<H: StreamHub + ?Sized>(
    raw: &RawExpertResponse,
    query: &Query,
    hub: &mut H,
    tts: &mut TtsQueue,
) -> EditedResponse {
    let ctx = EditorContext { query: query.text().to_owned(), route: raw.route, payload: raw.payload.clone() };
    let start = hub.now();
    let request = StreamRequest { prompt: editor_prompt(&ctx), frame: None, editor: Some(ctx) };
    hub.open(BackendKind::Editor, request);

    let mut text = String::new();
    let mut started = false;
    let mut fallback = false;
    while let Some(ev) = hub.next_event() {
        if ev.source != BackendKind::Editor {
            continue;
        }
        match ev.kind {
            EventKind::First | EventKind::Token => {
                started = true;
                text.push_str(&ev.text);
                tts.enqueue(ev.at, &ev.text, Some(BackendKind::Editor));
            }
            EventKind::End => break,
            EventKind::Error => {
                if !started {
                    fallback = true;
                    text = if raw.payload.is_empty() { nothing_found(raw.route).to_owned() } else { raw.payload.clone() };
                    tts.enqueue(ev.at, &text, None);
                }
                break;
            }
        }
    }
    EditedResponse { text, editor_latency_ms: hub.now() - start, fallback }
}
