//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::ops::Sub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the start of a run, on either a virtual or a wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn after(self, delay_ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(delay_ms))
    }

    /// Elapsed milliseconds since `earlier`, saturating at zero.
    pub fn since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Sub for Timestamp {
    type Output = u64;

    fn sub(self, rhs: Timestamp) -> u64 {
        self.since(rhs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("query text is empty")]
    EmptyText,
    #[error("query id is empty")]
    EmptyId,
    #[error("frame id is empty")]
    EmptyFrame,
}

/// Opaque handle to the scene frame captured with a query. Pixels are never decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes: Option<Vec<u8>>,
}

impl FrameRef {
    pub fn new(id: impl Into<String>) -> Result<Self, QueryError> {
        let id = id.into();
        if id.is_empty() {
            return Err(QueryError::EmptyFrame);
        }
        Ok(Self { id, bytes: None })
    }

    pub fn with_bytes(mut self, bytes: Vec<u8>) -> Self {
        self.bytes = Some(bytes);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bytes(&self) -> Option<&[u8]> {
        self.bytes.as_deref()
    }
}

/// A user query paired with the frame it refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    id: String,
    text: String,
    frame: FrameRef,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>, frame: FrameRef) -> Result<Self, QueryError> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(QueryError::EmptyId);
        }
        if text.trim().is_empty() {
            return Err(QueryError::EmptyText);
        }
        Ok(Self { id, text, frame })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn frame(&self) -> &FrameRef {
        &self.frame
    }
}

/// Output label of the intent router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteLabel {
    Object,
    Ocr,
    Face,
    Generic,
}

impl RouteLabel {
    /// Expert labels in tie-break order.
    pub const EXPERTS: [RouteLabel; 3] = [RouteLabel::Object, RouteLabel::Ocr, RouteLabel::Face];
    pub const ALL: [RouteLabel; 4] = [RouteLabel::Object, RouteLabel::Ocr, RouteLabel::Face, RouteLabel::Generic];

    pub fn is_expert(self) -> bool {
        self != RouteLabel::Generic
    }

    /// Class key used in classifier score maps.
    pub fn as_str(self) -> &'static str {
        match self {
            RouteLabel::Object => "object",
            RouteLabel::Ocr => "ocr",
            RouteLabel::Face => "face",
            RouteLabel::Generic => "generic",
        }
    }
}

impl fmt::Display for RouteLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One of the four processing subsystems a query is dispatched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    UrgentExpert,
    NormalExpert,
    UrgentGeneric,
    NormalGeneric,
}

impl Track {
    pub fn is_urgent(self) -> bool {
        matches!(self, Track::UrgentExpert | Track::UrgentGeneric)
    }

    pub fn is_expert(self) -> bool {
        matches!(self, Track::UrgentExpert | Track::NormalExpert)
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Track::UrgentExpert => "urgent-expert",
            Track::NormalExpert => "normal-expert",
            Track::UrgentGeneric => "urgent-generic",
            Track::NormalGeneric => "normal-generic",
        };
        f.write_str(s)
    }
}

/// Maps the urgency flag and router label onto a track.
pub fn select_track(urgent: bool, route: RouteLabel) -> Track {
    match (urgent, route.is_expert()) {
        (true, true) => Track::UrgentExpert,
        (false, true) => Track::NormalExpert,
        (true, false) => Track::UrgentGeneric,
        (false, false) => Track::NormalGeneric,
    }
}

/// Which model tier produced a stream.
///
/// The declaration order doubles as delivery priority when two streams
/// emit at the same virtual instant: cloud events are observed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Cloud,
    Edge,
    Fusion,
    Editor,
}

impl BackendKind {
    pub const ALL: [BackendKind; 4] = [BackendKind::Cloud, BackendKind::Edge, BackendKind::Fusion, BackendKind::Editor];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Cloud => "cloud",
            BackendKind::Edge => "edge",
            BackendKind::Fusion => "fusion",
            BackendKind::Editor => "editor",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    First,
    Token,
    End,
    Error,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::End | EventKind::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub kind: EventKind,
    pub text: String,
    pub at: Timestamp,
    pub source: BackendKind,
}

impl TokenEvent {
    pub fn first(source: BackendKind, text: impl Into<String>, at: Timestamp) -> Self {
        Self { kind: EventKind::First, text: text.into(), at, source }
    }

    pub fn token(source: BackendKind, text: impl Into<String>, at: Timestamp) -> Self {
        Self { kind: EventKind::Token, text: text.into(), at, source }
    }

    pub fn end(source: BackendKind, at: Timestamp) -> Self {
        Self { kind: EventKind::End, text: String::new(), at, source }
    }

    /// Error events carry their diagnostic in `text`; it is never appended to a buffer.
    pub fn error(source: BackendKind, reason: impl Into<String>, at: Timestamp) -> Self {
        Self { kind: EventKind::Error, text: reason.into(), at, source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_track_examples() {
        assert_eq!(select_track(true, RouteLabel::Ocr), Track::UrgentExpert);
        assert_eq!(select_track(false, RouteLabel::Generic), Track::NormalGeneric);
        assert_eq!(select_track(true, RouteLabel::Generic), Track::UrgentGeneric);
    }

    #[test]
    fn select_track_is_total_and_collapses_experts() {
        for urgent in [true, false] {
            let expert: Vec<Track> = RouteLabel::EXPERTS.iter().map(|&r| select_track(urgent, r)).collect();
            assert!(expert.windows(2).all(|w| w[0] == w[1]));
            assert_eq!(expert[0].is_urgent(), urgent);
            assert!(expert[0].is_expert());
            let generic = select_track(urgent, RouteLabel::Generic);
            assert!(!generic.is_expert());
            assert_eq!(generic.is_urgent(), urgent);
        }
    }

    #[test]
    fn query_rejects_blank_text() {
        let frame = FrameRef::new("f").unwrap();
        assert_eq!(Query::new("q", "   \t", frame.clone()), Err(QueryError::EmptyText));
        assert_eq!(Query::new("", "hi", frame), Err(QueryError::EmptyId));
        assert_eq!(FrameRef::new(""), Err(QueryError::EmptyFrame));
    }

    #[test]
    fn backend_priority_puts_cloud_first() {
        assert!(BackendKind::Cloud < BackendKind::Edge);
        assert!(BackendKind::Edge < BackendKind::Fusion);
    }
}
