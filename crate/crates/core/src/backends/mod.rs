//! Streaming model backends.
//!
//! Every backend, scripted or live, is consumed through the same
//! [`StreamHub`] contract: open a stream per [`BackendKind`], pull events in
//! delivery order, cancel at will. Failures are in-band `Error` events, never
//! panics or early returns, so the fusion engine sees outages as stream states.

mod live;
pub mod mock;
mod scripted;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::EditorContext;
use crate::types::{BackendKind, EventKind, FrameRef, Timestamp, TokenEvent};

pub use live::{open_live_stream, BackendEndpoint, LiveHub, LiveStream, API_KEY_ENV_DEFAULT};
pub use scripted::{open_scripted_stream, Responder, ScriptedHub};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    #[default]
    End,
    Error,
}

/// One scripted token: its text and the delay after the previous token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptToken(pub String, pub u64);

impl ScriptToken {
    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn delay_ms(&self) -> u64 {
        self.1
    }
}

/// A deterministic token stream.
///
/// Token `i` fires at `open + ttft + sum(delay[0..=i])`; the terminal event
/// fires with the last token (or at `ttft` when there are none). A script with
/// no tokens that ends in `Error` models a failure before the first token.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamScript {
    pub ttft_ms: u64,
    #[serde(default)]
    pub tokens: Vec<ScriptToken>,
    #[serde(default)]
    pub terminal: Terminal,
}

impl StreamScript {
    /// Splits `text` into word tokens (each keeps its trailing whitespace)
    /// spaced `gap_ms` apart.
    pub fn from_text(text: &str, ttft_ms: u64, gap_ms: u64) -> Self {
        let tokens = split_words(text)
            .into_iter()
            .enumerate()
            .map(|(i, w)| ScriptToken(w.to_owned(), if i == 0 { 0 } else { gap_ms }))
            .collect();
        Self { ttft_ms, tokens, terminal: Terminal::End }
    }

    /// A stream that fails before producing anything.
    pub fn offline(after_ms: u64) -> Self {
        Self { ttft_ms: after_ms, tokens: Vec::new(), terminal: Terminal::Error }
    }

    pub fn failing(mut self) -> Self {
        self.terminal = Terminal::Error;
        self
    }

    pub fn full_text(&self) -> String {
        self.tokens.iter().map(ScriptToken::text).collect()
    }

    /// Offset of the last event from stream open.
    pub fn duration_ms(&self) -> u64 {
        self.ttft_ms + self.tokens.iter().map(ScriptToken::delay_ms).sum::<u64>()
    }

    /// Materializes the event sequence for a stream opened at `start`.
    pub fn events(&self, source: BackendKind, start: Timestamp) -> Vec<TokenEvent> {
        let mut out = Vec::with_capacity(self.tokens.len() + 2);
        let mut at = start.after(self.ttft_ms);
        for (i, tok) in self.tokens.iter().enumerate() {
            at = at.after(tok.delay_ms());
            let ev = if i == 0 { TokenEvent::first(source, tok.text(), at) } else { TokenEvent::token(source, tok.text(), at) };
            out.push(ev);
        }
        match self.terminal {
            Terminal::End => {
                if out.is_empty() {
                    out.push(TokenEvent::first(source, "", at));
                }
                out.push(TokenEvent::end(source, at));
            }
            Terminal::Error => out.push(TokenEvent::error(source, "scripted failure", at)),
        }
        out
    }
}

/// Splits text into whitespace-terminated word chunks: "a b  c" -> ["a ", "b  ", "c"].
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_space = false;
    let mut seen_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_space = seen_word;
        } else if in_space {
            out.push(&text[start..i]);
            start = i;
            in_space = false;
        } else {
            seen_word = true;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// What a backend is asked to produce.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamRequest {
    pub prompt: String,
    pub frame: Option<FrameRef>,
    /// Structured inputs for editor backends that do not need the rendered prompt.
    pub editor: Option<EditorContext>,
}

impl StreamRequest {
    pub fn text(prompt: impl Into<String>) -> Self {
        Self { prompt: prompt.into(), ..Self::default() }
    }

    pub fn with_frame(mut self, frame: FrameRef) -> Self {
        self.frame = Some(frame);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamStatus {
    /// Opened, nothing received yet.
    Pending,
    Streaming,
    Ended,
    Failed,
    Cancelled,
}

impl StreamStatus {
    pub fn is_done(self) -> bool {
        matches!(self, StreamStatus::Ended | StreamStatus::Failed | StreamStatus::Cancelled)
    }
}

/// Consumer-side state of one stream: its status and the text received so far.
#[derive(Debug, Clone)]
pub struct TokenStreamHandle {
    source: BackendKind,
    status: StreamStatus,
    buffer: String,
    delivered: usize,
    last_at: Timestamp,
    cancelled_at: Option<Timestamp>,
    error: Option<String>,
    cancel_flag: Arc<AtomicBool>,
}

impl TokenStreamHandle {
    pub fn new(source: BackendKind) -> Self {
        Self {
            source,
            status: StreamStatus::Pending,
            buffer: String::new(),
            delivered: 0,
            last_at: Timestamp::ZERO,
            cancelled_at: None,
            error: None,
            cancel_flag: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn source(&self) -> BackendKind {
        self.source
    }

    pub fn status(&self) -> StreamStatus {
        self.status
    }

    /// Concatenation of every delivered First/Token text.
    pub fn buffer(&self) -> &str {
        &self.buffer
    }

    /// Number of events delivered to the consumer.
    pub fn delivered(&self) -> usize {
        self.delivered
    }

    pub fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }

    pub fn cancelled_at(&self) -> Option<Timestamp> {
        self.cancelled_at
    }

    pub fn has_started(&self) -> bool {
        self.status != StreamStatus::Pending && !(self.status.is_done() && self.delivered == 0)
    }

    /// Shared flag producers poll to stop early.
    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.cancel_flag)
    }

    /// Stops delivery. Idempotent; the buffer is retained.
    pub fn cancel(&mut self, at: Timestamp) {
        self.cancel_flag.store(true, Ordering::SeqCst);
        if !self.status.is_done() {
            self.status = StreamStatus::Cancelled;
            self.cancelled_at = Some(at);
        }
    }

    /// Applies a producer event. Returns false (and drops the event) once the
    /// stream is cancelled or terminated, or if the event is out of order.
    pub fn accept(&mut self, event: &TokenEvent) -> bool {
        if self.status.is_done() || event.source != self.source {
            return false;
        }
        let ok = match (self.status, event.kind) {
            (StreamStatus::Pending, EventKind::First) => true,
            (StreamStatus::Pending, EventKind::Error) => true,
            (StreamStatus::Streaming, EventKind::Token | EventKind::End | EventKind::Error) => true,
            _ => false,
        };
        if !ok || event.at < self.last_at {
            return false;
        }
        self.last_at = event.at;
        self.delivered += 1;
        match event.kind {
            EventKind::First | EventKind::Token => {
                self.status = StreamStatus::Streaming;
                self.buffer.push_str(&event.text);
            }
            EventKind::End => self.status = StreamStatus::Ended,
            EventKind::Error => {
                self.status = StreamStatus::Failed;
                self.error = Some(event.text.clone());
            }
        }
        true
    }
}

/// Uniform access to a set of concurrently running streams, at most one per kind.
pub trait StreamHub {
    fn now(&self) -> Timestamp;

    /// Spends a fixed latency (classification, expert lookup).
    fn charge(&mut self, ms: u64);

    /// Starts a stream of `kind`, replacing (and cancelling) any earlier one.
    fn open(&mut self, kind: BackendKind, request: StreamRequest);

    /// Next event across all open streams in delivery order, already applied
    /// to the owning handle. `None` once no stream can produce more.
    fn next_event(&mut self) -> Option<TokenEvent>;

    fn cancel(&mut self, kind: BackendKind);

    fn stream(&self, kind: BackendKind) -> Option<&TokenStreamHandle>;

    /// How many times `open` was called for `kind`.
    fn calls(&self, kind: BackendKind) -> u32;

    fn buffer(&self, kind: BackendKind) -> &str {
        self.stream(kind).map(TokenStreamHandle::buffer).unwrap_or("")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_words_keeps_trailing_whitespace() {
        assert_eq!(split_words("a b  c"), ["a ", "b  ", "c"]);
        assert_eq!(split_words("  lead"), ["  lead"]);
        assert_eq!(split_words("end "), ["end "]);
        assert!(split_words("").is_empty());
    }

    #[test]
    fn from_text_round_trips() {
        let s = StreamScript::from_text("There are three exits.", 100, 40);
        assert_eq!(s.full_text(), "There are three exits.");
        assert_eq!(s.tokens.len(), 4);
        assert_eq!(s.duration_ms(), 100 + 3 * 40);
    }

    #[test]
    fn single_token_script_trace() {
        let s = StreamScript { ttft_ms: 100, tokens: vec![ScriptToken("Hi".into(), 0)], terminal: Terminal::End };
        let ev = s.events(BackendKind::Edge, Timestamp::ZERO);
        assert_eq!(ev, vec![TokenEvent::first(BackendKind::Edge, "Hi", Timestamp(100)), TokenEvent::end(BackendKind::Edge, Timestamp(100))]);
    }

    #[test]
    fn empty_script_has_coinciding_first_and_end() {
        let ev = StreamScript { ttft_ms: 70, ..Default::default() }.events(BackendKind::Cloud, Timestamp(5));
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].kind, ev[0].at, ev[0].text.as_str()), (EventKind::First, Timestamp(75), ""));
        assert_eq!((ev[1].kind, ev[1].at), (EventKind::End, Timestamp(75)));
    }

    #[test]
    fn handle_rejects_out_of_order_events() {
        let mut h = TokenStreamHandle::new(BackendKind::Edge);
        assert!(!h.accept(&TokenEvent::token(BackendKind::Edge, "x", Timestamp(1))));
        assert!(!h.accept(&TokenEvent::first(BackendKind::Cloud, "x", Timestamp(1))));
        assert!(h.accept(&TokenEvent::first(BackendKind::Edge, "a", Timestamp(5))));
        assert!(!h.accept(&TokenEvent::token(BackendKind::Edge, "b", Timestamp(4))));
        assert!(h.accept(&TokenEvent::end(BackendKind::Edge, Timestamp(6))));
        assert!(!h.accept(&TokenEvent::token(BackendKind::Edge, "c", Timestamp(7))));
        assert_eq!(h.buffer(), "a");
    }

    #[test]
    fn error_text_never_enters_buffer() {
        let mut h = TokenStreamHandle::new(BackendKind::Cloud);
        h.accept(&TokenEvent::first(BackendKind::Cloud, "par", Timestamp(1)));
        h.accept(&TokenEvent::error(BackendKind::Cloud, "boom", Timestamp(2)));
        assert_eq!(h.buffer(), "par");
        assert_eq!(h.error(), Some("boom"));
        assert_eq!(h.status(), StreamStatus::Failed);
    }
}
