use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BackendKind, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot truncate after index {keep_through:?}: {started} characters already reached the speaker")]
pub struct TruncationBehindCursor {
    pub keep_through: Option<usize>,
    pub started: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum TtsOp {
    Enqueue { at: Timestamp, text: String, source: Option<BackendKind>, cursor: usize },
    Truncate { at: Timestamp, keep_len: usize, cursor: usize },
}

impl TtsOp {
    pub fn cursor(&self) -> usize {
        match self {
            TtsOp::Enqueue { cursor, .. } | TtsOp::Truncate { cursor, .. } => *cursor,
        }
    }
}

type Observer = Box<dyn FnMut(&TtsOp) + Send>;

/// Character-paced speech queue.
///
/// Speech consumes queued characters at a fixed rate whenever any are
/// waiting. `spoken` counts characters finished; the character at index
/// `spoken` (if any) is the one currently being pronounced. Only characters
/// that have not started can be truncated.
pub struct TtsQueue {
    chars: Vec<char>,
    rate: f64,
    progress: f64,
    last: Timestamp,
    first_enqueue: Option<Timestamp>,
    last_enqueue: Option<Timestamp>,
    log: Vec<TtsOp>,
    observer: Option<Observer>,
}

impl std::fmt::Debug for TtsQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TtsQueue")
            .field("text", &self.text())
            .field("rate", &self.rate)
            .field("progress", &self.progress)
            .field("last", &self.last)
            .finish()
    }
}

impl TtsQueue {
    /// `rate` in characters per second; must be positive.
    pub fn new(rate: f64) -> Self {
        assert!(rate > 0.0, "speech rate must be positive");
        Self {
            chars: Vec::new(),
            rate,
            progress: 0.0,
            last: Timestamp::ZERO,
            first_enqueue: None,
            last_enqueue: None,
            log: Vec::new(),
            observer: None,
        }
    }

    pub fn starting_at(rate: f64, at: Timestamp) -> Self {
        Self { last: at, ..Self::new(rate) }
    }

    pub fn set_observer(&mut self, observer: impl FnMut(&TtsOp) + Send + 'static) {
        self.observer = Some(Box::new(observer));
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Moves speech forward to `at`. Earlier instants are ignored.
    pub fn advance_to(&mut self, at: Timestamp) {
        if at <= self.last {
            return;
        }
        let len = self.chars.len() as f64;
        if self.progress < len {
            let gained = self.rate * (at - self.last) as f64 / 1000.0;
            self.progress = (self.progress + gained).min(len);
        }
        self.last = at;
    }

    /// Characters fully spoken.
    pub fn cursor(&self) -> usize {
        self.progress.floor() as usize
    }

    /// Characters whose pronunciation has begun (spoken plus the one in flight).
    pub fn started(&self) -> usize {
        self.progress.ceil() as usize
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn first_enqueue(&self) -> Option<Timestamp> {
        self.first_enqueue
    }

    pub fn last_enqueue(&self) -> Option<Timestamp> {
        self.last_enqueue
    }

    pub fn log(&self) -> &[TtsOp] {
        &self.log
    }

    fn record(&mut self, op: TtsOp) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&op);
        }
        self.log.push(op);
    }

    pub fn enqueue(&mut self, at: Timestamp, text: &str, source: Option<BackendKind>) {
        self.advance_to(at);
        if text.is_empty() {
            return;
        }
        self.chars.extend(text.chars());
        self.first_enqueue.get_or_insert(at);
        self.last_enqueue = Some(at.max(self.last_enqueue.unwrap_or(at)));
        let cursor = self.cursor();
        self.record(TtsOp::Enqueue { at, text: text.to_owned(), source, cursor });
    }

    /// Keeps characters `0..=keep_through` (nothing when `None`) and drops the rest.
    pub fn truncate_after(&mut self, at: Timestamp, keep_through: Option<usize>) -> Result<(), TruncationBehindCursor> {
        self.advance_to(at);
        let keep_len = keep_through.map_or(0, |k| k + 1);
        let started = self.started();
        if keep_len < started {
            return Err(TruncationBehindCursor { keep_through, started });
        }
        if keep_len < self.chars.len() {
            self.chars.truncate(keep_len);
            let cursor = self.cursor();
            self.record(TtsOp::Truncate { at, keep_len, cursor });
        }
        Ok(())
    }

    /// Instant at which everything queued so far will have been spoken.
    pub fn drained_at(&self) -> Timestamp {
        let remaining = self.chars.len() as f64 - self.progress;
        self.last.after((remaining / self.rate * 1000.0).ceil() as u64)
    }
}
