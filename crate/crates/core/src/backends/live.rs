//! Client for streaming chat-completions endpoints.
//!
//! Request: `POST {base_url}/chat/completions` with
//! `{"model": .., "stream": true, "messages": [{"role": "user", "content": ..}]}`.
//! When the frame carries bytes, `content` is a list of a `text` part and an
//! `image_url` part holding a base64 data URL; otherwise it is the prompt
//! string with the frame id appended.
//!
//! Response: server-sent events, one `data: {json}` line per chunk with the
//! increment at `choices[0].delta.content`, terminated by `data: [DONE]`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Responder, StreamHub, StreamRequest, StreamScript, TokenStreamHandle};
use crate::clock::{Clock, WallClock};
use crate::types::{BackendKind, Timestamp, TokenEvent};

pub const API_KEY_ENV_DEFAULT: &str = "EDGEFUSE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpoint {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. `None` sends no auth header.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl BackendEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model: model.into(), api_key_env: None, timeout_ms: default_timeout_ms() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_ms == 0 {
            return Err(format!("endpoint {} has a zero timeout", self.base_url));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub(crate) fn request_body(model: &str, request: &StreamRequest) -> Value {
    let content = match &request.frame {
        Some(frame) if frame.bytes().is_some() => {
            let b64 = base64::engine::general_purpose::STANDARD.encode(frame.bytes().unwrap_or_default());
            json!([
                {"type": "text", "text": request.prompt},
                {"type": "image_url", "image_url": {"url": format!("data:image/jpeg;base64,{b64}")}},
            ])
        }
        Some(frame) => Value::String(format!("{}\n[frame: {}]", request.prompt, frame.id())),
        None => Value::String(request.prompt.clone()),
    };
    json!({
        "model": model,
        "stream": true,
        "messages": [{"role": "user", "content": content}],
    })
}

/// Result of parsing one SSE line.
#[derive(Debug, PartialEq)]
pub(crate) enum SseLine {
    Delta(String),
    Done,
    Ignore,
}

pub(crate) fn parse_sse_line(line: &str) -> Result<SseLine, String> {
    let line = line.trim_end_matches(['\r', '\n']);
    let Some(data) = line.strip_prefix("data:") else {
        return Ok(SseLine::Ignore);
    };
    let data = data.trim_start();
    if data == "[DONE]" {
        return Ok(SseLine::Done);
    }
    let v: Value = serde_json::from_str(data).map_err(|e| format!("malformed chunk: {e}"))?;
    let delta = v
        .pointer("/choices/0/delta/content")
        .and_then(Value::as_str)
        .unwrap_or_default();
    Ok(SseLine::Delta(delta.to_owned()))
}

/// Sends an Error if the producer exits without a terminal event.
struct Producer {
    source: BackendKind,
    clock: WallClock,
    tx: Sender<TokenEvent>,
    started: bool,
    finished: bool,
}

impl Producer {
    fn emit_text(&mut self, text: String) {
        let at = self.clock.now();
        let ev = if self.started { TokenEvent::token(self.source, text, at) } else { TokenEvent::first(self.source, text, at) };
        self.started = true;
        let _ = self.tx.send(ev);
    }

    fn end(&mut self) {
        if !self.started {
            self.emit_text(String::new());
        }
        self.finished = true;
        let _ = self.tx.send(TokenEvent::end(self.source, self.clock.now()));
    }

    fn fail(&mut self, reason: impl Into<String>) {
        self.finished = true;
        let _ = self.tx.send(TokenEvent::error(self.source, reason, self.clock.now()));
    }
}

impl Drop for Producer {
    fn drop(&mut self) {
        if !self.finished {
            self.fail("producer exited without a terminal event");
        }
    }
}

fn stream_http(endpoint: &BackendEndpoint, request: &StreamRequest, cancel: &AtomicBool, out: &mut Producer) {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let mut req = agent.post(endpoint.url()).header("Accept", "text/event-stream");
    if let Some(var) = &endpoint.api_key_env {
        match std::env::var(var) {
            Ok(key) => req = req.header("Authorization", format!("Bearer {key}")),
            Err(_) => return out.fail(format!("credential variable {var} is not set")),
        }
    }
    let body = request_body(&endpoint.model, request).to_string();
    let resp = match req.header("Content-Type", "application/json").send(body.as_str()) {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return out.fail("timeout before response"),
        Err(e) => return out.fail(format!("connect failure: {e}")),
    };
    if !resp.status().is_success() {
        return out.fail(format!("protocol error: HTTP {}", resp.status()));
    }
    let mut reader = BufReader::new(resp.into_body().into_reader());
    let mut line = String::new();
    loop {
        if cancel.load(Ordering::SeqCst) {
            return out.fail("cancelled");
        }
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => return out.fail("protocol error: stream closed before [DONE]"),
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::TimedOut => return out.fail("timeout mid-stream"),
            Err(e) => return out.fail(format!("read failure: {e}")),
        }
        match parse_sse_line(&line) {
            Ok(SseLine::Done) => return out.end(),
            Ok(SseLine::Delta(d)) if !d.is_empty() => out.emit_text(d),
            Ok(_) => {}
            Err(e) => return out.fail(format!("protocol error: {e}")),
        }
    }
}

fn play_script(script: &StreamScript, started_at: Timestamp, cancel: &AtomicBool, out: &mut Producer) {
    for ev in script.events(out.source, started_at) {
        out.clock.sleep_until(ev.at);
        if cancel.load(Ordering::SeqCst) {
            return out.fail("cancelled");
        }
        match ev.kind {
            crate::types::EventKind::First | crate::types::EventKind::Token => out.emit_text(ev.text),
            crate::types::EventKind::End => out.end(),
            crate::types::EventKind::Error => out.fail(ev.text),
        }
    }
}

enum Backend {
    Http(BackendEndpoint),
    Script(Arc<dyn Responder>),
}

fn spawn(backend: &Backend, kind: BackendKind, request: StreamRequest, clock: WallClock, tx: Sender<TokenEvent>, cancel: Arc<AtomicBool>) {
    let mut out = Producer { source: kind, clock, tx, started: false, finished: false };
    match backend {
        Backend::Http(endpoint) => {
            let endpoint = endpoint.clone();
            std::thread::spawn(move || stream_http(&endpoint, &request, &cancel, &mut out));
        }
        Backend::Script(responder) => {
            let script = responder.respond(&request);
            let start = clock.now();
            std::thread::spawn(move || play_script(&script, start, &cancel, &mut out));
        }
    }
}

/// A single live stream with its own event channel.
pub struct LiveStream {
    handle: TokenStreamHandle,
    rx: Receiver<TokenEvent>,
    clock: WallClock,
}

/// Issues one streaming completion request on a background thread.
pub fn open_live_stream(endpoint: &BackendEndpoint, prompt: &str, frame: Option<crate::types::FrameRef>) -> LiveStream {
    let clock = WallClock::new();
    let (tx, rx) = channel();
    let handle = TokenStreamHandle::new(BackendKind::Cloud);
    let request = StreamRequest { prompt: prompt.to_owned(), frame, editor: None };
    spawn(&Backend::Http(endpoint.clone()), BackendKind::Cloud, request, clock, tx, handle.cancel_flag());
    LiveStream { handle, rx, clock }
}

impl LiveStream {
    /// Blocks for the next delivered event; `None` after the terminal event or cancellation.
    pub fn next_event(&mut self) -> Option<TokenEvent> {
        while !self.handle.status().is_done() {
            let ev = self.rx.recv().ok()?;
            if self.handle.accept(&ev) {
                return Some(ev);
            }
        }
        None
    }

    pub fn cancel(&mut self) {
        self.handle.cancel(self.clock.now());
    }

    pub fn handle(&self) -> &TokenStreamHandle {
        &self.handle
    }
}

/// Stream hub over wall-clock backends: HTTP endpoints, or scripts played in real time.
pub struct LiveHub {
    clock: WallClock,
    backends: BTreeMap<BackendKind, Backend>,
    streams: BTreeMap<BackendKind, TokenStreamHandle>,
    calls: BTreeMap<BackendKind, u32>,
    tx: Sender<TokenEvent>,
    rx: Receiver<TokenEvent>,
}

impl Default for LiveHub {
    fn default() -> Self {
        Self::new()
    }
}

impl LiveHub {
    pub fn new() -> Self {
        let (tx, rx) = channel();
        Self { clock: WallClock::new(), backends: BTreeMap::new(), streams: BTreeMap::new(), calls: BTreeMap::new(), tx, rx }
    }

    pub fn with_endpoint(mut self, kind: BackendKind, endpoint: BackendEndpoint) -> Self {
        self.backends.insert(kind, Backend::Http(endpoint));
        self
    }

    pub fn with_script(mut self, kind: BackendKind, responder: Arc<dyn Responder>) -> Self {
        self.backends.insert(kind, Backend::Script(responder));
        self
    }

    pub fn has_backend(&self, kind: BackendKind) -> bool {
        self.backends.contains_key(&kind)
    }
}

impl StreamHub for LiveHub {
    fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn charge(&mut self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }

    fn open(&mut self, kind: BackendKind, request: StreamRequest) {
        self.cancel(kind);
        *self.calls.entry(kind).or_default() += 1;
        let handle = TokenStreamHandle::new(kind);
        match self.backends.get(&kind) {
            Some(backend) => spawn(backend, kind, request, self.clock, self.tx.clone(), handle.cancel_flag()),
            None => {
                let _ = self.tx.send(TokenEvent::error(kind, format!("no {kind} backend configured"), self.clock.now()));
            }
        }
        self.streams.insert(kind, handle);
    }

    fn next_event(&mut self) -> Option<TokenEvent> {
        loop {
            if self.streams.values().all(|h| h.status().is_done()) {
                return None;
            }
            let ev = self.rx.recv().ok()?;
            if let Some(h) = self.streams.get_mut(&ev.source) {
                if h.accept(&ev) {
                    return Some(ev);
                }
            }
        }
    }

    fn cancel(&mut self, kind: BackendKind) {
        let now = self.clock.now();
        if let Some(h) = self.streams.get_mut(&kind) {
            h.cancel(now);
        }
    }

    fn stream(&self, kind: BackendKind) -> Option<&TokenStreamHandle> {
        self.streams.get(&kind)
    }

    fn calls(&self, kind: BackendKind) -> u32 {
        self.calls.get(&kind).copied().unwrap_or(0)
    }
}
