use std::collections::BTreeMap;
use std::sync::Arc;

use super::{StreamHub, StreamRequest, StreamScript, TokenStreamHandle};
use crate::clock::{Clock, VirtualClock, WallClock};
use crate::types::{BackendKind, Timestamp, TokenEvent};

/// Produces a script for a request. Fixed scripts ignore the request.
pub trait Responder: Send + Sync {
    fn respond(&self, request: &StreamRequest) -> StreamScript;
}

impl Responder for StreamScript {
    fn respond(&self, _request: &StreamRequest) -> StreamScript {
        self.clone()
    }
}

/// Schedules `script` on `clock` starting now and returns the consumer handle.
/// Events come out of `clock.pop()` and must be fed to [`TokenStreamHandle::accept`].
pub fn open_scripted_stream(
    script: &StreamScript,
    source: BackendKind,
    clock: &mut VirtualClock<TokenEvent>,
) -> TokenStreamHandle {
    for ev in script.events(source, clock.now()) {
        let at = ev.at;
        clock.schedule_at(at, source as u8, ev);
    }
    TokenStreamHandle::new(source)
}

/// Stream hub over scripted backends on a virtual clock.
///
/// With `realtime` set, delivery also sleeps until each event's virtual instant
/// elapses on the wall clock, which lets demos replay a schedule at speaking pace.
pub struct ScriptedHub {
    clock: VirtualClock<TokenEvent>,
    responders: BTreeMap<BackendKind, Arc<dyn Responder>>,
    streams: BTreeMap<BackendKind, TokenStreamHandle>,
    calls: BTreeMap<BackendKind, u32>,
    requests: Vec<(BackendKind, StreamRequest)>,
    realtime: Option<WallClock>,
}

impl Default for ScriptedHub {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedHub {
    pub fn new() -> Self {
        Self {
            clock: VirtualClock::new(),
            responders: BTreeMap::new(),
            streams: BTreeMap::new(),
            calls: BTreeMap::new(),
            requests: Vec::new(),
            realtime: None,
        }
    }

    pub fn with(mut self, kind: BackendKind, responder: impl Responder + 'static) -> Self {
        self.set_responder(kind, Arc::new(responder));
        self
    }

    pub fn set_responder(&mut self, kind: BackendKind, responder: Arc<dyn Responder>) {
        self.responders.insert(kind, responder);
    }

    pub fn realtime(mut self) -> Self {
        self.realtime = Some(WallClock::new());
        self
    }

    /// Every request passed to `open`, in order.
    pub fn requests(&self) -> &[(BackendKind, StreamRequest)] {
        &self.requests
    }

    fn pace(&self, at: Timestamp) {
        if let Some(wall) = &self.realtime {
            wall.sleep_until(at);
        }
    }
}

impl StreamHub for ScriptedHub {
    fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn charge(&mut self, ms: u64) {
        self.clock.advance_by(ms);
        self.pace(self.clock.now());
    }

    fn open(&mut self, kind: BackendKind, request: StreamRequest) {
        self.cancel(kind);
        *self.calls.entry(kind).or_default() += 1;
        let handle = match self.responders.get(&kind) {
            Some(responder) => open_scripted_stream(&responder.respond(&request), kind, &mut self.clock),
            None => {
                let now = self.clock.now();
                self.clock.schedule_at(now, kind as u8, TokenEvent::error(kind, format!("no {kind} backend configured"), now));
                TokenStreamHandle::new(kind)
            }
        };
        self.requests.push((kind, request));
        self.streams.insert(kind, handle);
    }

    fn next_event(&mut self) -> Option<TokenEvent> {
        while let Some((at, ev)) = self.clock.pop() {
            let Some(handle) = self.streams.get_mut(&ev.source) else { continue };
            if handle.accept(&ev) {
                self.pace(at);
                return Some(ev);
            }
        }
        None
    }

    fn cancel(&mut self, kind: BackendKind) {
        let now = self.clock.now();
        if let Some(h) = self.streams.get_mut(&kind) {
            h.cancel(now);
        }
        self.clock.retain(|ev| ev.source != kind);
    }

    fn stream(&self, kind: BackendKind) -> Option<&TokenStreamHandle> {
        self.streams.get(&kind)
    }

    fn calls(&self, kind: BackendKind) -> u32 {
        self.calls.get(&kind).copied().unwrap_or(0)
    }
}
