//! Interactive session. Each line is one query; answers are printed at the
//! speech rate so the edge-to-continuation splice is visible as it happens.

use std::io::{BufRead, Write};
use std::process::{Command as Process, Stdio};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use edgefuse::agents::{ExpertFixtures, RuleEditor};
use edgefuse::backends::{LiveHub, Responder, ScriptedHub, StreamHub, StreamScript};
use edgefuse::fusion::{HandoffMode, TtsOp, TtsQueue};
use edgefuse::pipeline::{Pipeline, QueryResult};
use edgefuse::sim::Settings;
use edgefuse::{BackendKind, FrameRef, Query, Timestamp};

use crate::args::{GlobalArgs, ReplArgs};
use crate::config::{self, FileConfig};
use crate::error::{CliError, CliResult};

const DEMO_EDGE: &str = "You are in an airport gate area. A large sign is on your right, and a walkway leads straight ahead past a row of seats.";
const DEMO_CLOUD: &str = "You are at gate B12 in the departures hall. The boarding desk is about four meters to your right, next to the gate sign, and boarding has not started yet.";
const DEMO_FUSION: &str = " and the boarding desk for gate B12 is about four meters to your right, next to the sign.";

/// Scripted backends with latencies shaped like a nearby small model and a
/// remote large one.
fn demo_scripts() -> [(BackendKind, StreamScript); 3] {
    [
        (BackendKind::Edge, StreamScript::from_text(DEMO_EDGE, 300, 70)),
        (BackendKind::Cloud, StreamScript::from_text(DEMO_CLOUD, 1_500, 60)),
        (BackendKind::Fusion, StreamScript::from_text(DEMO_FUSION, 400, 50)),
    ]
}

/// How many milliseconds the paced display trails the speech model, so that
/// every queue operation has arrived before the moment it describes is drawn.
const DISPLAY_LAG_MS: u64 = 100;

struct Session {
    settings: Settings,
    file: FileConfig,
    args: ReplArgs,
    frame: String,
}

pub fn repl(g: &GlobalArgs, a: &ReplArgs) -> CliResult {
    let (settings, file) = config::resolve(g, None)?;
    if a.live {
        for kind in [BackendKind::Edge, BackendKind::Cloud, BackendKind::Fusion] {
            if !file.endpoints.contains_key(kind.as_str()) {
                return Err(CliError::validation(format!(
                    "--live needs an [endpoints.{}] table in the config file",
                    kind.as_str()
                )));
            }
        }
    }
    FrameRef::new(a.frame.clone()).map_err(|e| CliError::usage(e.to_string()))?;
    let mut session = Session {
        settings,
        file,
        args: ReplArgs { live: a.live, instant: a.instant, frame: a.frame.clone(), tts_command: a.tts_command.clone() },
        frame: a.frame.clone(),
    };
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let _ = writeln!(
        out,
        "edgefuse repl ({} backends, {} handoff). Type a question, or :help.",
        if a.live { "live" } else { "scripted demo" },
        session.settings.handoff.mode
    );
    let mut n = 0;
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| CliError::io(format!("stdin: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(cmd) = line.strip_prefix(':') {
            if !session.command(cmd, &mut out) {
                break;
            }
            continue;
        }
        n += 1;
        session.ask(&format!("q{n}"), line, &mut out);
    }
    Ok(())
}

impl Session {
    /// Returns false when the session should end.
    fn command(&mut self, cmd: &str, out: &mut impl Write) -> bool {
        let mut parts = cmd.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("quit" | "q" | "exit"), _) => return false,
            (Some("mode"), Some(m)) => match m.parse::<HandoffMode>() {
                Ok(mode) => {
                    self.settings.handoff.mode = mode;
                    let _ = writeln!(out, "handoff mode: {mode}");
                }
                Err(e) => {
                    let _ = writeln!(out, "{e}");
                }
            },
            (Some("mode"), None) => {
                let _ = writeln!(out, "handoff mode: {}", self.settings.handoff.mode);
            }
            (Some("frame"), Some(f)) => {
                self.frame = f.to_owned();
                let _ = writeln!(out, "frame: {f}");
            }
            _ => {
                let _ = writeln!(out, ":mode [literal|additive]   show or set the handoff rule");
                let _ = writeln!(out, ":frame <id>                set the frame passed to expert agents");
                let _ = writeln!(out, ":quit                      end the session");
            }
        }
        true
    }

    fn pipeline(&self) -> Result<Pipeline, String> {
        Pipeline::with_lexicon(self.settings.pipeline(), ExpertFixtures::bundled()).map_err(|e| e.to_string())
    }

    fn editor(&self) -> Arc<dyn Responder> {
        Arc::new(RuleEditor { latency_ms: self.settings.editor_latency_ms, gap_ms: 40 })
    }

    fn ask(&self, id: &str, text: &str, out: &mut impl Write) {
        let query = match FrameRef::new(self.frame.clone()).and_then(|f| Query::new(id, text, f)) {
            Ok(q) => q,
            Err(e) => {
                let _ = writeln!(out, "error: {e}");
                return;
            }
        };
        let pipeline = match self.pipeline() {
            Ok(p) => p,
            Err(e) => {
                let _ = writeln!(out, "error: {e}");
                return;
            }
        };
        let rate = self.settings.handoff.chars_per_sec;
        let result = if self.args.instant {
            let mut hub = self.scripted_hub();
            let mut tts = TtsQueue::starting_at(rate, hub.now());
            let r = pipeline.handle_query_with(&query, &mut hub, &mut tts);
            if r.is_ok() {
                let _ = writeln!(out, "{}", tts.text());
            }
            r
        } else {
            let epoch = Instant::now();
            let (tx, rx) = channel();
            let mut tts = TtsQueue::starting_at(rate, Timestamp(0));
            tts.set_observer(move |op: &TtsOp| {
                let _ = tx.send(op.clone());
            });
            let printer = spawn_printer(rx, rate, epoch);
            let r = if self.args.live {
                let mut hub = self.live_hub();
                pipeline.handle_query_with(&query, &mut hub, &mut tts)
            } else {
                let mut hub = self.scripted_hub().realtime();
                pipeline.handle_query_with(&query, &mut hub, &mut tts)
            };
            drop(tts);
            let _ = printer.join();
            let _ = writeln!(out);
            r
        };
        match result {
            Ok(r) => {
                let _ = writeln!(out, "{}", trace_line(&r));
                if let Some(cmd) = &self.args.tts_command {
                    if let Err(e) = pipe_to(cmd, &r.final_text) {
                        let _ = writeln!(out, "tts command failed: {e}");
                    }
                }
            }
            Err(e) => {
                let _ = writeln!(out, "error: {e}");
            }
        }
        let _ = out.flush();
    }

    fn scripted_hub(&self) -> ScriptedHub {
        let mut hub = ScriptedHub::new();
        for (kind, script) in demo_scripts() {
            hub.set_responder(kind, Arc::new(script));
        }
        hub.set_responder(BackendKind::Editor, self.editor());
        hub
    }

    fn live_hub(&self) -> LiveHub {
        let mut hub = LiveHub::new();
        for kind in BackendKind::ALL {
            if let Some(ep) = self.file.endpoints.get(kind.as_str()) {
                hub = hub.with_endpoint(kind, ep.clone());
            }
        }
        if !hub.has_backend(BackendKind::Editor) {
            hub = hub.with_script(BackendKind::Editor, self.editor());
        }
        hub
    }
}

/// Mirrors the speech queue from its operation log and prints each character
/// when its pronunciation starts. Exits once the log closes and all text is out.
fn spawn_printer(rx: Receiver<TtsOp>, rate: f64, epoch: Instant) -> JoinHandle<()> {
    std::thread::spawn(move || {
        let mut mirror = TtsQueue::starting_at(rate, Timestamp(0));
        let mut printed = 0usize;
        let mut open = true;
        let tick = Duration::from_millis(((1000.0 / rate) as u64 / 4).clamp(5, 50));
        let mut stdout = std::io::stdout();
        loop {
            if open {
                match rx.recv_timeout(tick) {
                    Ok(op) => apply(&mut mirror, &op),
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => open = false,
                }
            } else {
                std::thread::sleep(tick);
            }
            let now = (epoch.elapsed().as_millis() as u64).saturating_sub(DISPLAY_LAG_MS);
            mirror.advance_to(Timestamp(now));
            let text: Vec<char> = mirror.text().chars().collect();
            let upto = mirror.started().min(text.len());
            if upto > printed {
                let s: String = text[printed..upto].iter().collect();
                let _ = write!(stdout, "{s}");
                let _ = stdout.flush();
                printed = upto;
            }
            if !open && printed >= text.len() {
                break;
            }
        }
    })
}

fn apply(q: &mut TtsQueue, op: &TtsOp) {
    match op {
        TtsOp::Enqueue { at, text, source, .. } => q.enqueue(*at, text, *source),
        TtsOp::Truncate { at, keep_len, .. } => {
            let _ = q.truncate_after(*at, keep_len.checked_sub(1));
        }
    }
}

fn trace_line(r: &QueryResult) -> String {
    let mut s = format!(
        "[{} urgency={:.2} route={} delivery={:?} ttft={} ms turnaround={} ms",
        r.track, r.urgency_score, r.route, r.delivery, r.ttft_ms, r.turnaround_ms
    );
    if let Some(f) = &r.fusion {
        s.push_str(&format!(" winner={:?}", f.winner));
        if let Some(h) = &f.handoff {
            s.push_str(&format!(
                " mode={} p_raw={:.2} p={} p_word={:?} splice={:?} recovered={}",
                h.mode, h.p_raw, h.p_clamped, h.p_word, h.splice, h.recovered
            ));
        }
    }
    s.push(']');
    s
}

fn pipe_to(cmd: &str, text: &str) -> std::io::Result<()> {
    let mut child = Process::new("sh").arg("-c").arg(cmd).stdin(Stdio::piped()).spawn()?;
    if let Some(mut stdin) = child.stdin.take() {
        stdin.write_all(text.as_bytes())?;
    }
    child.wait()?;
    Ok(())
}
