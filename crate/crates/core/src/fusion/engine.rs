use super::handoff::{clamp_index, predict_raw, shift_to_word_boundary, to_index, word_end_at_or_after};
use super::{build_fusion_prompt, FusionError, FusionFlags, FusionOutcome, HandoffParams, HandoffTrace, TtsQueue, Winner};
use crate::backends::{StreamHub, StreamRequest};
use crate::types::{BackendKind, EventKind, TokenEvent};

const EDGE: BackendKind = BackendKind::Edge;
const CLOUD: BackendKind = BackendKind::Cloud;
const FUSION: BackendKind = BackendKind::Fusion;

fn enqueue(tts: &mut TtsQueue, ev: &TokenEvent) {
    tts.enqueue(ev.at, &ev.text, Some(ev.source));
}

/// Runs the edge/cloud race and handoff. The caller opens the edge and cloud
/// streams on `hub` beforehand; the fusion stream is opened here.
pub fn run_fusion<H: StreamHub + ?Sized>(
    hub: &mut H,
    tts: &mut TtsQueue,
    params: &HandoffParams,
) -> Result<FusionOutcome, FusionError> {
    let mut edge_failed = false;
    let mut cloud_failed = false;

    let first = loop {
        let ev = hub.next_event().ok_or(FusionError::BothFailed)?;
        match (ev.source, ev.kind) {
            (CLOUD | EDGE, EventKind::First) => break ev,
            (EDGE, EventKind::Error) => edge_failed = true,
            (CLOUD, EventKind::Error) => cloud_failed = true,
            _ => {}
        }
        if edge_failed && cloud_failed {
            return Err(FusionError::BothFailed);
        }
    };

    let mut out = FusionOutcome {
        winner: Winner::CloudFirst,
        t1: None,
        t2: None,
        t3: None,
        handoff: None,
        flags: FusionFlags::default(),
        final_text: String::new(),
    };

    if first.source == CLOUD {
        hub.cancel(EDGE);
        out.winner = if edge_failed { Winner::CloudOnlyFallback } else { Winner::CloudFirst };
        enqueue(tts, &first);
        out.flags.cloud_interrupted = stream_to_end(hub, tts, CLOUD);
        out.final_text = tts.text();
        return Ok(out);
    }

    out.t1 = Some(first.at);
    enqueue(tts, &first);
    let mut edge_done = false;
    let mut cloud_started = false;

    if !cloud_failed {
        while let Some(ev) = hub.next_event() {
            match (ev.source, ev.kind) {
                (EDGE, EventKind::Token) => enqueue(tts, &ev),
                (EDGE, EventKind::End) => edge_done = true,
                (CLOUD, EventKind::First) => cloud_started = true,
                (EDGE, EventKind::Error) => {
                    edge_done = true;
                    out.flags.edge_interrupted = true;
                }
                (CLOUD, EventKind::End) if !hub.buffer(CLOUD).trim().is_empty() => {
                    out.t2 = Some(ev.at);
                    break;
                }
                (CLOUD, EventKind::End | EventKind::Error) => {
                    out.flags.cloud_interrupted = cloud_started && ev.kind == EventKind::Error;
                    break;
                }
                _ => {}
            }
        }
    }

    let Some(t2) = out.t2 else {
        // cloud never completed: speak the whole edge answer
        out.winner = Winner::EdgeOnlyFallback;
        if !edge_done {
            out.flags.edge_interrupted |= stream_to_end(hub, tts, EDGE);
        }
        out.final_text = tts.text();
        return Ok(out);
    };

    hub.cancel(EDGE);
    out.winner = Winner::EdgeFirst;
    let t1 = out.t1.expect("edge produced the first token");
    let edge: Vec<char> = hub.buffer(EDGE).chars().collect();

    let p_raw = predict_raw(params, t1, t2);
    let p_clamped = clamp_index(to_index(p_raw), edge.len());
    let p_word = shift_to_word_boundary(&edge, p_clamped);

    let mut recovered = false;
    let splice = match tts.truncate_after(t2, p_word) {
        Ok(()) => p_word,
        Err(behind) => {
            // speech already passed the prediction: cut at the end of the word being spoken
            recovered = true;
            let in_flight = behind.started - 1;
            let cut = word_end_at_or_after(&edge, in_flight).or(edge.len().checked_sub(1));
            tts.truncate_after(t2, cut).expect("cut lies at or after the in-flight character");
            cut
        }
    };
    let started_at_cut = tts.started();
    let keep_len = splice.map_or(0, |i| i + 1);
    let prefix: String = edge[..keep_len].iter().collect();

    let prompt = build_fusion_prompt(&prefix, hub.buffer(CLOUD))?;
    hub.open(FUSION, StreamRequest::text(prompt));

    let mut trace = HandoffTrace {
        mode: params.mode,
        p_raw,
        p_clamped,
        p_word,
        splice,
        recovered,
        edge_len: edge.len(),
        started_at_cut,
        started_at_continuation: None,
    };

    while let Some(ev) = hub.next_event() {
        if ev.source != FUSION {
            continue;
        }
        match ev.kind {
            EventKind::First => {
                tts.advance_to(ev.at);
                trace.started_at_continuation = Some(tts.started());
                out.t3 = Some(ev.at);
                enqueue(tts, &ev);
            }
            EventKind::Token => enqueue(tts, &ev),
            EventKind::End => break,
            EventKind::Error => {
                if out.t3.is_some() {
                    out.flags.fusion_interrupted = true;
                } else {
                    out.flags.fusion_failed = true;
                    let rest: String = edge[keep_len..].iter().collect();
                    tts.enqueue(ev.at, &rest, Some(EDGE));
                }
                break;
            }
        }
    }

    out.handoff = Some(trace);
    out.final_text = tts.text();
    Ok(out)
}

/// Forwards one stream's tokens to the queue until it terminates.
/// Returns true if it ended in an error.
fn stream_to_end<H: StreamHub + ?Sized>(hub: &mut H, tts: &mut TtsQueue, kind: BackendKind) -> bool {
    if hub.stream(kind).is_some_and(|h| h.status().is_done()) {
        return false;
    }
    while let Some(ev) = hub.next_event() {
        if ev.source != kind {
            continue;
        }
        match ev.kind {
            EventKind::First | EventKind::Token => enqueue(tts, &ev),
            EventKind::End => return false,
            EventKind::Error => return true,
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ScriptToken, ScriptedHub, StreamScript, Terminal};
    use crate::fusion::{HandoffMode, TtsOp};
    use crate::types::Timestamp;

    fn hub(edge: StreamScript, cloud: StreamScript, fusion: StreamScript) -> ScriptedHub {
        let mut h = ScriptedHub::new().with(EDGE, edge).with(CLOUD, cloud).with(FUSION, fusion);
        h.open(EDGE, StreamRequest::default());
        h.open(CLOUD, StreamRequest::default());
        h
    }

    fn run(h: &mut ScriptedHub, params: HandoffParams) -> (Result<FusionOutcome, FusionError>, TtsQueue) {
        let mut tts = TtsQueue::new(params.chars_per_sec);
        let r = run_fusion(h, &mut tts, &params);
        (r, tts)
    }

    const EDGE_TEXT: &str = "There are two doors ahead of you and a staircase on the left side of the hallway.";

    fn edge_script() -> StreamScript {
        StreamScript::from_text(EDGE_TEXT, 150, 40)
    }

    #[test]
    fn edge_first_splices_continuation_at_word_boundary() {
        // cloud: First at 1200, End at 6150
        let cloud = StreamScript {
            ttft_ms: 1_200,
            tokens: vec![ScriptToken("There are three doors.".into(), 0), ScriptToken(" Stairs left.".into(), 4_950)],
            terminal: Terminal::End,
        };
        let fusion = StreamScript::from_text(" correction: three doors, stairs on the left.", 300, 20);
        let mut h = hub(edge_script(), cloud, fusion);
        let params = HandoffParams { mode: HandoffMode::Additive, ..Default::default() };
        let (out, tts) = run(&mut h, params);
        let out = out.unwrap();
        assert_eq!(out.winner, Winner::EdgeFirst);
        assert_eq!(out.t1, Some(Timestamp(150)));
        assert_eq!(out.t2, Some(Timestamp(6_150)));
        assert_eq!(out.t3, Some(Timestamp(6_450)));
        let tr = out.handoff.unwrap();
        // 3.33 * (6 + 1) - 1 = 22.31 -> 22; EDGE_TEXT[22] is inside "ahead" (16..=20 is "doors"... )
        assert_eq!(tr.p_clamped, 22);
        let edge: Vec<char> = EDGE_TEXT.chars().collect();
        assert_eq!(tr.p_word, shift_to_word_boundary(&edge, 22));
        assert!(!tr.recovered || tr.splice > tr.p_word);
        let keep: String = edge[..tr.splice.unwrap() + 1].iter().collect();
        assert_eq!(out.final_text, format!("{keep} correction: three doors, stairs on the left."));
        assert_eq!(tts.text(), out.final_text);
        assert_eq!(h.calls(FUSION), 1);
        // the edge answer had already finished streaming, so stopping it at t2 was a no-op
        assert!(h.stream(EDGE).unwrap().status().is_done());
        assert_eq!(h.stream(EDGE).unwrap().cancelled_at(), None);
    }

    #[test]
    fn cloud_first_uses_cloud_only() {
        let mut h = hub(StreamScript::from_text("edge words", 200, 10), StreamScript::from_text("cloud answer here", 100, 10), StreamScript::default());
        let (out, tts) = run(&mut h, HandoffParams::default());
        let out = out.unwrap();
        assert_eq!(out.winner, Winner::CloudFirst);
        assert_eq!(out.final_text, "cloud answer here");
        assert!(tts.log().iter().all(|op| !matches!(op, TtsOp::Enqueue { source: Some(BackendKind::Edge), .. })));
        assert_eq!(h.stream(EDGE).unwrap().delivered(), 0);
        assert_eq!(h.calls(FUSION), 0);
    }

    #[test]
    fn simultaneous_first_tokens_go_to_cloud() {
        let mut h = hub(StreamScript::from_text("edge", 100, 0), StreamScript::from_text("cloud", 100, 0), StreamScript::default());
        assert_eq!(run(&mut h, HandoffParams::default()).0.unwrap().winner, Winner::CloudFirst);
    }

    #[test]
    fn cloud_outage_speaks_full_edge_answer() {
        let mut h = hub(edge_script(), StreamScript::offline(500), StreamScript::default());
        let out = run(&mut h, HandoffParams::default()).0.unwrap();
        assert_eq!(out.winner, Winner::EdgeOnlyFallback);
        assert_eq!(out.final_text, EDGE_TEXT);
    }

    #[test]
    fn cloud_outage_before_edge_first_still_falls_back_to_edge() {
        let mut h = hub(edge_script(), StreamScript::offline(10), StreamScript::default());
        let out = run(&mut h, HandoffParams::default()).0.unwrap();
        assert_eq!(out.winner, Winner::EdgeOnlyFallback);
        assert_eq!(out.final_text, EDGE_TEXT);
    }

    #[test]
    fn edge_outage_uses_cloud() {
        let mut h = hub(StreamScript::offline(50), StreamScript::from_text("cloud says hi", 900, 5), StreamScript::default());
        let out = run(&mut h, HandoffParams::default()).0.unwrap();
        assert_eq!(out.winner, Winner::CloudOnlyFallback);
        assert_eq!(out.final_text, "cloud says hi");
    }

    #[test]
    fn both_outages_fail() {
        let mut h = hub(StreamScript::offline(50), StreamScript::offline(70), StreamScript::default());
        assert_eq!(run(&mut h, HandoffParams::default()).0.unwrap_err(), FusionError::BothFailed);
    }

    #[test]
    fn fusion_failure_requeues_edge_remainder() {
        let mut h = hub(edge_script(), StreamScript::from_text("Three doors.", 1_000, 10), StreamScript::offline(200));
        let out = run(&mut h, HandoffParams::default()).0.unwrap();
        assert!(out.flags.fusion_failed);
        // edge ran ~4 s before cloud ended; the whole received edge buffer is spoken
        let edge_at_cut = h.buffer(EDGE).to_owned();
        assert_eq!(out.final_text, edge_at_cut);
    }

    #[test]
    fn literal_mode_underpredicts_and_recovers() {
        // long cloud wait: speech runs far past the literal prediction
        let cloud = StreamScript { ttft_ms: 1_000, tokens: vec![ScriptToken("Answer.".into(), 9_000)], terminal: Terminal::End };
        let mut h = hub(edge_script(), cloud, StreamScript::from_text(" more", 100, 0));
        let (out, tts) = run(&mut h, HandoffParams::default());
        let tr = out.unwrap().handoff.unwrap();
        assert!(tr.recovered);
        let edge: Vec<char> = EDGE_TEXT.chars().collect();
        let s = tr.splice.unwrap();
        assert!(s + 1 == edge.len() || edge[s + 1].is_whitespace());
        assert!(tr.started_at_cut <= s + 1);
        let cursors: Vec<usize> = tts.log().iter().map(TtsOp::cursor).collect();
        assert!(cursors.windows(2).all(|w| w[0] <= w[1]));
    }
}
