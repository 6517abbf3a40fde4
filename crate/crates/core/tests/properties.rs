use std::sync::Arc;

use edgefuse::agents::{edit_response, run_expert, ExpertFixtures, RawExpertResponse, RuleEditor};
use edgefuse::backends::{ScriptToken, ScriptedHub, StreamHub, StreamRequest, StreamScript, Terminal};
use edgefuse::classify::{bundled_labeled, lexicon_classify, urgency_rule, Lexicon};
use edgefuse::fusion::{HandoffMode, HandoffParams, TtsOp, TtsQueue, Winner};
use edgefuse::pipeline::{Pipeline, PipelineConfig};
use edgefuse::sim::trials::{FusionCase, StreamFate};
use edgefuse::sim::{figure5, load_metrics, run_scenario_with, write_metrics, Execution, RunOptions, System};
use edgefuse::{BackendKind, EventKind, FrameRef, Query, RouteLabel, Timestamp, TokenEvent, Track};
use proptest::prelude::*;

fn script_strategy() -> impl Strategy<Value = StreamScript> {
    (0u64..500, prop::collection::vec(("[a-z]{1,5} ?", 0u64..80), 0..12), any::<bool>()).prop_map(|(ttft, toks, fails)| {
        StreamScript {
            ttft_ms: ttft,
            tokens: toks.into_iter().map(|(t, d)| ScriptToken(t, d)).collect(),
            terminal: if fails { Terminal::Error } else { Terminal::End },
        }
    })
}

fn fate() -> impl Strategy<Value = StreamFate> {
    prop::sample::select(StreamFate::ALL.to_vec())
}

fn drain(hub: &mut ScriptedHub) -> Vec<TokenEvent> {
    std::iter::from_fn(|| hub.next_event()).collect()
}

fn is_word_end(t: &[char], i: usize) -> bool {
    i < t.len() && !t[i].is_whitespace() && (i + 1 == t.len() || t[i + 1].is_whitespace())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn urgency_is_strictly_above_threshold(t in 0.01f64..0.99, s in 0.0f64..=1.0) {
        prop_assert_eq!(urgency_rule(s, t), s > t);
        prop_assert!(!urgency_rule(t, t));
        prop_assert!(urgency_rule(f64::min(1.0, t + 1e-9), t));
        prop_assert!(!urgency_rule(t - 1e-9, t));
    }

    #[test]
    fn lexicon_scores_are_pure_and_bounded(text in "\\PC{0,60}") {
        let lex = Lexicon::bundled();
        let a = lexicon_classify(&text, &lex);
        prop_assert_eq!(&a, &lexicon_classify(&text, &lex));
        for (_, s) in a.iter() {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn stream_events_are_ordered_and_buffer_coherent(script in script_strategy()) {
        let mut hub = ScriptedHub::new().with(BackendKind::Edge, script.clone());
        hub.open(BackendKind::Edge, StreamRequest::default());
        let mut delivered = String::new();
        let mut last = Timestamp(0);
        let events = drain(&mut hub);
        for (i, ev) in events.iter().enumerate() {
            prop_assert!(ev.at >= last);
            last = ev.at;
            match ev.kind {
                EventKind::First => prop_assert_eq!(i, 0),
                EventKind::Token => prop_assert!(i > 0 && events[0].kind == EventKind::First),
                EventKind::End | EventKind::Error => prop_assert_eq!(i, events.len() - 1),
            }
            if matches!(ev.kind, EventKind::First | EventKind::Token) {
                delivered.push_str(&ev.text);
            }
        }
        prop_assert!(matches!(events.last().unwrap().kind, EventKind::End | EventKind::Error));
        prop_assert_eq!(hub.buffer(BackendKind::Edge), delivered.as_str());
        if script.terminal == Terminal::End {
            prop_assert_eq!(delivered, script.full_text());
        }
    }

    #[test]
    fn nothing_arrives_after_a_cancel(script in script_strategy(), other in script_strategy(), after in 0usize..8) {
        let mut hub = ScriptedHub::new().with(BackendKind::Edge, script).with(BackendKind::Cloud, other);
        hub.open(BackendKind::Edge, StreamRequest::default());
        hub.open(BackendKind::Cloud, StreamRequest::default());
        let mut seen = 0;
        while seen < after {
            match hub.next_event() {
                Some(ev) if ev.source == BackendKind::Edge => seen += 1,
                Some(_) => {}
                None => break,
            }
        }
        let done = hub.stream(BackendKind::Edge).unwrap().status().is_done();
        hub.cancel(BackendKind::Edge);
        let buffer = hub.buffer(BackendKind::Edge).to_owned();
        let rest = drain(&mut hub);
        prop_assert!(rest.iter().all(|e| e.source != BackendKind::Edge));
        prop_assert_eq!(hub.buffer(BackendKind::Edge), buffer.as_str());
        if !done {
            let ack = hub.stream(BackendKind::Edge).unwrap().cancelled_at().unwrap();
            prop_assert!(rest.iter().all(|e| e.source != BackendKind::Edge || e.at <= ack));
        }
    }

    #[test]
    fn identical_scripts_give_identical_traces(a in script_strategy(), b in script_strategy()) {
        let run = || {
            let mut hub = ScriptedHub::new().with(BackendKind::Edge, a.clone()).with(BackendKind::Cloud, b.clone());
            hub.open(BackendKind::Edge, StreamRequest::default());
            hub.open(BackendKind::Cloud, StreamRequest::default());
            drain(&mut hub)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn fusion_speech_invariants(seed in any::<u64>(), edge in fate(), cloud in fate(), additive: bool) {
        let case = FusionCase::seeded(seed).with_fates(edge, cloud);
        let mode = if additive { HandoffMode::Additive } else { HandoffMode::Literal };
        let run = case.run(&HandoffParams { mode, ..Default::default() });

        // queue monotonicity across every enqueue and truncation
        let cursors: Vec<usize> = run.tts.log().iter().map(TtsOp::cursor).collect();
        prop_assert!(cursors.windows(2).all(|w| w[0] <= w[1]));

        let out = match run.result {
            Ok(out) => out,
            Err(_) => {
                prop_assert_eq!(edge, StreamFate::FailsBeforeFirst);
                prop_assert_eq!(cloud, StreamFate::FailsBeforeFirst);
                return Ok(());
            }
        };
        prop_assert_eq!(&out.final_text, &run.tts.text());
        let edge_text = run.hub.buffer(BackendKind::Edge).to_owned();
        match out.winner {
            Winner::CloudFirst | Winner::CloudOnlyFallback => {
                prop_assert_eq!(out.final_text, run.hub.buffer(BackendKind::Cloud));
            }
            Winner::EdgeOnlyFallback => prop_assert_eq!(out.final_text, edge_text),
            Winner::EdgeFirst => {
                let h = out.handoff.as_ref().expect("edge-first records a handoff");
                let chars: Vec<char> = edge_text.chars().collect();
                prop_assert!(h.p_clamped <= h.edge_len);
                if let Some(w) = h.p_word {
                    prop_assert!(w <= h.p_clamped);
                    prop_assert!(is_word_end(&chars, w));
                }
                if let Some(keep) = h.splice {
                    let prefix: String = chars[..=keep].iter().collect();
                    prop_assert!(out.final_text.starts_with(&prefix));
                    // never cut inside a word
                    prop_assert!(keep + 1 >= chars.len() || chars[keep].is_whitespace() || chars[keep + 1].is_whitespace());
                }
            }
        }
    }

    #[test]
    fn tracks_invoke_exactly_their_backends(idx in 0usize..50, frame in prop::sample::select(vec!["menu-01", "gate-02", "lobby-03", "desk-04", "void-99"]), edge_ttft in 50u64..600, cloud_ttft in 200u64..2000) {
        let labeled = bundled_labeled();
        let item = &labeled[idx % labeled.len()];
        let query = Query::new("q", item.text.as_str(), FrameRef::new(frame).unwrap()).unwrap();
        let mut hub = ScriptedHub::new()
            .with(BackendKind::Edge, StreamScript::from_text("The hall opens ahead of you.", edge_ttft, 40))
            .with(BackendKind::Cloud, StreamScript::from_text("A wide hall with seating runs ahead and to the left.", cloud_ttft, 40))
            .with(BackendKind::Fusion, StreamScript::from_text(" with seating to the left.", 200, 30))
            .with(BackendKind::Editor, RuleEditor::default());
        let pipeline = Pipeline::with_lexicon(PipelineConfig::default(), ExpertFixtures::bundled()).unwrap();
        let r = pipeline.handle_query(&query, &mut hub).unwrap();
        let c = &r.calls;
        for kind in [BackendKind::Edge, BackendKind::Cloud, BackendKind::Fusion, BackendKind::Editor] {
            let recorded = match kind {
                BackendKind::Edge => c.edge,
                BackendKind::Cloud => c.cloud,
                BackendKind::Fusion => c.fusion,
                BackendKind::Editor => c.editor,
            };
            prop_assert_eq!(recorded, hub.calls(kind));
        }
        match r.track {
            Track::UrgentExpert => prop_assert_eq!((c.expert, c.editor, c.edge, c.cloud, c.fusion), (1, 0, 0, 0, 0)),
            Track::NormalExpert => prop_assert_eq!((c.expert, c.editor, c.edge, c.cloud, c.fusion), (1, 1, 0, 0, 0)),
            Track::NormalGeneric => prop_assert_eq!((c.expert, c.editor, c.edge, c.cloud, c.fusion), (0, 0, 0, 1, 0)),
            Track::UrgentGeneric => {
                prop_assert_eq!((c.expert, c.editor, c.edge, c.cloud), (0, 0, 1, 1));
                let edge_first = r.fusion.as_ref().map(|f| f.winner) == Some(Winner::EdgeFirst);
                prop_assert_eq!(c.fusion, u32::from(edge_first));
                prop_assert_eq!(r.ttft_ms, edge_ttft.min(cloud_ttft) + pipeline.config().classifier.urgency_overhead_ms);
            }
        }
        prop_assert!(!r.final_text.is_empty());
    }

    #[test]
    fn expert_fixtures_are_deterministic(frame in prop::sample::select(vec!["menu-01", "gate-02", "lobby-03", "desk-04", "void-99"]), route in prop::sample::select(vec![RouteLabel::Object, RouteLabel::Ocr, RouteLabel::Face])) {
        let fixtures = ExpertFixtures::bundled();
        let frame = FrameRef::new(frame).unwrap();
        let mut a = ScriptedHub::new();
        let mut b = ScriptedHub::new();
        let ra = run_expert(route, &frame, &fixtures, &mut a);
        let rb = run_expert(route, &frame, &fixtures, &mut b);
        prop_assert_eq!(&ra, &rb);
        prop_assert_eq!(a.now(), b.now());
        prop_assert_eq!(a.now(), Timestamp(ra.latency_ms));
    }

    #[test]
    fn failed_editor_speaks_the_raw_payload(payload in "[A-Za-z0-9$. ]{1,30}", after in 0u64..2000) {
        let raw = RawExpertResponse { route: RouteLabel::Ocr, payload: payload.clone(), latency_ms: 40 };
        let query = Query::new("q", "What does it say?", FrameRef::new("f").unwrap()).unwrap();
        let mut hub = ScriptedHub::new().with(BackendKind::Editor, StreamScript::offline(after));
        let mut tts = TtsQueue::new(3.33);
        let edited = edit_response(&raw, &query, &mut hub, &mut tts);
        prop_assert!(edited.fallback);
        prop_assert_eq!(&edited.text, &payload);
        prop_assert_eq!(tts.text(), payload);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_conserves_and_repeats(seed in any::<u64>()) {
        let scenario = figure5::generate();
        let mut opts = RunOptions::for_scenario(&scenario);
        opts.seed = seed;
        for system in System::ALL {
            let a = run_scenario_with(&scenario, system, &opts);
            prop_assert_eq!(a.len(), scenario.records.len());
            let b = run_scenario_with(&scenario, system, &RunOptions { execution: Execution::Sequential, ..opts.clone() });
            prop_assert_eq!(&a, &b);

            let mut bytes = Vec::new();
            write_metrics(&a, &mut bytes).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.jsonl");
            std::fs::write(&path, &bytes).unwrap();
            prop_assert_eq!(load_metrics(&path).unwrap(), a);
        }
    }
}

#[test]
fn urgent_generic_ttft_orders_edge_system_cloud() {
    let scenario = figure5::generate();
    let opts = RunOptions::for_scenario(&scenario);
    let by = |s| run_scenario_with(&scenario, s, &opts);
    let (edge, ours, cloud) = (by(System::EdgeOnly), by(System::AudoSight), by(System::CloudOnly));
    let mut checked = 0;
    for i in 0..scenario.records.len() {
        if ours[i].truth_track == Track::UrgentGeneric && ours[i].track == Some(Track::UrgentGeneric) {
            assert!(edge[i].ttft_ms <= ours[i].ttft_ms, "{}", ours[i].id);
            assert!(ours[i].ttft_ms <= cloud[i].ttft_ms, "{}", ours[i].id);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn urgent_expert_queries_never_reach_the_editor() {
    let editor = Arc::new(RuleEditor::default());
    let pipeline = Pipeline::with_lexicon(PipelineConfig::default(), ExpertFixtures::bundled()).unwrap();
    let mut urgent_expert = 0;
    for item in bundled_labeled() {
        let mut hub = ScriptedHub::new();
        hub.set_responder(BackendKind::Editor, editor.clone());
        let q = Query::new("q", item.text.as_str(), FrameRef::new("gate-02").unwrap()).unwrap();
        let r = pipeline.handle_query(&q, &mut hub).unwrap();
        if r.track == Track::UrgentExpert {
            urgent_expert += 1;
            assert_eq!(hub.calls(BackendKind::Editor), 0, "{}", item.text);
        }
    }
    assert!(urgent_expert > 0);
}
