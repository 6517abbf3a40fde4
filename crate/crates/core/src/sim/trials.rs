//! Randomized fusion cases for property checks and benchmarks.
//!
//! Latencies are drawn uniformly from the ranges below. The fusion range
//! deliberately extends past the default additive margin (2 x 0.5 s) so both
//! covered and uncovered continuations occur.

use std::ops::RangeInclusive;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::backends::{split_words, ScriptToken, ScriptedHub, StreamHub, StreamRequest, StreamScript, Terminal};
use crate::fusion::{run_fusion, FusionError, FusionOutcome, HandoffParams, TtsQueue};
use crate::types::BackendKind;

pub const EDGE_TTFT_MS: RangeInclusive<u64> = 50..=500;
pub const CLOUD_TTFT_MS: RangeInclusive<u64> = 200..=3_000;
pub const FUSION_TTFT_MS: RangeInclusive<u64> = 50..=1_500;
pub const TOKEN_GAP_MS: RangeInclusive<u64> = 10..=120;
pub const EDGE_WORDS: RangeInclusive<usize> = 1..=40;
pub const CLOUD_WORDS: RangeInclusive<usize> = 1..=60;
pub const FUSION_WORDS: RangeInclusive<usize> = 1..=20;

const SYLLABLES: &[&str] = &["ta", "ro", "ve", "mi", "sun", "ka", "lo", "dor", "e", "an", "pre", "st"];
const PUNCT: &[&str] = &["", "", "", "", ",", ".", "?", "!"];

/// Short pseudo-words with occasional trailing punctuation.
pub fn random_words(rng: &mut impl Rng, n: usize) -> String {
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        let mut w = String::new();
        let target = rng.random_range(1..=8usize);
        while w.chars().count() < target {
            w.push_str(SYLLABLES.choose(rng).expect("non-empty"));
        }
        w.push_str(PUNCT.choose(rng).expect("non-empty"));
        words.push(w);
    }
    words.join(" ")
}

/// Word tokens from `text` with independently drawn gaps.
pub fn random_script(rng: &mut impl Rng, text: &str, ttft: RangeInclusive<u64>) -> StreamScript {
    let tokens = split_words(text)
        .into_iter()
        .enumerate()
        .map(|(i, w)| ScriptToken(w.to_owned(), if i == 0 { 0 } else { rng.random_range(TOKEN_GAP_MS) }))
        .collect();
    StreamScript { ttft_ms: rng.random_range(ttft), tokens, terminal: Terminal::End }
}

/// How a stream ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamFate {
    Completes,
    /// First token arrives, then an error part-way through.
    FailsMidway,
    /// Error before the first token.
    FailsBeforeFirst,
}

impl StreamFate {
    pub const ALL: [StreamFate; 3] = [StreamFate::Completes, StreamFate::FailsMidway, StreamFate::FailsBeforeFirst];

    pub fn apply(self, script: &StreamScript) -> StreamScript {
        match self {
            StreamFate::Completes => script.clone(),
            StreamFate::FailsMidway => {
                let keep = script.tokens.len().div_ceil(2).max(1);
                let mut s = script.clone();
                s.tokens.truncate(keep);
                if s.tokens.is_empty() {
                    s.tokens.push(ScriptToken("partial ".into(), 0));
                }
                s.terminal = Terminal::Error;
                s
            }
            StreamFate::FailsBeforeFirst => StreamScript::offline(script.ttft_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionCase {
    pub edge: StreamScript,
    pub cloud: StreamScript,
    pub fusion: StreamScript,
}

impl FusionCase {
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(EDGE_WORDS);
        let text = random_words(rng, n);
        let edge = random_script(rng, &text, EDGE_TTFT_MS);
        let n = rng.random_range(CLOUD_WORDS);
        let text = random_words(rng, n);
        let cloud = random_script(rng, &text, CLOUD_TTFT_MS);
        let n = rng.random_range(FUSION_WORDS);
        let text = format!(" {}", random_words(rng, n));
        let fusion = random_script(rng, &text, FUSION_TTFT_MS);
        Self { edge, cloud, fusion }
    }

    /// The case drawn from a ChaCha8 stream seeded with `seed`.
    pub fn seeded(seed: u64) -> Self {
        Self::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_fates(&self, edge: StreamFate, cloud: StreamFate) -> Self {
        Self { edge: edge.apply(&self.edge), cloud: cloud.apply(&self.cloud), fusion: self.fusion.clone() }
    }

    /// Opens edge and cloud at time zero and runs the fusion engine to completion.
    pub fn run(&self, params: &HandoffParams) -> CaseRun {
        let mut hub = ScriptedHub::new()
            .with(BackendKind::Edge, self.edge.clone())
            .with(BackendKind::Cloud, self.cloud.clone())
            .with(BackendKind::Fusion, self.fusion.clone());
        hub.open(BackendKind::Edge, StreamRequest::default());
        hub.open(BackendKind::Cloud, StreamRequest::default());
        let mut tts = TtsQueue::new(params.chars_per_sec);
        let result = run_fusion(&mut hub, &mut tts, params);
        CaseRun { result, tts, hub }
    }
}

pub struct CaseRun {
    pub result: Result<FusionOutcome, FusionError>,
    pub tts: TtsQueue,
    pub hub: ScriptedHub,
}
