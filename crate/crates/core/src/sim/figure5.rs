//! Generator for the bundled 200-query latency workload
//! (`scenarios/figure5.jsonl`).
//!
//! Queries split evenly over urgent/normal x expert/generic. Latencies are
//! synthetic: edge first token ~150 ms, cloud first token ~1200 ms, 40 ms
//! between tokens, and cloud answers of 120 words, long enough that the cloud
//! stream dominates end-to-end time the way a large remote model does.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::scenario::{RecordExpert, Scenario, ScenarioRecord, Scripts, Truth};
use crate::backends::StreamScript;
use crate::types::RouteLabel;

pub const RECORDS: usize = 200;
pub const SEED: u64 = 7;
pub const JITTER_MS: u64 = 20;

pub const EDGE_TTFT_MS: u64 = 150;
pub const CLOUD_TTFT_MS: u64 = 1_200;
pub const FUSION_TTFT_MS: u64 = 200;
pub const TOKEN_GAP_MS: u64 = 40;
pub const FUSION_GAP_MS: u64 = 25;
pub const EDGE_WORDS: usize = 22;
pub const CLOUD_WORDS: usize = 120;

const URGENT_OCR: &[&str] = &[
    "Quick, what does this sign say?",
    "Hurry, read the label on this bottle.",
    "Quickly read the price on this menu.",
    "Read the text on this screen now.",
    "Urgent: what is written on this sign?",
];
const URGENT_OBJECT: &[&str] = &[
    "Quick, are there obstacles on the path ahead?",
    "Hurry, what objects are on the floor?",
    "Quickly tell me what things are on the desk.",
    "Are there obstacles on the floor? I need to move now.",
];
const URGENT_FACE: &[&str] = &[
    "Quick, is there anyone I know here?",
    "Hurry, who is the person in front of me?",
    "Quickly, do I recognize anyone here?",
    "Is my friend among these people? Hurry.",
];
const NORMAL_OCR: &[&str] = &[
    "What does this sign say?",
    "Can you read the label on this jar?",
    "What is the price on this menu?",
    "What text is written on this letter?",
    "What does the screen say?",
];
const NORMAL_OBJECT: &[&str] = &[
    "What objects are on the table?",
    "What items are in my bag?",
    "Are there any obstacles on the path?",
    "What things are on the desk?",
];
const NORMAL_FACE: &[&str] = &[
    "Is there anyone I know here?",
    "Who is the person next to me?",
    "Do you recognize the face of this person?",
    "Are any of these people my friend?",
];
const URGENT_GENERIC: &[&str] = &[
    "Quick, which gate is my flight?",
    "Hurry, which way is the exit?",
    "Is the traffic light green right now?",
    "Quick, is this the right platform for the northbound train?",
    "Emergency: where is the nearest staircase?",
    "Quickly, which door leads outside?",
    "Fast, is the stove still on?",
    "Where is the nearest elevator? I need it immediately.",
];
const NORMAL_GENERIC: &[&str] = &[
    "Describe the room around me.",
    "What is the weather like outside?",
    "How crowded is this place?",
    "What color is this shirt?",
    "Is this jacket clean?",
    "What kind of building is this?",
    "Describe the view from this window.",
    "What does this place look like?",
];

const OCR_PAYLOADS: &[&str] = &["EXIT 12", "Soup $4.99", "Gate B12 Departures", "Push to open", "Ibuprofen 200 mg", "Platform 3 Northbound"];
const OBJECT_PAYLOADS: &[&str] = &["chair; table; bag", "suitcase; person; sign", "laptop; mug; keys", "stairs; railing", "bicycle; bench"];
const FACE_PAYLOADS: &[&str] = &["John Doe", "Maria Lopez", "Sam Lee; Ana Cruz", ""];

const SENTENCES: &[&str] = &[
    "You are standing in a wide hallway with a tiled floor.",
    "There is a door about three meters ahead of you, slightly to the right.",
    "A staircase going down is on your left side.",
    "Several people are walking past from right to left.",
    "The area directly in front of you is clear of obstacles.",
    "A bench sits against the wall near the window.",
    "The lighting is bright and even throughout the space.",
    "There is a counter with a cashier about five meters away.",
    "A trash bin stands next to the entrance.",
    "The floor slopes gently upward toward the exit.",
    "Two large potted plants flank the doorway.",
    "An information desk is located at the center of the room.",
    "The ceiling is high and there is a faint echo.",
    "A row of chairs lines the opposite wall.",
    "The path to your left leads toward the restrooms.",
];

const CONTINUATIONS: &[&str] = &[
    " and the exit itself is the second door on the right.",
    " but the stairs are closer than they first appear, so take care.",
    " and the counter is open with no one waiting in line.",
    " though the door ahead is a pull door, not a push door.",
    " and the bench on the left is currently free.",
];

fn take_words(rng: &mut ChaCha8Rng, n: usize) -> String {
    let mut words: Vec<&str> = Vec::with_capacity(n + 16);
    while words.len() < n {
        words.extend(SENTENCES.choose(rng).expect("non-empty").split_whitespace());
    }
    words.truncate(n);
    let mut text = words.join(" ");
    if !text.ends_with('.') {
        text = text.trim_end_matches([',', ';']).to_owned();
        text.push('.');
    }
    text
}

fn pick(rng: &mut ChaCha8Rng, pool: &[&str]) -> String {
    (*pool.choose(rng).expect("non-empty")).to_owned()
}

/// Builds the bundled workload. Output is a pure function of the constants above.
pub fn generate() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut records = Vec::with_capacity(RECORDS);
    for i in 0..RECORDS {
        let urgent = i % 2 == 0;
        let expert = (i / 2) % 2 == 0;
        let route = if expert { RouteLabel::EXPERTS[(i / 4) % 3] } else { RouteLabel::Generic };
        let pool = match (urgent, route) {
            (true, RouteLabel::Ocr) => URGENT_OCR,
            (true, RouteLabel::Object) => URGENT_OBJECT,
            (true, RouteLabel::Face) => URGENT_FACE,
            (true, RouteLabel::Generic) => URGENT_GENERIC,
            (false, RouteLabel::Ocr) => NORMAL_OCR,
            (false, RouteLabel::Object) => NORMAL_OBJECT,
            (false, RouteLabel::Face) => NORMAL_FACE,
            (false, RouteLabel::Generic) => NORMAL_GENERIC,
        };
        let query = pick(&mut rng, pool);
        let edge = take_words(&mut rng, EDGE_WORDS);
        let cloud = take_words(&mut rng, CLOUD_WORDS);
        let fusion = (!expert && urgent).then(|| StreamScript::from_text(&pick(&mut rng, CONTINUATIONS), FUSION_TTFT_MS, FUSION_GAP_MS));
        let experts = match route {
            RouteLabel::Ocr => vec![pick(&mut rng, OCR_PAYLOADS)],
            RouteLabel::Object => vec![pick(&mut rng, OBJECT_PAYLOADS)],
            RouteLabel::Face => vec![pick(&mut rng, FACE_PAYLOADS)],
            RouteLabel::Generic => vec![],
        }
        .into_iter()
        .map(|payload| RecordExpert { route, payload, latency_ms: crate::agents::DEFAULT_EXPERT_LATENCY_MS })
        .collect();
        records.push(ScenarioRecord {
            id: format!("f5-{:03}", i + 1),
            query,
            frame: format!("frame-{:03}", i + 1),
            truth: Truth { urgent, route },
            scripts: Scripts {
                edge: Some(StreamScript::from_text(&edge, EDGE_TTFT_MS, TOKEN_GAP_MS)),
                cloud: Some(StreamScript::from_text(&cloud, CLOUD_TTFT_MS, TOKEN_GAP_MS)),
                fusion,
                editor: None,
            },
            experts,
        });
    }
    Scenario { seed: SEED, overrides: json!({ "jitter_ms": JITTER_MS }), records }
}
