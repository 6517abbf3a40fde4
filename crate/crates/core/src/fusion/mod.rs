//! Response fusion: race an edge and a cloud stream into one paced speech
//! queue, and when the edge wins, splice a cloud-informed continuation onto
//! what has already been spoken without rewinding it.

mod engine;
mod handoff;
mod tts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template;

pub use engine::run_fusion;
pub use handoff::{
    clamp_index, predict_raw, predict_spoken_index, shift_to_word_boundary, to_index, word_end_at_or_after, HandoffMode,
    HandoffParams,
};
pub use tts::{TruncationBehindCursor, TtsOp, TtsQueue};

use crate::types::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FusionError {
    #[error("both edge and cloud streams failed before producing any output")]
    BothFailed,
    #[error("fusion prompt needs a non-empty cloud response")]
    EmptyCloudResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    CloudFirst,
    EdgeFirst,
    EdgeOnlyFallback,
    CloudOnlyFallback,
}

/// Everything computed at the moment the cloud response completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffTrace {
    pub mode: HandoffMode,
    pub p_raw: f64,
    pub p_clamped: usize,
    /// Word-aligned prediction; `None` means no complete word precedes it.
    pub p_word: Option<usize>,
    /// Index the queue was actually cut after. Differs from `p_word` only when
    /// speech had already passed the prediction.
    pub splice: Option<usize>,
    pub recovered: bool,
    /// Edge characters received by the cut.
    pub edge_len: usize,
    /// Characters that had reached the speaker at the cut.
    pub started_at_cut: usize,
    /// Characters that had reached the speaker when the continuation began.
    pub started_at_continuation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FusionFlags {
    /// Edge stream failed after its first token.
    pub edge_interrupted: bool,
    /// Cloud stream failed after its first token.
    pub cloud_interrupted: bool,
    /// Fusion failed before its first token; the edge remainder was re-queued.
    pub fusion_failed: bool,
    /// Fusion failed after its first token.
    pub fusion_interrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub winner: Winner,
    /// Edge first token.
    pub t1: Option<Timestamp>,
    /// Cloud completion.
    pub t2: Option<Timestamp>,
    /// Fusion first token.
    pub t3: Option<Timestamp>,
    pub handoff: Option<HandoffTrace>,
    pub flags: FusionFlags,
    pub final_text: String,
}

/// A [`FusionOutcome`] without the spoken text, for metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionTrace {
    pub winner: Winner,
    pub t1: Option<Timestamp>,
    pub t2: Option<Timestamp>,
    pub t3: Option<Timestamp>,
    pub handoff: Option<HandoffTrace>,
    pub flags: FusionFlags,
}

impl FusionOutcome {
    pub fn trace(&self) -> FusionTrace {
        FusionTrace {
            winner: self.winner,
            t1: self.t1,
            t2: self.t2,
            t3: self.t3,
            handoff: self.handoff.clone(),
            flags: self.flags.clone(),
        }
    }
}

/// Renders the fusion instruction for the continuation model.
///
/// With an empty prefix nothing has been spoken yet, so the prompt asks for a
/// spoken restatement of the cloud answer instead of a continuation.
pub fn build_fusion_prompt(edge_prefix: &str, cloud_full: &str) -> Result<String, FusionError> {
    if cloud_full.trim().is_empty() {
        return Err(FusionError::EmptyCloudResponse);
    }
    Ok(if edge_prefix.trim().is_empty() {
        template::render(template::FUSION_RESTATE_V1, &[("cloud_response", cloud_full)])
    } else {
        template::render(template::FUSION_V1, &[("edge_prefix", edge_prefix), ("cloud_response", cloud_full)])
    })
}
