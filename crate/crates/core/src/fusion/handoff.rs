//! Handoff-index arithmetic: how far speech will have progressed when the
//! fusion continuation starts, and where to cut the edge text.

use serde::{Deserialize, Serialize};

use crate::types::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandoffMode {
    /// `p = c * ((t2 - t1) * r_t) - 1`, exactly as the algorithm is written.
    #[default]
    Literal,
    /// `p = c * ((t2 - t1) + k * r_t) - 1`: elapsed speaking time plus a
    /// safety margin of `k` average fusion latencies.
    Additive,
}

impl std::str::FromStr for HandoffMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "literal" => Ok(HandoffMode::Literal),
            "additive" => Ok(HandoffMode::Additive),
            other => Err(format!("unknown handoff mode `{other}` (expected literal or additive)")),
        }
    }
}

impl std::fmt::Display for HandoffMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HandoffMode::Literal => "literal",
            HandoffMode::Additive => "additive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandoffParams {
    /// Speech rate in characters per second.
    pub chars_per_sec: f64,
    /// Estimated fusion-model response latency in seconds.
    pub fusion_latency_s: f64,
    pub mode: HandoffMode,
    /// Margin multiplier on `fusion_latency_s` in additive mode.
    pub safety_factor: f64,
}

impl Default for HandoffParams {
    fn default() -> Self {
        Self { chars_per_sec: 3.33, fusion_latency_s: 0.5, mode: HandoffMode::Literal, safety_factor: 2.0 }
    }
}

impl HandoffParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.chars_per_sec > 0.0 && self.chars_per_sec.is_finite()) {
            return Err(format!("chars_per_sec must be positive, got {}", self.chars_per_sec));
        }
        if !(self.fusion_latency_s >= 0.0 && self.fusion_latency_s.is_finite()) {
            return Err(format!("fusion_latency_s must be non-negative, got {}", self.fusion_latency_s));
        }
        if !(self.safety_factor >= 1.0 && self.safety_factor.is_finite()) {
            return Err(format!("safety_factor must be at least 1, got {}", self.safety_factor));
        }
        Ok(())
    }

    /// Worst fusion latency the additive margin covers, in milliseconds.
    pub fn margin_ms(&self) -> f64 {
        self.safety_factor * self.fusion_latency_s * 1000.0
    }
}

/// Unfloored predicted index of the last character spoken when the fusion
/// stream begins. Times are converted to seconds.
pub fn predict_raw(params: &HandoffParams, t1: Timestamp, t2: Timestamp) -> f64 {
    let elapsed = (t2 - t1) as f64 / 1000.0;
    let c = params.chars_per_sec;
    let r = params.fusion_latency_s;
    match params.mode {
        HandoffMode::Literal => c * (elapsed * r) - 1.0,
        HandoffMode::Additive => c * (elapsed + params.safety_factor * r) - 1.0,
    }
}

/// Floors a raw prediction onto a character index, clamped below at zero.
pub fn to_index(raw: f64) -> usize {
    if raw.is_nan() || raw <= 0.0 {
        0
    } else {
        raw.floor() as usize
    }
}

pub fn predict_spoken_index(params: &HandoffParams, t1: Timestamp, t2: Timestamp) -> usize {
    to_index(predict_raw(params, t1, t2))
}

pub fn clamp_index(p: usize, edge_len: usize) -> usize {
    p.min(edge_len)
}

/// Index of the last character of the last whitespace-delimited word that
/// ends at or before `p`. `None` when no complete word ends by then.
/// `p` may equal `text.len()`, meaning "everything".
pub fn shift_to_word_boundary(text: &[char], p: usize) -> Option<usize> {
    if text.is_empty() {
        return None;
    }
    let start = p.min(text.len() - 1);
    (0..=start).rev().find(|&i| is_word_end(text, i))
}

/// Index of the first word end at or after `i`. `None` if only whitespace follows.
pub fn word_end_at_or_after(text: &[char], i: usize) -> Option<usize> {
    (i..text.len()).find(|&j| is_word_end(text, j))
}

fn is_word_end(text: &[char], i: usize) -> bool {
    !text[i].is_whitespace() && text.get(i + 1).is_none_or(|c| c.is_whitespace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn params(mode: HandoffMode) -> HandoffParams {
        HandoffParams { mode, ..HandoffParams::default() }
    }

    #[test]
    fn literal_formula_hand_values() {
        let p = params(HandoffMode::Literal);
        // 3.33 * (6 * 0.5) - 1 = 8.99
        assert!((predict_raw(&p, Timestamp(0), Timestamp(6_000)) - 8.99).abs() < 1e-9);
        assert_eq!(predict_spoken_index(&p, Timestamp(150), Timestamp(6_150)), 8);
        assert_eq!(predict_spoken_index(&p, Timestamp(700), Timestamp(700)), 0);
    }

    #[test]
    fn additive_formula_hand_value() {
        // 3.33 * (6 + 2 * 0.5) - 1 = 22.31
        let p = params(HandoffMode::Additive);
        assert!((predict_raw(&p, Timestamp(0), Timestamp(6_000)) - 22.31).abs() < 1e-9);
        assert_eq!(predict_spoken_index(&p, Timestamp(0), Timestamp(6_000)), 22);
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_index(8, 5), 5);
        assert_eq!(clamp_index(0, 10), 0);
        assert_eq!(clamp_index(10, 10), 10);
    }

    #[test]
    fn word_boundary_examples() {
        assert_eq!(shift_to_word_boundary(&chars("hello world today"), 8), Some(4));
        assert_eq!(shift_to_word_boundary(&chars("hello"), 4), Some(4));
        assert_eq!(shift_to_word_boundary(&chars("hello world"), 5), Some(4));
        assert_eq!(shift_to_word_boundary(&chars("hello"), 5), Some(4));
        assert_eq!(shift_to_word_boundary(&chars("hello"), 2), None);
        assert_eq!(shift_to_word_boundary(&chars("  "), 1), None);
        assert_eq!(shift_to_word_boundary(&[], 0), None);
        // punctuation sticks to its word
        assert_eq!(shift_to_word_boundary(&chars("Stop, now"), 6), Some(4));
    }

    #[test]
    fn forward_word_end() {
        let t = chars("hello world  ");
        assert_eq!(word_end_at_or_after(&t, 2), Some(4));
        assert_eq!(word_end_at_or_after(&t, 5), Some(10));
        assert_eq!(word_end_at_or_after(&t, 11), None);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("additive".parse::<HandoffMode>(), Ok(HandoffMode::Additive));
        assert!("sum".parse::<HandoffMode>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(HandoffParams::default().validate().is_ok());
        assert!(HandoffParams { chars_per_sec: 0.0, ..Default::default() }.validate().is_err());
        assert!(HandoffParams { safety_factor: 0.5, ..Default::default() }.validate().is_err());
        assert!(HandoffParams { fusion_latency_s: -0.1, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn boundary_result_is_a_word_end_not_after_p(text in "[a-c ]{0,24}", p in 0usize..30) {
            let t = chars(&text);
            let p = p.min(t.len());
            match shift_to_word_boundary(&t, p) {
                Some(i) => {
                    prop_assert!(i <= p);
                    prop_assert!(!t[i].is_whitespace());
                    prop_assert!(i + 1 == t.len() || t[i + 1].is_whitespace());
                }
                None => {
                    // no word end anywhere in 0..=p
                    let upto = p.min(t.len().saturating_sub(1));
                    prop_assert!(t.is_empty() || (0..=upto).all(|i| t[i].is_whitespace() || (i + 1 < t.len() && !t[i + 1].is_whitespace())));
                }
            }
        }

        #[test]
        fn prediction_is_monotone_in_elapsed_time(a in 0u64..20_000, b in 0u64..20_000, additive: bool) {
            let p = params(if additive { HandoffMode::Additive } else { HandoffMode::Literal });
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(predict_raw(&p, Timestamp(0), Timestamp(lo)) <= predict_raw(&p, Timestamp(0), Timestamp(hi)));
        }
    }
}
