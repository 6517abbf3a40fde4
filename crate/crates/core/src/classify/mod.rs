//! Urgency detection and intent routing.
//!
//! Both decisions are strict-threshold rules over a [`ClassDistribution`]
//! produced by any [`Classifier`]. The bundled [`LexiconClassifier`] is a
//! deterministic reference; [`ExternalClassifier`] talks to a child process so
//! a real sentence-encoder model can be plugged in.

mod eval;
mod external;
mod lexicon;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Query, RouteLabel};

pub use eval::{bundled_labeled, evaluate_classifier, parse_labeled, ClassifierReport, EvalError, LabeledQuery, ModuleScore, REFERENCE_ROW};
pub use external::ExternalClassifier;
pub use lexicon::{lexicon_classify, ClassTerms, Lexicon, LexiconClassifier, LexiconError};

pub const URGENT_CLASS: &str = "urgent";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("classifier returned no score for class `{0}`")]
    MissingClass(String),
    #[error("score for `{label}` is outside [0, 1]: {score}")]
    ScoreOutOfRange { label: String, score: f64 },
    #[error("classifier returned an empty distribution")]
    Empty,
    #[error("external classifier failed: {0}")]
    External(String),
}

/// Class label to probability.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution {
    scores: BTreeMap<String, f64>,
}

impl ClassDistribution {
    pub fn new(scores: BTreeMap<String, f64>) -> Result<Self, ClassifierError> {
        if scores.is_empty() {
            return Err(ClassifierError::Empty);
        }
        for (label, &score) in &scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(ClassifierError::ScoreOutOfRange { label: label.clone(), score });
            }
        }
        Ok(Self { scores })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self, ClassifierError> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.scores.get(label).copied()
    }

    fn require(&self, label: &str) -> Result<f64, ClassifierError> {
        self.get(label).ok_or_else(|| ClassifierError::MissingClass(label.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scores.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Anything that maps query text onto class probabilities.
pub trait Classifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<ClassDistribution, ClassifierError>;
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn classify(&self, text: &str) -> Result<ClassDistribution, ClassifierError> {
        (**self).classify(text)
    }
}

/// A classifier that always answers with the same distribution. Handy in tests.
#[derive(Debug, Clone)]
pub struct FixedClassifier(pub ClassDistribution);

impl Classifier for FixedClassifier {
    fn classify(&self, _text: &str) -> Result<ClassDistribution, ClassifierError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub urgency_threshold: f64,
    pub route_threshold: f64,
    /// Latency charged for each urgency classification.
    pub urgency_overhead_ms: u64,
    /// Latency charged for each routing classification.
    pub router_overhead_ms: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { urgency_threshold: 0.3, route_threshold: 0.86, urgency_overhead_ms: 9, router_overhead_ms: 0 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, t) in [("urgency_threshold", self.urgency_threshold), ("route_threshold", self.route_threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrgencyDecision {
    pub urgent: bool,
    pub score: f64,
    pub overhead_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: RouteLabel,
    pub top_score: f64,
}

/// Urgent iff the urgent-class probability strictly exceeds the threshold.
pub fn urgency_rule(score: f64, threshold: f64) -> bool {
    score > threshold
}

pub fn detect_urgency(
    query: &Query,
    classifier: &dyn Classifier,
    cfg: &ClassifierConfig,
) -> Result<UrgencyDecision, ClassifierError> {
    let dist = classifier.classify(query.text())?;
    let score = dist.require(URGENT_CLASS)?;
    Ok(UrgencyDecision { urgent: urgency_rule(score, cfg.urgency_threshold), score, overhead_ms: cfg.urgency_overhead_ms })
}

/// Argmax over the expert labels, then a strict threshold test. Ties keep the
/// earlier label in `Object < OCR < Face` order.
pub fn route_rule(dist: &ClassDistribution, threshold: f64) -> Result<RouteDecision, ClassifierError> {
    let mut best: Option<(RouteLabel, f64)> = None;
    for label in RouteLabel::EXPERTS {
        let score = dist.require(label.as_str())?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((label, score));
        }
    }
    let (label, top_score) = best.expect("expert label set is non-empty");
    let route = if top_score > threshold { label } else { RouteLabel::Generic };
    Ok(RouteDecision { route, top_score })
}

pub fn route_query(
    query: &Query,
    classifier: &dyn Classifier,
    cfg: &ClassifierConfig,
) -> Result<RouteDecision, ClassifierError> {
    let dist = classifier.classify(query.text())?;
    route_rule(&dist, cfg.route_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FrameRef;
    use proptest::prelude::*;

    fn query(text: &str) -> Query {
        Query::new("q", text, FrameRef::new("f").unwrap()).unwrap()
    }

    fn urgent_only(score: f64) -> FixedClassifier {
        FixedClassifier(ClassDistribution::from_pairs([(URGENT_CLASS, score)]).unwrap())
    }

    fn routes(object: f64, ocr: f64, face: f64) -> ClassDistribution {
        ClassDistribution::from_pairs([("object", object), ("ocr", ocr), ("face", face)]).unwrap()
    }

    #[test]
    fn urgency_examples() {
        let cfg = ClassifierConfig::default();
        let q = query("where is the exit");
        assert!(detect_urgency(&q, &urgent_only(0.31), &cfg).unwrap().urgent);
        let at = detect_urgency(&q, &urgent_only(0.30), &cfg).unwrap();
        assert!(!at.urgent);
        assert_eq!(at.score, 0.30);
        assert_eq!(at.overhead_ms, 9);
    }

    #[test]
    fn missing_urgent_class_is_a_classifier_failure() {
        let c = FixedClassifier(ClassDistribution::from_pairs([("normal", 0.9)]).unwrap());
        let err = detect_urgency(&query("x"), &c, &ClassifierConfig::default()).unwrap_err();
        assert!(matches!(err, ClassifierError::MissingClass(ref l) if l == "urgent"));
    }

    #[test]
    fn route_examples() {
        assert_eq!(route_rule(&routes(0.05, 0.91, 0.01), 0.86).unwrap().route, RouteLabel::Ocr);
        let boundary = route_rule(&routes(0.10, 0.86, 0.02), 0.86).unwrap();
        assert_eq!(boundary.route, RouteLabel::Generic);
        assert_eq!(boundary.top_score, 0.86);
    }

    #[test]
    fn route_requires_every_expert_label() {
        let d = ClassDistribution::from_pairs([("object", 0.9), ("ocr", 0.1)]).unwrap();
        assert!(matches!(route_rule(&d, 0.86), Err(ClassifierError::MissingClass(ref l)) if l == "face"));
    }

    #[test]
    fn argmax_ties_use_fixed_label_order() {
        assert_eq!(route_rule(&routes(0.9, 0.9, 0.9), 0.86).unwrap().route, RouteLabel::Object);
        assert_eq!(route_rule(&routes(0.1, 0.95, 0.95), 0.86).unwrap().route, RouteLabel::Ocr);
    }

    #[test]
    fn distribution_rejects_out_of_range_scores() {
        assert!(ClassDistribution::from_pairs([("urgent", 1.01)]).is_err());
        assert!(ClassDistribution::from_pairs([("urgent", f64::NAN)]).is_err());
        assert!(matches!(ClassDistribution::new(BTreeMap::new()), Err(ClassifierError::Empty)));
    }

    #[test]
    fn config_rejects_degenerate_thresholds() {
        let mut cfg = ClassifierConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.route_threshold = 1.0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn raising_route_threshold_never_creates_an_expert(
            o in 0.0f64..=1.0, r in 0.0f64..=1.0, f in 0.0f64..=1.0,
            lo in 0.01f64..0.99, bump in 0.0f64..0.5,
        ) {
            let d = routes(o, r, f);
            let hi = (lo + bump).min(0.999);
            let low = route_rule(&d, lo).unwrap();
            let high = route_rule(&d, hi).unwrap();
            if low.route == RouteLabel::Generic {
                prop_assert_eq!(high.route, RouteLabel::Generic);
            }
        }

        #[test]
        fn uniform_scaling_preserves_the_winning_label(
            o in 0.0f64..=1.0, r in 0.0f64..=1.0, f in 0.0f64..=1.0, scale in 0.01f64..=1.0,
        ) {
            let winner = route_rule(&routes(o, r, f), 0.0001).unwrap();
            let scaled = route_rule(&routes(o * scale, r * scale, f * scale), 0.0001).unwrap();
            // both thresholds tiny so the label is visible whenever any score is nonzero
            if winner.top_score * scale > 0.0001 {
                prop_assert_eq!(winner.route, scaled.route);
            }
        }
    }
}
