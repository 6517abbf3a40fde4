use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{route_rule, urgency_rule, Classifier, ClassifierConfig, ClassifierError, URGENT_CLASS};
use crate::types::RouteLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("classifying `{text}`: {source}")]
    Classifier { text: String, source: ClassifierError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledQuery {
    pub text: String,
    pub urgent: bool,
    pub route: RouteLabel,
}

/// Accuracy plus per-class precision for one decision module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleScore {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `None` when the class was never predicted.
    pub precision: BTreeMap<String, Option<f64>>,
}

impl ModuleScore {
    /// Scores `(truth, predicted)` pairs over a fixed class list.
    pub fn from_pairs<'a>(classes: &[&str], pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut total = 0;
        let mut correct = 0;
        let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
        let mut predicted: BTreeMap<&str, usize> = BTreeMap::new();
        for (truth, pred) in pairs {
            total += 1;
            *predicted.entry(pred).or_default() += 1;
            if truth == pred {
                correct += 1;
                *tp.entry(pred).or_default() += 1;
            }
        }
        let precision = classes
            .iter()
            .map(|&c| {
                let p = predicted.get(c).copied().unwrap_or(0);
                let t = tp.get(c).copied().unwrap_or(0);
                (c.to_owned(), (p > 0).then(|| t as f64 / p as f64))
            })
            .collect();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self { total, correct, accuracy, precision }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub urgency: ModuleScore,
    pub router: ModuleScore,
}

/// Published reference figures, rendered alongside measured results for comparison.
pub struct ReferenceRow {
    pub urgency_accuracy: f64,
    pub urgent_precision: f64,
    pub normal_precision: f64,
    pub router_accuracy: f64,
    pub object_precision: f64,
    pub ocr_precision: f64,
    pub other_precision: f64,
}

pub const REFERENCE_ROW: ReferenceRow = ReferenceRow {
    urgency_accuracy: 0.906,
    urgent_precision: 0.93,
    normal_precision: 0.87,
    router_accuracy: 0.863,
    object_precision: 1.0,
    ocr_precision: 1.0,
    other_precision: 0.81,
};

const URGENCY_CLASSES: [&str; 2] = ["urgent", "normal"];

const BUNDLED_LABELED: &str = include_str!("../../assets/labeled_queries.jsonl");

/// Parses line-delimited labeled queries; blank lines are skipped.
pub fn parse_labeled(text: &str) -> Result<Vec<LabeledQuery>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Small labeled set the bundled lexicon separates perfectly.
pub fn bundled_labeled() -> Vec<LabeledQuery> {
    parse_labeled(BUNDLED_LABELED).expect("bundled labeled queries parse")
}

fn urgency_label(urgent: bool) -> &'static str {
    if urgent {
        "urgent"
    } else {
        "normal"
    }
}

pub fn evaluate_classifier(
    dataset: &[LabeledQuery],
    urgency: &dyn Classifier,
    router: &dyn Classifier,
    cfg: &ClassifierConfig,
) -> Result<ClassifierReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let wrap = |text: &str| {
        let text = text.to_owned();
        move |source| EvalError::Classifier { text, source }
    };
    let mut urgency_pairs = Vec::with_capacity(dataset.len());
    let mut route_pairs = Vec::with_capacity(dataset.len());
    for item in dataset {
        let dist = urgency.classify(&item.text).map_err(wrap(&item.text))?;
        let score = dist.get(URGENT_CLASS).ok_or_else(|| wrap(&item.text)(ClassifierError::MissingClass(URGENT_CLASS.into())))?;
        let urgent = urgency_rule(score, cfg.urgency_threshold);
        urgency_pairs.push((urgency_label(item.urgent), urgency_label(urgent)));

        let dist = router.classify(&item.text).map_err(wrap(&item.text))?;
        let route = route_rule(&dist, cfg.route_threshold).map_err(wrap(&item.text))?.route;
        route_pairs.push((item.route.as_str(), route.as_str()));
    }
    let route_classes: Vec<&str> = RouteLabel::ALL.iter().map(|r| r.as_str()).collect();
    Ok(ClassifierReport {
        urgency: ModuleScore::from_pairs(&URGENCY_CLASSES, urgency_pairs),
        router: ModuleScore::from_pairs(&route_classes, route_pairs),
    })
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.1}%", v * 100.0),
        None => "n/a".into(),
    }
}

impl ClassifierReport {
    /// Two-module accuracy/precision table, followed by the published reference row.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let u = &self.urgency;
        let r = &self.router;
        let p = |m: &ModuleScore, c: &str| pct(m.precision.get(c).copied().flatten());
        let _ = writeln!(out, "{:<18} {:>9}  Precision", "Module", "Accuracy");
        let _ = writeln!(
            out,
            "{:<18} {:>9}  urgent {}  normal {}",
            "Urgency Detector",
            pct(Some(u.accuracy)),
            p(u, "urgent"),
            p(u, "normal")
        );
        let _ = writeln!(
            out,
            "{:<18} {:>9}  object {}  ocr {}  face {}  generic {}",
            "AI Router",
            pct(Some(r.accuracy)),
            p(r, "object"),
            p(r, "ocr"),
            p(r, "face"),
            p(r, "generic")
        );
        let rr = &REFERENCE_ROW;
        let _ = writeln!(
            out,
            "reference: urgency {} (urgent {}, normal {}); router {} (object {}, ocr {}, other {})",
            pct(Some(rr.urgency_accuracy)),
            pct(Some(rr.urgent_precision)),
            pct(Some(rr.normal_precision)),
            pct(Some(rr.router_accuracy)),
            pct(Some(rr.object_precision)),
            pct(Some(rr.ocr_precision)),
            pct(Some(rr.other_precision)),
        );
        out
    }
}
