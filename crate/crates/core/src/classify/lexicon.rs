use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClassDistribution, Classifier, ClassifierError};

const BUNDLED: &str = include_str!("../../assets/lexicon.json");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("reading lexicon {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing lexicon: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("lexicon has no classes")]
    NoClasses,
    #[error("class `{class}` has a non-finite weight for `{term}`")]
    NonFinite { class: String, term: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTerms {
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub terms: BTreeMap<String, f64>,
}

/// Per-class term weights. A class score is `sigmoid(bias + sum of matched weights)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub classes: BTreeMap<String, ClassTerms>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled lexicon is well-formed")
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let mut lexicon: Lexicon = serde_json::from_str(text)?;
        lexicon.normalize();
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    fn normalize(&mut self) {
        for class in self.classes.values_mut() {
            class.terms = std::mem::take(&mut class.terms).into_iter().map(|(t, w)| (t.to_lowercase(), w)).collect();
        }
    }

    pub fn validate(&self) -> Result<(), LexiconError> {
        if self.classes.is_empty() {
            return Err(LexiconError::NoClasses);
        }
        for (class, entry) in &self.classes {
            if !entry.bias.is_finite() {
                return Err(LexiconError::NonFinite { class: class.clone(), term: "<bias>".into() });
            }
            if let Some((term, _)) = entry.terms.iter().find(|(_, w)| !w.is_finite()) {
                return Err(LexiconError::NonFinite { class: class.clone(), term: term.clone() });
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Case-folded tokens: maximal runs of alphanumerics and apostrophes.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn lexicon_classify(text: &str, lexicon: &Lexicon) -> ClassDistribution {
    let toks: Vec<String> = tokens(text).collect();
    let scores = lexicon
        .classes
        .iter()
        .map(|(class, entry)| {
            let z = entry.bias + toks.iter().filter_map(|t| entry.terms.get(t)).sum::<f64>();
            (class.clone(), sigmoid(z))
        })
        .collect();
    ClassDistribution::new(scores).expect("lexicon has classes and sigmoid lands in [0, 1]")
}

#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    lexicon: Lexicon,
}

impl LexiconClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn bundled() -> Self {
        Self::new(Lexicon::bundled())
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl Classifier for LexiconClassifier {
    fn classify(&self, text: &str) -> Result<ClassDistribution, ClassifierError> {
        Ok(lexicon_classify(text, &self.lexicon))
    }
}
