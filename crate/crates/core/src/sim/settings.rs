//! Layered run settings. Later layers win field by field:
//! defaults < scenario overrides < config file < command-line flags.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::DEFAULT_EDITOR_LATENCY_MS;
use crate::classify::ClassifierConfig;
use crate::fusion::HandoffParams;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub classifier: ClassifierConfig,
    pub handoff: HandoffParams,
    /// Latency of the bundled rule-based editor when a record has no editor script.
    pub editor_latency_ms: u64,
    /// Upper bound of the uniform jitter added to each scripted time-to-first-token.
    pub jitter_ms: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            classifier: ClassifierConfig::default(),
            handoff: HandoffParams::default(),
            editor_latency_ms: DEFAULT_EDITOR_LATENCY_MS,
            jitter_ms: 0,
        }
    }
}

impl Settings {
    /// Merges `layers` over the defaults and validates the result.
    pub fn resolve(layers: &[&Value]) -> Result<Self, String> {
        let mut v = serde_json::to_value(Settings::default()).expect("settings serialize");
        for layer in layers {
            if !(layer.is_object() || layer.is_null()) {
                return Err("settings must be an object".into());
            }
            merge(&mut v, layer);
        }
        let s: Settings = serde_json::from_value(v).map_err(|e| e.to_string())?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.pipeline().validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { classifier: self.classifier.clone(), handoff: self.handoff }
    }
}

/// Recursive object merge; non-object values in `patch` replace those in `base`.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, pv) in p {
                match b.get_mut(k) {
                    Some(bv) if bv.is_object() && pv.is_object() => merge(bv, pv),
                    _ => {
                        b.insert(k.clone(), pv.clone());
                    }
                }
            }
        }
        (_, Value::Null) => {}
        (b, p) => *b = p.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::HandoffMode;
    use serde_json::json;

    #[test]
    fn later_layers_win_per_field() {
        let scenario = json!({"handoff": {"mode": "additive", "chars_per_sec": 10.0}, "jitter_ms": 5});
        let file = json!({"handoff": {"chars_per_sec": 12.0}});
        let flags = json!({"classifier": {"urgency_threshold": 0.5}});
        let s = Settings::resolve(&[&scenario, &file, &flags]).unwrap();
        assert_eq!(s.handoff.mode, HandoffMode::Additive);
        assert_eq!(s.handoff.chars_per_sec, 12.0);
        assert_eq!(s.classifier.urgency_threshold, 0.5);
        assert_eq!(s.classifier.route_threshold, 0.86);
        assert_eq!(s.jitter_ms, 5);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(Settings::resolve(&[&json!({"speed": 1})]).is_err());
        assert!(Settings::resolve(&[&json!({"handoff": {"chars_per_sec": 0.0}})]).is_err());
        assert!(Settings::resolve(&[&json!([1])]).is_err());
        assert_eq!(Settings::resolve(&[&Value::Null]).unwrap(), Settings::default());
    }
}
