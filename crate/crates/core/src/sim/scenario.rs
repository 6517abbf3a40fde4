//! Scenario files: one header line followed by one record per line.
//!
//! ```text
//! {"schema":"edgefuse.scenario/v1","seed":7,"overrides":{"jitter_ms":20}}
//! {"id":"q001","query":"...","frame":"f-001","truth":{"urgent":true,"route":"generic"},
//!  "scripts":{"edge":{...},"cloud":{...},"fusion":{...}},"experts":[]}
//! ```
//!
//! `scripts.edge` and `scripts.cloud` are required on every record because the
//! single-model baselines answer every query; `scripts.fusion` is required when
//! the ground truth is urgent and generic. `scripts.editor` is optional and
//! defaults to the rule-based editor.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::settings::Settings;
use crate::agents::DEFAULT_EXPERT_LATENCY_MS;
use crate::backends::StreamScript;
use crate::types::{select_track, RouteLabel, Track};

pub const SCHEMA: &str = "edgefuse.scenario/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub seed: u64,
    /// Partial settings, merged over the defaults.
    #[serde(default = "empty_object")]
    pub overrides: Value,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub urgent: bool,
    pub route: RouteLabel,
}

impl Truth {
    pub fn track(&self) -> Track {
        select_track(self.urgent, self.route)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scripts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<StreamScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<StreamScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<StreamScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor: Option<StreamScript>,
}

fn default_latency() -> u64 {
    DEFAULT_EXPERT_LATENCY_MS
}

/// Expert output for this record's frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordExpert {
    pub route: RouteLabel,
    pub payload: String,
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub id: String,
    pub query: String,
    pub frame: String,
    pub truth: Truth,
    pub scripts: Scripts,
    #[serde(default)]
    pub experts: Vec<RecordExpert>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub overrides: Value,
    pub records: Vec<ScenarioRecord>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Validation(ValidationErrors),
}

/// Every violation found in a scenario, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario ({} problem{})", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((hline, htext)) = lines.next() else {
            return Err(ScenarioError::Validation(ValidationErrors(vec!["no records".into()])));
        };
        let header: Header =
            serde_json::from_str(htext).map_err(|e| ScenarioError::Parse { line: hline + 1, message: format!("header: {e}") })?;
        if header.schema != SCHEMA {
            return Err(ScenarioError::Parse {
                line: hline + 1,
                message: format!("unsupported schema `{}` (expected `{SCHEMA}`)", header.schema),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let rec: ScenarioRecord = serde_json::from_str(line).map_err(|e| {
                let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_owned));
                let who = id.map(|id| format!("record `{id}`: ")).unwrap_or_default();
                ScenarioError::Parse { line: i + 1, message: format!("{who}{e}") }
            })?;
            records.push(rec);
        }
        let s = Scenario { seed: header.seed, overrides: header.overrides, records };
        s.validate().map_err(ScenarioError::Validation)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut errs = Vec::new();
        if self.records.is_empty() {
            errs.push("no records".to_owned());
        }
        if let Err(e) = Settings::resolve(&[&self.overrides]) {
            errs.push(format!("overrides: {e}"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            let who = format!("record `{}`", r.id);
            if r.id.is_empty() {
                errs.push("record with empty id".into());
            } else if !seen.insert(r.id.as_str()) {
                errs.push(format!("{who}: duplicate id"));
            }
            if r.query.trim().is_empty() {
                errs.push(format!("{who}: empty query"));
            }
            if r.frame.is_empty() {
                errs.push(format!("{who}: empty frame id"));
            }
            if r.scripts.edge.is_none() {
                errs.push(format!("{who}: missing edge script"));
            }
            if r.scripts.cloud.is_none() {
                errs.push(format!("{who}: missing cloud script"));
            }
            if r.truth.track() == Track::UrgentGeneric && r.scripts.fusion.is_none() {
                errs.push(format!("{who}: missing fusion script for an urgent generic query"));
            }
            let mut routes = BTreeSet::new();
            for e in &r.experts {
                if e.route == RouteLabel::Generic {
                    errs.push(format!("{who}: expert entry with the generic route"));
                } else if !routes.insert(e.route) {
                    errs.push(format!("{who}: duplicate expert entry for {}", e.route));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errs))
        }
    }

    pub fn settings(&self) -> Settings {
        Settings::resolve(&[&self.overrides]).expect("validated scenario has valid overrides")
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header { schema: SCHEMA.into(), seed: self.seed, overrides: self.overrides.clone() };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"schema":"edgefuse.scenario/v1","seed":1}"#;

    fn record(id: &str, urgent: bool, route: &str, scripts: &str) -> String {
        format!(
            r#"{{"id":"{id}","query":"where is it","frame":"f","truth":{{"urgent":{urgent},"route":"{route}"}},"scripts":{scripts}}}"#
        )
    }

    const BOTH: &str = r#"{"edge":{"ttft_ms":1},"cloud":{"ttft_ms":2}}"#;

    #[test]
    fn empty_file_has_no_records() {
        for text in ["", "\n\n", HEADER] {
            match Scenario::parse(text) {
                Err(ScenarioError::Validation(v)) => assert_eq!(v.0, ["no records"]),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn missing_cloud_script_names_the_record() {
        let text = format!("{HEADER}\n{}\n", record("g1", false, "generic", r#"{"edge":{"ttft_ms":1}}"#));
        let Err(ScenarioError::Validation(v)) = Scenario::parse(&text) else { panic!() };
        assert_eq!(v.0, ["record `g1`: missing cloud script"]);
    }

    #[test]
    fn every_violation_is_listed() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            record("a", true, "generic", BOTH),
            record("a", false, "ocr", r#"{"edge":{"ttft_ms":1}}"#)
        );
        let Err(ScenarioError::Validation(v)) = Scenario::parse(&text) else { panic!() };
        assert_eq!(v.0.len(), 3, "{v}");
        assert!(v.0[0].contains("missing fusion script"));
        assert!(v.0[1].contains("duplicate id"));
        assert!(v.0[2].contains("missing cloud script"));
    }

    #[test]
    fn unknown_fields_are_parse_errors_with_line() {
        let bad = record("x", false, "ocr", BOTH).replacen('{', r#"{"colour":1,"#, 1);
        let text = format!("{HEADER}\n{}\n{bad}\n", record("ok", false, "ocr", BOTH));
        match Scenario::parse(&text) {
            Err(ScenarioError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("record `x`"), "{message}");
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = format!("{}\n{}\n", HEADER.replace("v1", "v9"), record("a", false, "ocr", BOTH));
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Parse { line: 1, .. })));
    }

    #[test]
    fn bad_overrides_are_validation_errors() {
        let header = r#"{"schema":"edgefuse.scenario/v1","seed":1,"overrides":{"handoff":{"mode":"sideways"}}}"#;
        let text = format!("{header}\n{}\n", record("a", false, "ocr", BOTH));
        let Err(ScenarioError::Validation(v)) = Scenario::parse(&text) else { panic!() };
        assert!(v.0[0].starts_with("overrides:"));
    }

    #[test]
    fn jsonl_round_trip() {
        let text = format!("{HEADER}\n{}\n", record("a", false, "ocr", BOTH));
        let s = Scenario::parse(&text).unwrap();
        assert_eq!(Scenario::parse(&s.to_jsonl()).unwrap(), s);
    }
}
