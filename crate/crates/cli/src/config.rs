//! Config file and flag layering.
//!
//! The TOML file mirrors the pipeline settings one-to-one, plus an optional
//! `[endpoints.<backend>]` table per live backend:
//!
//! ```toml
//! jitter_ms = 0
//! editor_latency_ms = 800
//! [classifier]
//! urgency_threshold = 0.3
//! [handoff]
//! mode = "additive"
//! [endpoints.cloud]
//! base_url = "https://api.example.com/v1"
//! model = "large-vision"
//! api_key_env = "EDGEFUSE_API_KEY"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use edgefuse::backends::BackendEndpoint;
use edgefuse::sim::Settings;
use serde_json::{json, Value};

use crate::args::GlobalArgs;
use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct FileConfig {
    pub settings: Value,
    pub endpoints: BTreeMap<String, BackendEndpoint>,
}

pub fn load_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse_file(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn parse_file(text: &str) -> Result<FileConfig, String> {
    let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut settings = serde_json::to_value(table).map_err(|e| e.to_string())?;
    let endpoints = match settings.as_object_mut().and_then(|o| o.remove("endpoints")) {
        Some(v) => serde_json::from_value(v).map_err(|e| format!("endpoints: {e}"))?,
        None => BTreeMap::new(),
    };
    Ok(FileConfig { settings, endpoints })
}

/// Flag values as a settings layer; absent flags leave lower layers alone.
pub fn flag_layer(g: &GlobalArgs) -> Value {
    let mut classifier = serde_json::Map::new();
    if let Some(t) = g.urgency_threshold {
        classifier.insert("urgency_threshold".into(), json!(t));
    }
    if let Some(t) = g.route_threshold {
        classifier.insert("route_threshold".into(), json!(t));
    }
    let mut layer = serde_json::Map::new();
    if !classifier.is_empty() {
        layer.insert("classifier".into(), Value::Object(classifier));
    }
    if let Some(m) = g.handoff_mode {
        layer.insert("handoff".into(), json!({ "mode": m }));
    }
    Value::Object(layer)
}

/// Resolves settings over an optional scenario layer, the config file and flags.
pub fn resolve(g: &GlobalArgs, scenario: Option<&Value>) -> CliResult<(Settings, FileConfig)> {
    let file = match &g.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let flags = flag_layer(g);
    let mut layers: Vec<&Value> = Vec::new();
    layers.extend(scenario);
    layers.push(&file.settings);
    layers.push(&flags);
    let settings = Settings::resolve(&layers).map_err(|e| CliError::validation(format!("invalid settings: {e}")))?;
    if g.verbose {
        eprintln!("settings: {}", serde_json::to_string(&settings).expect("settings serialize"));
    }
    for (name, ep) in &file.endpoints {
        ep.validate().map_err(|e| CliError::validation(format!("endpoint `{name}`: {e}")))?;
    }
    Ok((settings, file))
}
