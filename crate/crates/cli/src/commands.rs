use std::path::{Path, PathBuf};

use edgefuse::classify::{lexicon_classify, route_rule, urgency_rule, Lexicon, URGENT_CLASS};
use edgefuse::sim::{self, compare_systems_with, Execution, RunOptions, Scenario, ScenarioError, System};
use edgefuse::RouteLabel;
use serde_json::json;

use crate::args::{BenchArgs, ClassifyArgs, GlobalArgs, RunArgs};
use crate::config;
use crate::error::{CliError, CliResult};

pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    Scenario::load(path).map_err(|e| match e {
        err @ ScenarioError::Io { .. } => CliError::io(err.to_string()),
        other => CliError::validation(format!("{}: {other}", path.display())),
    })
}

fn options(g: &GlobalArgs, s: &Scenario, sequential: bool) -> CliResult<RunOptions> {
    let (settings, _) = config::resolve(g, Some(&s.overrides))?;
    Ok(RunOptions {
        settings,
        seed: g.seed.unwrap_or(s.seed),
        execution: if sequential { Execution::Sequential } else { Execution::default() },
    })
}

fn create_out(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

pub fn metrics_path(dir: &Path, system: System) -> PathBuf {
    dir.join(format!("metrics-{system}.jsonl"))
}

fn export(records: &[sim::MetricsRecord], path: &Path) -> CliResult {
    sim::export(records, path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn run(g: &GlobalArgs, a: &RunArgs) -> CliResult {
    let s = load_scenario(&a.scenario)?;
    let opts = options(g, &s, a.sequential)?;
    let records = sim::run_scenario_with(&s, a.system, &opts);
    create_out(&g.out)?;
    let path = metrics_path(&g.out, a.system);
    export(&records, &path)?;
    let summary = sim::summarize(&records);
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{}: {} records, mean TTFT {:.1} ms, mean turnaround {:.1} ms, {} failed",
        a.system, summary.count, summary.ttft_ms.mean, summary.turnaround_ms.mean, failed
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn bench(g: &GlobalArgs, a: &BenchArgs) -> CliResult {
    let s = load_scenario(&a.scenario)?;
    let opts = options(g, &s, a.sequential)?;
    let cmp = compare_systems_with(&s, &opts);
    create_out(&g.out)?;
    for (system, rows) in &cmp.runs {
        export(rows, &metrics_path(&g.out, *system))?;
    }
    let report_path = g.out.join("report.json");
    let mut body = serde_json::to_string_pretty(&cmp.report).expect("report serializes");
    body.push('\n');
    std::fs::write(&report_path, body).map_err(|e| CliError::io(format!("{}: {e}", report_path.display())))?;
    print!("{}", cmp.report.render_table());
    println!();
    println!("wrote {}", report_path.display());
    Ok(())
}

pub fn classify(g: &GlobalArgs, a: &ClassifyArgs) -> CliResult {
    if a.text.trim().is_empty() {
        return Err(CliError::usage("query text must not be empty"));
    }
    let (settings, _) = config::resolve(g, None)?;
    let cfg = &settings.classifier;
    let dist = lexicon_classify(&a.text, &Lexicon::bundled());
    let score = dist.get(URGENT_CLASS).unwrap_or(0.0);
    let urgent = urgency_rule(score, cfg.urgency_threshold);
    let route = route_rule(&dist, cfg.route_threshold).map_err(|e| CliError::validation(e.to_string()))?;
    if a.json {
        let routes: serde_json::Map<String, serde_json::Value> = RouteLabel::EXPERTS
            .iter()
            .map(|r| (r.as_str().to_owned(), json!(dist.get(r.as_str()).unwrap_or(0.0))))
            .collect();
        let out = json!({
            "text": a.text,
            "urgency": { "score": score, "threshold": cfg.urgency_threshold, "urgent": urgent },
            "route": { "scores": routes, "threshold": cfg.route_threshold, "top_score": route.top_score, "route": route.route },
        });
        println!("{out}");
        return Ok(());
    }
    println!("urgency  score {score:.3}  threshold {:.3}  -> {}", cfg.urgency_threshold, if urgent { "urgent" } else { "normal" });
    for r in RouteLabel::EXPERTS {
        println!("route    {:<8} {:.3}", r.as_str(), dist.get(r.as_str()).unwrap_or(0.0));
    }
    println!("route    threshold {:.3}  -> {}", cfg.route_threshold, route.route.as_str());
    println!("track    {}", edgefuse::types::select_track(urgent, route.route));
    Ok(())
}
