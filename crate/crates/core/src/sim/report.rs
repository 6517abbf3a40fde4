use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_scenario_with, MetricsRecord, RunOptions, Scenario, System};
use crate::classify::{evaluate_classifier, Classifier, ClassifierReport, LabeledQuery, LexiconClassifier};
use crate::fusion::HandoffMode;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub p50: u64,
    pub p90: u64,
    pub max: u64,
}

impl Stats {
    /// Arithmetic mean and nearest-rank percentiles; all zero for no samples.
    pub fn of(values: impl IntoIterator<Item = u64>) -> Self {
        let mut v: Vec<u64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        v.sort_unstable();
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            mean: v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64,
            p50: rank(0.5),
            p90: rank(0.9),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub ttft_ms: Stats,
    pub turnaround_ms: Stats,
}

pub fn summarize(records: &[MetricsRecord]) -> LatencySummary {
    LatencySummary {
        count: records.len(),
        ttft_ms: Stats::of(records.iter().map(|r| r.ttft_ms)),
        turnaround_ms: Stats::of(records.iter().map(|r| r.turnaround_ms)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: usize,
    pub mean_ttft_ms: f64,
    pub mean_turnaround_ms: f64,
}

impl ClassStats {
    fn of<'a>(records: impl IntoIterator<Item = &'a MetricsRecord>) -> Self {
        let recs: Vec<&MetricsRecord> = records.into_iter().collect();
        let n = recs.len();
        let mean = |f: fn(&MetricsRecord) -> u64| {
            if n == 0 {
                0.0
            } else {
                recs.iter().map(|r| f(r) as f64).sum::<f64>() / n as f64
            }
        };
        Self { count: n, mean_ttft_ms: mean(|r| r.ttft_ms), mean_turnaround_ms: mean(|r| r.turnaround_ms) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemStats {
    pub system: System,
    pub urgent: ClassStats,
    pub normal: ClassStats,
    pub overall: ClassStats,
    pub edge_calls: u64,
}

/// `(baseline - system) / baseline`; absent when the baseline is zero.
fn reduction(baseline: f64, system: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (baseline - system) / baseline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reductions {
    pub urgent_ttft_vs_cloud_only: Option<f64>,
    pub normal_ttft_vs_cloud_only: Option<f64>,
    pub overall_ttft_vs_cloud_only: Option<f64>,
    pub turnaround_vs_cloud_only: Option<f64>,
    /// Mean turnaround of audo-sight as a fraction of cloud-only.
    pub turnaround_ratio_vs_cloud_only: Option<f64>,
    pub edge_calls_vs_edge_only: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub handoff_mode: HandoffMode,
    pub records: usize,
    pub systems: Vec<SystemStats>,
    pub reductions: Reductions,
    pub classifier: Option<ClassifierReport>,
}

impl ComparisonReport {
    pub fn system(&self, system: System) -> &SystemStats {
        self.systems.iter().find(|s| s.system == system).expect("every system is run")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "handoff mode: {}   seed: {}   records: {}", self.handoff_mode, self.seed, self.records);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:>14} {:>19} {:>14} {:>19} {:>11}",
            "system", "urgent TTFT", "urgent turnaround", "normal TTFT", "normal turnaround", "edge calls"
        );
        for s in &self.systems {
            let _ = writeln!(
                out,
                "{:<12} {:>11.1} ms {:>16.1} ms {:>11.1} ms {:>16.1} ms {:>11}",
                s.system.as_str(),
                s.urgent.mean_ttft_ms,
                s.urgent.mean_turnaround_ms,
                s.normal.mean_ttft_ms,
                s.normal.mean_turnaround_ms,
                s.edge_calls
            );
        }
        let pct = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{:.1}%", v * 100.0));
        let r = &self.reductions;
        let _ = writeln!(out);
        let _ = writeln!(out, "urgent TTFT reduction vs cloud-only:   {}", pct(r.urgent_ttft_vs_cloud_only));
        let _ = writeln!(out, "normal TTFT reduction vs cloud-only:   {}", pct(r.normal_ttft_vs_cloud_only));
        let _ = writeln!(out, "overall TTFT reduction vs cloud-only:  {}", pct(r.overall_ttft_vs_cloud_only));
        let _ = writeln!(out, "turnaround as share of cloud-only:     {}", pct(r.turnaround_ratio_vs_cloud_only));
        let _ = writeln!(out, "edge-call reduction vs edge-only:      {}", pct(r.edge_calls_vs_edge_only));
        if let Some(c) = &self.classifier {
            let _ = writeln!(out);
            out.push_str(&c.render_table());
        }
        out
    }
}

pub struct Comparison {
    pub report: ComparisonReport,
    pub runs: Vec<(System, Vec<MetricsRecord>)>,
}

pub fn compare_systems(s: &Scenario) -> ComparisonReport {
    compare_systems_with(s, &RunOptions::for_scenario(s)).report
}

pub fn compare_systems_with(s: &Scenario, opts: &RunOptions) -> Comparison {
    let runs: Vec<(System, Vec<MetricsRecord>)> = System::ALL.iter().map(|&sys| (sys, run_scenario_with(s, sys, opts))).collect();
    let systems: Vec<SystemStats> = runs
        .iter()
        .map(|(sys, rows)| SystemStats {
            system: *sys,
            urgent: ClassStats::of(rows.iter().filter(|r| r.urgent)),
            normal: ClassStats::of(rows.iter().filter(|r| !r.urgent)),
            overall: ClassStats::of(rows),
            edge_calls: rows.iter().map(|r| u64::from(r.edge_calls)).sum(),
        })
        .collect();
    let get = |sys| systems.iter().find(|s| s.system == sys).expect("every system is run");
    let (audo, edge, cloud) = (get(System::AudoSight), get(System::EdgeOnly), get(System::CloudOnly));
    let reductions = Reductions {
        urgent_ttft_vs_cloud_only: reduction(cloud.urgent.mean_ttft_ms, audo.urgent.mean_ttft_ms),
        normal_ttft_vs_cloud_only: reduction(cloud.normal.mean_ttft_ms, audo.normal.mean_ttft_ms),
        overall_ttft_vs_cloud_only: reduction(cloud.overall.mean_ttft_ms, audo.overall.mean_ttft_ms),
        turnaround_vs_cloud_only: reduction(cloud.overall.mean_turnaround_ms, audo.overall.mean_turnaround_ms),
        turnaround_ratio_vs_cloud_only: (cloud.overall.mean_turnaround_ms != 0.0)
            .then(|| audo.overall.mean_turnaround_ms / cloud.overall.mean_turnaround_ms),
        edge_calls_vs_edge_only: reduction(edge.edge_calls as f64, audo.edge_calls as f64),
    };

    let labeled: Vec<LabeledQuery> = s
        .records
        .iter()
        .map(|r| LabeledQuery { text: r.query.clone(), urgent: r.truth.urgent, route: r.truth.route })
        .collect();
    let lex: Arc<dyn Classifier> = Arc::new(LexiconClassifier::bundled());
    let classifier = evaluate_classifier(&labeled, &*lex, &*lex, &opts.settings.classifier).ok();

    let report = ComparisonReport {
        seed: opts.seed,
        handoff_mode: opts.settings.handoff.mode,
        records: s.records.len(),
        systems,
        reductions,
        classifier,
    };
    Comparison { report, runs }
}
