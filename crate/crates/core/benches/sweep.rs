//! Parallel vs sequential evaluation of the bundled scenario and of a
//! randomized fusion-trial sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edgefuse::fusion::HandoffParams;
use edgefuse::sim::trials::FusionCase;
use edgefuse::sim::{figure5, par_map, run_scenario_with, Execution, RunOptions, System};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn scenario(c: &mut Criterion) {
    let s = figure5::generate();
    let mut group = c.benchmark_group("figure5");
    for (name, execution) in MODES {
        let opts = RunOptions { execution, ..RunOptions::for_scenario(&s) };
        group.bench_function(BenchmarkId::new("audo-sight", name), |b| {
            b.iter(|| run_scenario_with(&s, System::AudoSight, &opts))
        });
    }
    group.finish();
}

fn trials(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..2_000).collect();
    let params = HandoffParams::default();
    let mut group = c.benchmark_group("fusion-trials");
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::new("2000", name), |b| {
            b.iter(|| par_map(execution, &seeds, |_, &seed| FusionCase::seeded(seed).run(&params).result.is_ok()))
        });
    }
    group.finish();
}

criterion_group!(benches, scenario, trials);
criterion_main!(benches);
