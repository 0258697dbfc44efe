//! Whole-run and per-step costs of the search loop on synthetic targets.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use autotune_core::diagnostics::landscape_eval;
use autotune_core::landscape::get_landscape;
use autotune_core::optimizer::{compute_bounds, find_best, Sample, SampleStatus};
use autotune_core::space::{ConfigSetting, Parameter, ParameterSpace};
use autotune_core::tuner::NullSink;
use autotune_core::{
    run_tuning, GoalDirection, OptimizerChoice, SamplerChoice, TargetSpec, TuningJob, UtilitySpec,
};

fn synth_job(landscape: &str, budget: u64, set_size: usize) -> TuningJob {
    let scape = get_landscape(landscape).unwrap();
    TuningJob {
        space: scape.canonical_space(),
        target: TargetSpec::Synthetic { landscape: landscape.to_string(), noise: 0.0 },
        utility: UtilitySpec::Identity("throughput".into()),
        goal: GoalDirection::Maximize,
        budget,
        set_size,
        seed: None,
        sampler: SamplerChoice::Dds,
        optimizer: OptimizerChoice::Rbs,
        history_path: None,
        baseline: None,
    }
}

fn bench_full_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthetic_run");
    group.sample_size(20);
    for (landscape, budget, set_size) in [("bumpy", 200u64, 100usize), ("smooth_bowl", 60, 20)] {
        let job = synth_job(landscape, budget, set_size);
        let mut seed = 0u64;
        group.bench_function(format!("{landscape}_{budget}x{set_size}"), |b| {
            b.iter(|| {
                seed += 1;
                black_box(run_tuning(&job, seed, &mut NullSink).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_landscape_eval(c: &mut Criterion) {
    let def = get_landscape("bumpy").unwrap();
    let eval = landscape_eval(&def);
    let setting = ConfigSetting::new(vec![0.3049, 0.5]);
    c.bench_function("bumpy_eval", |b| {
        b.iter(|| black_box(eval(black_box(&setting)).unwrap()))
    });
}

fn bench_compute_bounds(c: &mut Criterion) {
    let dims = 10usize;
    let space = ParameterSpace::new(
        (0..dims)
            .map(|i| Parameter::float(format!("x{i}"), 0.0, 1.0).unwrap())
            .collect(),
    )
    .unwrap();
    // low-discrepancy fill, deterministic without an RNG
    let samples: Vec<Sample> = (0..100u64)
        .map(|i| {
            let values: Vec<f64> = (0..dims)
                .map(|d| (i as f64 * 0.618_033_988_75 + d as f64 * 0.381_966_011_3).fract())
                .collect();
            Sample {
                setting: ConfigSetting::new(values),
                metrics: None,
                utility: Some(((i * 37) % 101) as f64),
                round: 1,
                test_index: i,
                status: SampleStatus::Ok,
            }
        })
        .collect();
    let best = find_best(&samples).unwrap().clone();
    c.bench_function("compute_bounds_100x10", |b| {
        b.iter(|| black_box(compute_bounds(&samples, &best, &space).unwrap()))
    });
}

criterion_group!(benches, bench_full_runs, bench_landscape_eval, bench_compute_bounds);
criterion_main!(benches);
