use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lhtraffic::exec::ExecMode;
use lhtraffic::simulate::{self, ScenarioConfig};
use lhtraffic::stability::{self, KGrid, SweepAxis, SweepSpec};
use lhtraffic::{ModelParams, NoiseConfig};

fn modes() -> Vec<ExecMode> {
    if ExecMode::available() == ExecMode::Parallel {
        vec![ExecMode::Sequential, ExecMode::Parallel]
    } else {
        vec![ExecMode::Sequential]
    }
}

fn sweep(c: &mut Criterion) {
    let spec = SweepSpec {
        base: ModelParams::reference(3.5),
        x_axis: SweepAxis::RhoStar,
        x_values: (0..40).map(|i| 0.05 + 0.35 * i as f64 / 39.0).collect(),
        y_axis: SweepAxis::A,
        y_values: (0..40).map(|i| 0.5 + 19.5 * i as f64 / 39.0).collect(),
        k_grid: KGrid::Uniform(256),
    };
    let mut group = c.benchmark_group("stability_sweep_40x40");
    for mode in modes() {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| stability::sweep(black_box(&spec), mode).unwrap()),
        );
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let configs: Vec<ScenarioConfig> = (0..16u64)
        .map(|seed| {
            let mut cfg =
                ScenarioConfig::perturbation_test(ModelParams::reference(5.0), 0.05, 5000);
            cfg.noise = Some(NoiseConfig {
                seed,
                ..NoiseConfig::default()
            });
            cfg
        })
        .collect();
    let mut group = c.benchmark_group("seed_ensemble_16x5000");
    group.sample_size(10);
    for mode in modes() {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| simulate::run_many(black_box(&configs), mode)),
        );
    }
    group.finish();
}

criterion_group!(benches, sweep, ensemble);
criterion_main!(benches);
