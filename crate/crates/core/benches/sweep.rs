use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dcat_core::engine::{Reference, Scenario};
use dcat_core::sweep::{run_sweep, run_sweep_sequential};
use dcat_core::topology::ConverterConfig;

fn template() -> Scenario {
    let mut s = Scenario::new(
        ConverterConfig::default(),
        Reference::SquaredSine {
            peak: 400.0,
            frequency: 50.0,
        },
        2e-3,
    );
    s.record_decimation = 50;
    s
}

fn sweep(c: &mut Criterion) {
    let template = template();
    let values: Vec<f64> = (2..=9).map(|m| m as f64).collect();
    let mut group = c.benchmark_group("module_count_sweep");
    group.sample_size(10);
    group.bench_with_input(
        BenchmarkId::new("sequential", values.len()),
        &values,
        |b, v| b.iter(|| run_sweep_sequential(&template, "module_count", v).unwrap()),
    );
    group.bench_with_input(
        BenchmarkId::new("default", values.len()),
        &values,
        |b, v| b.iter(|| run_sweep(&template, "module_count", v).unwrap()),
    );
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
