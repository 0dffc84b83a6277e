use criterion::{criterion_group, criterion_main, Criterion};
use slicenet_core::sim::presets;
use slicenet_core::run_scenario;

fn presets_10s(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_scenario_10s");
    group.sample_size(10);
    for name in presets::PRESET_NAMES {
        let mut cfg = presets::preset(name).unwrap();
        cfg.duration_s = 10.0;
        cfg.timeline.retain(|e| e.t <= 10.0);
        group.bench_function(name, |b| b.iter(|| run_scenario(cfg.clone()).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, presets_10s);
criterion_main!(benches);
