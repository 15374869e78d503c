use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shiftup_core::metrics::{simulate_paradigms_with, Execution, SimulationSpec};

fn paired_modes(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_paradigms");
    group.sample_size(10);
    for trials in [200u64, 1000] {
        let spec = SimulationSpec {
            trials,
            ..Default::default()
        };
        for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
            group.bench_with_input(BenchmarkId::new(name, trials), &spec, |b, spec| {
                b.iter(|| simulate_paradigms_with(spec, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, paired_modes);
criterion_main!(benches);
