use criterion::{criterion_group, criterion_main, Criterion};
use pocmt_core::preset::{execute, plan_preset};

fn sweep(c: &mut Criterion) {
    let plan = plan_preset("capacity-sweep", &[("T".into(), "300".into())])
        .expect("valid preset")
        .with_seeds((0..4).collect());
    let mut group = c.benchmark_group("capacity-sweep-T300");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| execute(&plan, 1, None, false).expect("runs succeed"))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| execute(&plan, 0, None, false).expect("runs succeed"))
    });
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
