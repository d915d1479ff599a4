use criterion::{criterion_group, criterion_main, Criterion};
use devnav_core::dynamic::{process_frame, DetectConfig};
use devnav_core::fixtures::SequenceSpec;
use devnav_core::flow::{detect_corners, track_pyr_lk};
use std::hint::black_box;

fn detection(c: &mut Criterion) {
    let spec = SequenceSpec::walking(3, 640, 480, 2);
    let (prev, cur) = (spec.render_frame(0), spec.render_frame(1));
    let det = spec.detections(1);
    let cfg = DetectConfig::default();
    let corners = detect_corners(&prev, &cfg.flow);

    let mut g = c.benchmark_group("640x480");
    g.sample_size(20);
    g.bench_function("shi_tomasi_1250", |b| {
        b.iter(|| detect_corners(black_box(&prev), &cfg.flow))
    });
    g.bench_function("pyramidal_lk_1250", |b| {
        b.iter(|| track_pyr_lk(black_box(&prev), black_box(&cur), &corners, &cfg.flow).unwrap())
    });
    g.bench_function("process_frame", |b| {
        b.iter(|| process_frame(black_box(&prev), black_box(&cur), &det, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, detection);
criterion_main!(benches);
