use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tripseg_core::eval::{evaluate_grounded, EvalConfig, Mode};
use tripseg_core::synth::{noisy_predictions, throughput_ground_truth};
use tripseg_core::TripletSchema;

fn grounded(c: &mut Criterion) {
    let schema = TripletSchema::bundled();
    let gt = throughput_ground_truth(1, 500, 3, 256, 256, &schema).unwrap();
    let preds = noisy_predictions(2, &gt).unwrap();
    let mut group = c.benchmark_group("evaluate_grounded/500_frames");
    group.sample_size(20);
    for mode in [Mode::Seg, Mode::Det] {
        let config = EvalConfig::new(mode);
        group.bench_function(BenchmarkId::from_parameter(mode.as_str()), |b| {
            b.iter(|| {
                evaluate_grounded(black_box(&gt), black_box(&preds), &config, &schema).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, grounded);
criterion_main!(benches);
