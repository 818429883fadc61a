use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use har_bench::{examples, samples};
use har_core::dsp::{FftPlan, WelchEstimator};
use har_core::features::FeatureExtractor;
use har_core::nn::{model_backward, Adam, AdamConfig, Example, ModelParams, ModelSpec};
use har_core::WelchConfig;

fn dsp(c: &mut Criterion) {
    let data = samples(1);
    let signal: Vec<f64> = data[0].window.stream(0).to_vec();
    let plan = FftPlan::new(128).unwrap();
    c.bench_function("fft_128", |b| b.iter(|| plan.forward(black_box(&signal)).unwrap()));

    let welch = WelchEstimator::new(WelchConfig::default()).unwrap();
    c.bench_function("welch_128_o64", |b| b.iter(|| welch.estimate_values(black_box(&signal)).unwrap()));

    let extractor = FeatureExtractor::new(WelchConfig::default()).unwrap();
    let mut group = c.benchmark_group("extract");
    group.throughput(Throughput::Elements(1));
    group.bench_function("window", |b| b.iter(|| extractor.extract(black_box(&data[0].window)).unwrap()));
    group.finish();
}

fn network(c: &mut Criterion) {
    let xs = examples(&samples(11));
    let params = ModelParams::<f32>::init(&ModelSpec::default(), 1).unwrap();
    c.bench_function("forward", |b| b.iter(|| params.predict(black_box(&xs[0])).unwrap()));
    c.bench_function("forward_backward", |b| b.iter(|| model_backward(black_box(&xs[0]), &params).unwrap()));

    let batch: Vec<&Example<f32>> = xs.iter().cycle().take(64).collect();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    group.throughput(Throughput::Elements(64));
    group.bench_function("batch_64", |b| {
        b.iter_batched(
            || (params.clone(), Adam::new(AdamConfig::default(), &params)),
            |(mut p, mut adam)| {
                let (_, grads) = p.batch_gradient(&batch).unwrap();
                adam.step(&mut p, &grads);
                p
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, dsp, network);
criterion_main!(benches);
