use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gensynth_bench::{desk_blobs, mlp, small_cnn};
use gensynth_core::generator::init_generator;
use gensynth_core::inquisitor::{build_stimulus, probe, saliency, ProbeSelection};
use gensynth_core::metrics::{MetricConfig, RequirementSpec};
use gensynth_core::selfcheck::random_chain;
use gensynth_core::trainer::{fit, forward, init_weights, loss_and_grad, TrainConfig};
use gensynth_core::{count_macs, count_params, parse_network, serialize, Seed};

fn counting(c: &mut Criterion) {
    let graphs: Vec<_> = (0..32).map(random_chain).collect();
    c.bench_function("count_params_macs/32_random_chains", |b| {
        b.iter(|| {
            graphs
                .iter()
                .map(|g| count_params(g) + count_macs(g, g.input_shape()).unwrap())
                .sum::<u64>()
        })
    });
    let text = serialize(&mlp(&[2, 64, 64, 64, 4]));
    c.bench_function("parse_network/mlp_2_64_64_64_4", |b| {
        b.iter(|| parse_network(black_box(&text)).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let g = mlp(&[2, 64, 64, 64, 4]);
    let w = init_weights(&g, 1);
    let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<usize> = (0..32).map(|i| i % 4).collect();
    c.bench_function("loss_and_grad/mlp_batch32", |b| {
        b.iter(|| loss_and_grad(&g, &w, black_box(&x), &y).unwrap())
    });

    let cnn = small_cnn();
    let wc = init_weights(&cnn, 1);
    let xc: Vec<f64> = (0..8 * 3 * 16 * 16)
        .map(|i| (i as f64 * 0.11).cos())
        .collect();
    c.bench_function("forward/cnn_batch8", |b| {
        b.iter(|| forward(&cnn, &wc, black_box(&xc)).unwrap())
    });

    let ds = desk_blobs();
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    c.bench_function("fit/mlp_one_epoch_desk_blobs", |b| {
        b.iter(|| fit(&g, &ds, &cfg).unwrap())
    });
}

fn generation(c: &mut Criterion) {
    let proto = mlp(&[2, 64, 64, 64, 4]);
    let gen = init_generator(
        proto.clone(),
        RequirementSpec::accuracy_at_least(0.9),
        MetricConfig::default(),
        2.0,
    )
    .unwrap();
    c.bench_function("sample/prototype_192_units", |b| {
        let mut s = 0u64;
        b.iter(|| {
            s += 1;
            gen.sample(Seed(s))
        })
    });

    let ds = desk_blobs();
    let w = init_weights(&proto, 1);
    let stimuli = build_stimulus(&ds, 64, 1).unwrap();
    let sel = ProbeSelection::all(&proto);
    c.bench_function("probe_and_saliency/64_stimuli", |b| {
        b.iter_batched(
            || sel.clone(),
            |sel| saliency(&probe(&proto, &w, &stimuli, &sel, 16).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, counting, training, generation);
criterion_main!(benches);
