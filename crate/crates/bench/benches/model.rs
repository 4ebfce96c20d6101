use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use moemeta::graph::synth::{generate_synthetic, SynthConfig};
use moemeta::graph::{sample_task, NeighborSampler, Partition};
use moemeta::model::moe::moe_forward;
use moemeta::model::{Episode, Eta, MetaGradient};
use moemeta::numeric::rng;
use moemeta::{KnowledgeGraph, Model, ModelConfig, TaskSplit};

fn setup() -> (KnowledgeGraph, TaskSplit, Model) {
    let cfg = SynthConfig {
        num_entities: 1000,
        background_triplets_per_relation: 800,
        ..Default::default()
    };
    let (graph, split) = generate_synthetic(&cfg, &mut rng::seeded(0))
        .unwrap()
        .build()
        .unwrap();
    let model = Model::new(ModelConfig::default(), &graph, &mut rng::seeded(1)).unwrap();
    (graph, split, model)
}

fn benches(c: &mut Criterion) {
    let (graph, split, mut model) = setup();
    let sampler = NeighborSampler::new(&graph, model.config.neighbor_cap, 0);
    let net = model.net(&sampler);

    c.bench_function("encode_entity", |b| {
        let mut e = 0;
        b.iter(|| {
            e = (e + 1) % graph.num_entities();
            black_box(net.encode(e).unwrap());
        })
    });

    let h = net.encode(0).unwrap().output;
    let t = net.encode(1).unwrap().output;
    c.bench_function("moe_forward_d100_m32_n5", |b| {
        b.iter(|| black_box(moe_forward(&model.store, &model.layout, &h, &t, 5).unwrap()))
    });

    let mut r = rng::seeded(2);
    let task = sample_task(&graph, &split, Partition::Train, 5, 64, &mut r).unwrap();
    let episode = Episode::from_task(&graph, &task, 1, &mut r).unwrap();
    let dim = model.config.embed_dim;
    let mut group = c.benchmark_group("episode_forward_backward");
    group.sample_size(20);
    group.bench_function("first_order", |b| {
        b.iter_batched(
            || Eta::zeros(dim),
            |eta| {
                let fwd = net.forward(&episode, eta, 1).unwrap();
                black_box(net.backward(&fwd).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();

    model.config.meta_gradient = MetaGradient::SecondOrder;
    let net = model.net(&sampler);
    let mut group = c.benchmark_group("episode_forward_backward");
    group.sample_size(10);
    group.bench_function("second_order", |b| {
        b.iter_batched(
            || Eta::zeros(dim),
            |eta| {
                let fwd = net.forward(&episode, eta, 1).unwrap();
                black_box(net.backward(&fwd).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(model_benches, benches);
criterion_main!(model_benches);
