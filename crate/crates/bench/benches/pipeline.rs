use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use flowbert_bench::{programs, Fixture};
use flowbert_core::encoding::{build_vocab, encode_source};
use flowbert_core::pretrain::{select_mlm_targets, MlmObjective};
use flowbert_core::transformer::{backward, compute_gradients, forward, Objective};
use flowbert_core::{build_attention_mask, build_dfg, Limits, MaskOptions, Program};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_frontend(c: &mut Criterion) {
    let sources = programs(64);
    c.bench_function("parse+dfg/64 programs", |b| {
        b.iter(|| {
            for src in &sources {
                let program = Program::parse(black_box(src)).unwrap();
                black_box(build_dfg(&program.ast));
            }
        })
    });
}

fn bench_mask(c: &mut Criterion) {
    let sources = programs(64);
    let vocab = build_vocab(sources.iter().map(|s| ("", s.as_str())), 500).unwrap();
    let examples: Vec<_> =
        sources.iter().map(|s| encode_source("", s, &vocab, &Limits::default(), true).unwrap()).collect();
    c.bench_function("attention mask/64 programs", |b| {
        b.iter(|| {
            for ex in &examples {
                black_box(build_attention_mask(black_box(ex), MaskOptions::default()));
            }
        })
    });
}

fn bench_model(c: &mut Criterion) {
    let f = Fixture::new();
    let input = f.input();
    c.bench_function("forward/desk", |b| b.iter(|| black_box(forward(&f.params, black_box(&input)).unwrap())));

    let target = select_mlm_targets(&f.example, f.vocab.len(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let objective = MlmObjective::from(&target);
    let acts = forward(&f.params, &input).unwrap();
    let mut d_hidden = ndarray::Array2::zeros(acts.output().raw_dim());
    objective.evaluate(acts.output(), &f.params, &mut d_hidden, &mut f.params.zeros_like());
    c.bench_function("backward/desk", |b| {
        b.iter(|| {
            let mut grads = f.params.zeros_like();
            backward(&f.params, &acts, black_box(d_hidden.clone()), &mut grads);
            black_box(grads)
        })
    });
    c.bench_function("forward+backward/desk mlm", |b| {
        b.iter(|| black_box(compute_gradients(&objective, &f.params, black_box(&input)).unwrap()))
    });
}

criterion_group!(benches, bench_frontend, bench_mask, bench_model);
criterion_main!(benches);
