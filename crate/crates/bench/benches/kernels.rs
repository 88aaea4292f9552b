use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dsrl::corpus::synthetic::{salient_corpus, SalientSpec};
use dsrl::corpus::{build_vocab, encode_all, tokenize};
use dsrl::embed::hash_embed;
use dsrl::metrics::{lcs_length, semantic_score, Scored, SemanticOptions};
use dsrl::model::{greedy_decode, xent_loss_and_grad};
use dsrl::{ModelConfig, Parameters};

fn words(n: usize, stride: usize) -> Vec<dsrl::Token> {
    let text: Vec<String> = (0..n).map(|i| format!("w{}", (i * stride) % 23)).collect();
    tokenize(&text.join(" "))
}

fn metrics(c: &mut Criterion) {
    let a = words(100, 7);
    let b = words(100, 11);
    c.bench_function("lcs_100x100", |bench| {
        bench.iter(|| lcs_length(black_box(&a), black_box(&b)))
    });

    let cand = words(30, 5);
    let refs = words(30, 3);
    let ce = hash_embed(&cand, 64, 0.5, 0).unwrap();
    let re = hash_embed(&refs, 64, 0.5, 0).unwrap();
    c.bench_function("semantic_score_30x30_d64", |bench| {
        bench.iter(|| {
            semantic_score(
                Scored {
                    tokens: &cand,
                    embeddings: &ce,
                },
                Scored {
                    tokens: &refs,
                    embeddings: &re,
                },
                SemanticOptions::default(),
            )
            .unwrap()
        })
    });
    c.bench_function("hash_embed_30_d64", |bench| {
        bench.iter(|| hash_embed(black_box(&cand), 64, 0.5, 0).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let pairs = salient_corpus(&SalientSpec {
        pairs: 4,
        ..SalientSpec::default()
    });
    let vocab = build_vocab(&pairs, 64).unwrap();
    let enc = encode_all(&pairs, &vocab, 16, 8).unwrap();
    let params = Parameters::init(&ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: 16,
        hidden_dim: 16,
        max_src: 16,
        max_tgt: 8,
        seed: 1,
    });
    c.bench_function("xent_loss_and_grad_e16_h16", |bench| {
        bench.iter(|| xent_loss_and_grad(&params, black_box(&enc[0])).unwrap())
    });
    c.bench_function("greedy_decode_e16_h16", |bench| {
        bench.iter(|| greedy_decode(&params, black_box(&enc[0])).unwrap())
    });
}

criterion_group!(benches, metrics, model);
criterion_main!(benches);
