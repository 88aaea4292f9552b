use std::collections::HashMap;

use proptest::prelude::*;

use dsrl::corpus::synthetic::{salient_corpus, SalientSpec};
use dsrl::corpus::{build_vocab, encode_all, encode_pair, ArticleSummaryPair, BOS};
use dsrl::model::{
    greedy_decode, sample_decode, teacher_forced_logprobs, xent_loss_and_grad, Gradients,
};
use dsrl::train::{dev_xent, example_seed, pretrain, BatchSampler, Dataset, NoMonitor};
use dsrl::{ModelConfig, Objective, Parameters, TrainConfig};

fn small_model(vocab_size: usize, max_src: usize, max_tgt: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size,
        embed_dim: 12,
        hidden_dim: 12,
        max_src,
        max_tgt,
        seed,
    }
}

#[test]
fn pretraining_beats_the_unigram_baseline() {
    let pairs = salient_corpus(&SalientSpec {
        pairs: 120,
        seed: 3,
        ..SalientSpec::default()
    });
    let vocab = build_vocab(&pairs, 64).unwrap();
    let enc = encode_all(&pairs, &vocab, 16, 6).unwrap();
    let (train, dev) = enc.split_at(100);

    // Entropy of the training targets' unigram distribution, EOS included.
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for p in train {
        for &t in &p.target_ext_ids[1..] {
            *counts.entry(t).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let entropy: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();

    let config = TrainConfig {
        batch_size: 16,
        steps: 300,
        eval_interval: 100,
        seed: 3,
        ..TrainConfig::pretrain_default()
    };
    let model = small_model(vocab.len(), 16, 6, 3);
    let out = pretrain(
        &config,
        &model,
        &vocab.content_hash(),
        train,
        dev,
        &mut NoMonitor,
    )
    .unwrap();
    let xent = dev_xent(&out.best.params().unwrap(), dev).unwrap();
    assert!(
        xent < entropy,
        "dev xent {xent} vs unigram entropy {entropy}"
    );
}

#[test]
fn memorizes_a_copy_pair() {
    let pair = ArticleSummaryPair::from_text("c", "red fox jumps", "red fox jumps");
    let vocab = build_vocab(std::slice::from_ref(&pair), 16).unwrap();
    let enc = encode_all(std::slice::from_ref(&pair), &vocab, 8, 6).unwrap();
    let config = TrainConfig {
        batch_size: 1,
        steps: 300,
        eval_interval: 300,
        learning_rate: 1e-2,
        seed: 2,
        ..TrainConfig::pretrain_default()
    };
    let model = small_model(vocab.len(), 8, 6, 2);
    let out = pretrain(
        &config,
        &model,
        &vocab.content_hash(),
        &enc,
        &enc,
        &mut NoMonitor,
    )
    .unwrap();
    let got = greedy_decode(&out.best.params().unwrap(), &enc[0]).unwrap();
    assert_eq!(got.tokens, enc[0].target_ext_ids[1..]);
}

#[test]
fn first_sampled_token_follows_model_distribution() {
    let article = "a b c d e f g";
    let vocab = build_vocab(&[ArticleSummaryPair::from_text("v", article, "")], 12).unwrap();
    let pair = encode_pair(
        &ArticleSummaryPair::from_text("s", "a b q c", "b q"),
        &vocab,
        8,
        4,
    )
    .unwrap();
    let mut params = Parameters::init(&small_model(vocab.len(), 8, 4, 11));
    params.apply(|_, d| d.iter_mut().for_each(|x| *x *= 8.0));

    let ext = pair.extended_size(vocab.len());
    let probs: Vec<f64> = (0..ext as u32)
        .map(|t| teacher_forced_logprobs(&params, &pair, &[BOS], &[t]).unwrap()[0].exp())
        .collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let n = 4000;
    let mut counts = vec![0usize; ext];
    for s in 0..n {
        let t = sample_decode(&params, &pair, s as u64).unwrap();
        counts[t.tokens[0] as usize] += 1;
    }
    for (t, (&c, &p)) in counts.iter().zip(&probs).enumerate() {
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (c as f64 - mean).abs() <= 3.0 * sd + 1e-9,
            "token {t}: {c} draws, expected {mean:.1} ± {sd:.1}"
        );
    }
}

fn reference_gradient() -> Gradients {
    let vocab = build_vocab(&[ArticleSummaryPair::from_text("v", "a b c", "")], 8).unwrap();
    let pair = encode_pair(
        &ArticleSummaryPair::from_text("g", "a b c", "c a"),
        &vocab,
        4,
        3,
    )
    .unwrap();
    let params = Parameters::init(&small_model(vocab.len(), 4, 3, 1));
    xent_loss_and_grad(&params, &pair).unwrap().1
}

fn any_objective() -> impl Strategy<Value = Objective> {
    (0usize..5, 0.0..=1.0f64).prop_map(|(k, g)| match k {
        0 => Objective::Xent,
        1 => Objective::RougeXent { gamma: g },
        2 => Objective::DsrRouge { gamma: g },
        3 => Objective::DsrXent { gamma: g },
        _ => Objective::Dsr,
    })
}

proptest! {
    #[test]
    fn objective_weights_form_a_convex_combination(obj in any_objective()) {
        let w = obj.weights();
        prop_assert!(w.dsr >= 0.0 && w.rouge >= 0.0 && w.xent >= 0.0);
        prop_assert!((w.dsr + w.rouge + w.xent - 1.0).abs() < 1e-15);
        let total: f64 = obj.reward_kinds().iter().map(|k| k.1).sum();
        prop_assert!((total - (w.dsr + w.rouge)).abs() < 1e-15);
        let r = obj.dev_reward(0.3, 0.7);
        prop_assert!((0.3 - 1e-12..=0.7 + 1e-12).contains(&r));
    }

    #[test]
    fn objective_names_round_trip(obj in any_objective()) {
        let back = Objective::parse(obj.name(), obj.gamma(), Dataset::Gigaword).unwrap();
        prop_assert_eq!(back, obj);
    }

    #[test]
    fn sampler_visits_every_example_once_per_epoch(len in 1usize..40, seed in any::<u64>(), batch in 1usize..10) {
        let mut s = BatchSampler::new(len, seed);
        let mut seen = Vec::new();
        while seen.len() < len {
            seen.extend(s.next_batch(batch));
        }
        let mut epoch: Vec<usize> = seen[..len].to_vec();
        epoch.sort_unstable();
        prop_assert_eq!(epoch, (0..len).collect::<Vec<_>>());
    }

    #[test]
    fn example_seeds_differ_across_examples_and_steps(seed in any::<u64>(), step in 0u64..1000, i in 0usize..64) {
        prop_assert_ne!(example_seed(seed, step, i), example_seed(seed, step, i + 1));
        prop_assert_ne!(example_seed(seed, step, i), example_seed(seed, step + 1, i));
        prop_assert_eq!(example_seed(seed, step, i), example_seed(seed, step, i));
    }

    #[test]
    fn clipping_caps_the_global_norm(scale in 1e-3..1e3f64, cap in 0.1..5.0f64) {
        let mut g = reference_gradient();
        g.scale(scale / g.global_norm());
        let flat = g.to_flat();
        let reported = g.clip_global_norm(cap);
        prop_assert!((reported - scale).abs() <= 1e-12 * scale);
        if scale <= cap {
            prop_assert_eq!(g.to_flat(), flat);
        } else {
            prop_assert!((g.global_norm() - cap).abs() <= 1e-12 * cap);
        }
    }
}
