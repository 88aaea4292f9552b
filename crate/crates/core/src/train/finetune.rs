use crate::corpus::{EncodedPair, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, HistoryRecord};

use super::batch::{example_seed, BatchSampler};
use super::evaluate::dev_metrics;
use super::optim::Adam;
use super::pretrain::batch_mean;
use super::rl::{rl_step, TermLosses};
use super::{DevMetrics, Objective, StepLog, TrainConfig, TrainMonitor};

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    /// Highest dev reward, possibly the start checkpoint itself (step 0).
    pub best: Checkpoint,
    /// Dev metrics of the start checkpoint.
    pub start: DevMetrics,
    /// The start evaluation at step 0, then one row per evaluation
    /// interval.
    pub history: Vec<HistoryRecord>,
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Self-critical fine-tuning from `start`. Dev F_BERT and ROUGE-L of
/// greedy decodes are recorded every `eval_interval` steps; the returned
/// checkpoint maximizes the objective's dev reward.
pub fn rl_finetune(
    start: &Checkpoint,
    config: &TrainConfig,
    vocab: &Vocabulary,
    train: &[EncodedPair],
    dev: &[EncodedPair],
    monitor: &mut dyn TrainMonitor,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if config.objective == Objective::Xent {
        return Err(Error::Config(
            "xent is a pretraining objective; choose a reward objective".into(),
        ));
    }
    if !config.provider.supports_generated() {
        return Err(Error::Config(format!(
            "the {} embedding provider cannot embed generated text",
            config.provider.kind()
        )));
    }
    start.check_compatible(&start.config, &vocab.content_hash())?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut params = start.params()?;
    let objective = config.objective;
    let provider = &config.provider;

    let start_metrics = dev_metrics(&params, vocab, dev, provider)?;
    let mut best_reward = objective.dev_reward(start_metrics.f_bert, start_metrics.rouge_l);
    let mut best = Checkpoint::new(&params, &start.vocab_hash, 0, Vec::new());

    let mut adam = Adam::new(&params, config.learning_rate, config.adam);
    let mut sampler = BatchSampler::new(train.len(), config.seed);
    let start_record = HistoryRecord {
        step: 0,
        dev_xent: None,
        f_bert: Some(start_metrics.f_bert),
        rouge_l: Some(start_metrics.rouge_l),
    };
    monitor.on_eval(&start_record, &params)?;
    let mut history = vec![start_record];

    for step in 1..=config.steps {
        let batch = sampler.next_batch(config.batch_size);
        let (outs, mut grads) = batch_mean(&params, &batch, train, |p, i| {
            let out = rl_step(
                &params,
                p,
                vocab,
                &objective,
                provider,
                example_seed(config.seed, step, i),
            )?;
            let adv = out.combined_advantage(&objective);
            Ok(((out.terms, out.total, adv), out.gradients))
        })?;
        let n = outs.len() as f64;
        let total = outs.iter().map(|o| o.1).sum::<f64>() / n;
        let terms = TermLosses {
            dsr: mean_opt(outs.iter().map(|o| o.0.dsr)),
            rouge: mean_opt(outs.iter().map(|o| o.0.rouge)),
            xent: mean_opt(outs.iter().map(|o| o.0.xent)),
        };
        let grad_norm = grads.clip_global_norm(config.clip_norm);
        if !grad_norm.is_finite() {
            return Err(Error::Divergence(format!(
                "step {step}: gradient norm is {grad_norm}"
            )));
        }
        adam.step(&mut params, &grads);
        if !params.is_finite() {
            return Err(Error::Divergence(format!(
                "step {step}: parameters became non-finite"
            )));
        }
        monitor.on_step(&StepLog {
            step,
            total,
            terms,
            mean_advantage: mean_opt(outs.iter().map(|o| o.2)),
            learning_rate: adam.lr,
            grad_norm,
        })?;

        if step.is_multiple_of(config.eval_interval) {
            let m = dev_metrics(&params, vocab, dev, provider)?;
            let record = HistoryRecord {
                step,
                dev_xent: None,
                f_bert: Some(m.f_bert),
                rouge_l: Some(m.rouge_l),
            };
            history.push(record.clone());
            monitor.on_eval(&record, &params)?;
            let r = objective.dev_reward(m.f_bert, m.rouge_l);
            if r > best_reward {
                best_reward = r;
                best = Checkpoint::new(&params, &start.vocab_hash, step, Vec::new());
            }
        }
    }
    best.history = history.clone();
    Ok(FinetuneOutcome {
        best,
        start: start_metrics,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{salient_corpus, SalientSpec};
    use crate::corpus::{build_vocab, encode_all};
    use crate::embed::EmbeddingProvider;
    use crate::model::{ModelConfig, Parameters};
    use crate::train::NoMonitor;

    fn setup() -> (Checkpoint, Vocabulary, Vec<EncodedPair>) {
        let pairs = salient_corpus(&SalientSpec {
            pairs: 12,
            ..SalientSpec::default()
        });
        let vocab = build_vocab(&pairs, 64).unwrap();
        let enc = encode_all(&pairs, &vocab, 16, 6).unwrap();
        let params = Parameters::init(&ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 6,
            hidden_dim: 6,
            max_src: 16,
            max_tgt: 6,
            seed: 5,
        });
        (
            Checkpoint::new(&params, &vocab.content_hash(), 0, Vec::new()),
            vocab,
            enc,
        )
    }

    fn config(objective: Objective) -> TrainConfig {
        TrainConfig {
            batch_size: 3,
            steps: 6,
            eval_interval: 2,
            learning_rate: 1e-3,
            provider: EmbeddingProvider::hash(16),
            ..TrainConfig::rl_default(objective)
        }
    }

    #[test]
    fn history_rows_and_best_selection() {
        let (ck, vocab, enc) = setup();
        let obj = Objective::Dsr;
        let out = rl_finetune(
            &ck,
            &config(obj),
            &vocab,
            &enc[..8],
            &enc[8..],
            &mut NoMonitor,
        )
        .unwrap();
        assert_eq!(out.history.len(), 4);
        assert_eq!(out.history[0].f_bert, Some(out.start.f_bert));
        let best = out.best.params().unwrap();
        let m = dev_metrics(&best, &vocab, &enc[8..], &config(obj).provider).unwrap();
        assert!(m.f_bert >= out.start.f_bert);
        for h in &out.history {
            assert!(m.f_bert >= h.f_bert.unwrap());
        }
    }

    #[test]
    fn deterministic() {
        let (ck, vocab, enc) = setup();
        let obj = Objective::DsrRouge { gamma: 0.5 };
        let a = rl_finetune(
            &ck,
            &config(obj),
            &vocab,
            &enc[..8],
            &enc[8..],
            &mut NoMonitor,
        )
        .unwrap();
        let b = rl_finetune(
            &ck,
            &config(obj),
            &vocab,
            &enc[..8],
            &enc[8..],
            &mut NoMonitor,
        )
        .unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn rejects_xent_file_provider_and_foreign_vocab() {
        let (ck, vocab, enc) = setup();
        let err = rl_finetune(
            &ck,
            &config(Objective::Xent),
            &vocab,
            &enc,
            &enc,
            &mut NoMonitor,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let cfg = TrainConfig {
            provider: EmbeddingProvider::File { dir: "x".into() },
            ..config(Objective::Dsr)
        };
        assert!(matches!(
            rl_finetune(&ck, &cfg, &vocab, &enc, &enc, &mut NoMonitor),
            Err(Error::Config(_))
        ));
        let other = build_vocab(
            &[crate::corpus::ArticleSummaryPair::from_text(
                "a", "p q r", "p",
            )],
            16,
        )
        .unwrap();
        assert!(matches!(
            rl_finetune(
                &ck,
                &config(Objective::Dsr),
                &other,
                &enc,
                &enc,
                &mut NoMonitor
            ),
            Err(Error::ConfigMismatch(_))
        ));
    }
}
