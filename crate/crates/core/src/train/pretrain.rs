use rayon::prelude::*;

use crate::corpus::EncodedPair;
use crate::error::{Error, Result};
use crate::model::{
    xent_loss, xent_loss_and_grad, Checkpoint, Gradients, HistoryRecord, ModelConfig, Parameters,
};

use super::batch::BatchSampler;
use super::optim::Adam;
use super::{Objective, StepLog, TermLosses, TrainConfig, TrainMonitor};

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Lowest dev XENT seen; carries the full history.
    pub best: Checkpoint,
    pub history: Vec<HistoryRecord>,
    /// Rate in effect at the end (halved once after a divergence).
    pub learning_rate: f64,
}

/// Per-token dev cross-entropy: summed loss over summed target length.
pub fn dev_xent(params: &Parameters, dev: &[EncodedPair]) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    let losses = dev
        .par_iter()
        .map(|p| {
            xent_loss(params, p)
                .map(|l| (l, p.target_len()))
                .map_err(|e| e.in_example(&p.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, tokens) = losses
        .iter()
        .fold((0.0, 0usize), |(s, n), &(l, t)| (s + l, n + t));
    Ok(sum / tokens.max(1) as f64)
}

/// Mean loss and gradient over `batch`, reduced in index order.
pub(super) fn batch_mean<T: Send>(
    params: &Parameters,
    batch: &[usize],
    corpus: &[EncodedPair],
    f: impl Fn(&EncodedPair, usize) -> Result<(T, Gradients)> + Sync,
) -> Result<(Vec<T>, Gradients)> {
    let parts = batch
        .par_iter()
        .map(|&i| f(&corpus[i], i).map_err(|e| e.in_example(&corpus[i].id)))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Gradients::zeros_like(params);
    let scale = 1.0 / batch.len() as f64;
    let mut outs = Vec::with_capacity(parts.len());
    for (out, g) in parts {
        grads.add_scaled(&g, scale);
        outs.push(out);
    }
    Ok((outs, grads))
}

#[derive(Clone)]
struct Snapshot {
    step: u64,
    params: Parameters,
    adam: Adam,
    sampler: BatchSampler,
    history_len: usize,
    best: Option<(f64, Checkpoint)>,
}

fn check_corpora(train: &[EncodedPair], dev: &[EncodedPair]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    Ok(())
}

/// Mini-batch Adam on the cross-entropy loss. Dev XENT is measured every
/// `eval_interval` steps and the lowest-scoring parameters are returned.
/// A divergence rolls back to the last evaluation and halves the rate once;
/// a second divergence is an error.
pub fn pretrain(
    config: &TrainConfig,
    model: &ModelConfig,
    vocab_hash: &str,
    train: &[EncodedPair],
    dev: &[EncodedPair],
    monitor: &mut dyn TrainMonitor,
) -> Result<PretrainOutcome> {
    config.validate()?;
    if config.objective != Objective::Xent {
        return Err(Error::Config(format!(
            "pretraining uses the xent objective, not {}",
            config.objective.name()
        )));
    }
    model.validate()?;
    check_corpora(train, dev)?;

    let params = Parameters::init(model);
    let mut snap = Snapshot {
        step: 0,
        adam: Adam::new(&params, config.learning_rate, config.adam),
        params,
        sampler: BatchSampler::new(train.len(), config.seed),
        history_len: 0,
        best: None,
    };
    let mut history: Vec<HistoryRecord> = Vec::new();
    let mut backed_off = false;

    'run: loop {
        let mut cur = snap.clone();
        history.truncate(snap.history_len);
        while cur.step < config.steps {
            let step = cur.step + 1;
            let batch = cur.sampler.next_batch(config.batch_size);
            let result = batch_mean(&cur.params, &batch, train, |p, _| {
                xent_loss_and_grad(&cur.params, p)
            })
            .and_then(|(losses, mut grads)| {
                let total = losses.iter().sum::<f64>() / losses.len() as f64;
                let norm = grads.clip_global_norm(config.clip_norm);
                if !norm.is_finite() {
                    return Err(Error::Divergence(format!("gradient norm is {norm}")));
                }
                cur.adam.step(&mut cur.params, &grads);
                if !cur.params.is_finite() {
                    return Err(Error::Divergence("parameters became non-finite".into()));
                }
                Ok((total, norm))
            });
            let (total, grad_norm) = match result {
                Ok(v) => v,
                Err(e) if e.is_divergence() && !backed_off => {
                    backed_off = true;
                    snap.adam.lr *= 0.5;
                    continue 'run;
                }
                Err(e) => return Err(e),
            };
            cur.step = step;
            monitor.on_step(&StepLog {
                step,
                total,
                terms: TermLosses {
                    xent: Some(total),
                    ..TermLosses::default()
                },
                mean_advantage: None,
                learning_rate: cur.adam.lr,
                grad_norm,
            })?;

            if step.is_multiple_of(config.eval_interval) {
                let dx = match dev_xent(&cur.params, dev) {
                    Ok(v) => v,
                    Err(e) if e.is_divergence() && !backed_off => {
                        backed_off = true;
                        snap.adam.lr *= 0.5;
                        continue 'run;
                    }
                    Err(e) => return Err(e),
                };
                let record = HistoryRecord {
                    step,
                    dev_xent: Some(dx),
                    ..HistoryRecord::default()
                };
                history.push(record.clone());
                monitor.on_eval(&record, &cur.params)?;
                if cur.best.as_ref().is_none_or(|(b, _)| dx < *b) {
                    cur.best = Some((
                        dx,
                        Checkpoint::new(&cur.params, vocab_hash, step, Vec::new()),
                    ));
                }
                cur.history_len = history.len();
                snap = cur.clone();
            }
        }
        let (_, mut best) = cur.best.expect("at least one evaluation");
        best.history = history.clone();
        return Ok(PretrainOutcome {
            best,
            history,
            learning_rate: cur.adam.lr,
        });
    }
}
