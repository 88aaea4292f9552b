use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dsrl::corpus::{
    build_vocab, corpus_stats, encode_all, read_corpus, read_encoded, write_encoded,
    ArticleSummaryPair,
};
use dsrl::metrics::{
    corpus_report, diversity_rate, repetition_rate, write_analysis_csv, write_csv, ReportExample,
};
use dsrl::model::HistoryRecord;
use dsrl::train::{
    evaluate as evaluate_model, pretrain as run_pretrain, rl_finetune, StepLog, TrainMonitor,
};
use dsrl::{Checkpoint, EncodedPair, Error, Parameters, Result, Vocabulary};

use crate::config::RunConfig;
use crate::inputs::{check_aligned, read_sequences};

pub const VOCAB_FILE: &str = "vocab.txt";

fn encoded_file(split: &str) -> String {
    format!("encoded_{split}.jsonl")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Runs `write` against the `output` file, or stdout when unset.
fn emit(cfg: &RunConfig, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match cfg.path("output") {
        Some(path) => {
            let mut w = create(&path)?;
            write(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn split_dev(
    mut pairs: Vec<ArticleSummaryPair>,
    fraction: f64,
) -> Result<(Vec<ArticleSummaryPair>, Vec<ArticleSummaryPair>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "dev_fraction {fraction} outside [0, 1)"
        )));
    }
    let n_dev = ((pairs.len() as f64 * fraction).round() as usize).max(1);
    if n_dev >= pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} pairs are too few to hold out a dev split",
            pairs.len()
        )));
    }
    let dev = pairs.split_off(pairs.len() - n_dev);
    Ok((pairs, dev))
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let input = cfg.require_path("input")?;
    let pairs = read_corpus(&input)?;
    let (train, dev) = match cfg.path("dev") {
        Some(p) => (pairs, read_corpus(&p)?),
        None => split_dev(pairs, cfg.num("dev_fraction")?)?,
    };
    let vocab = build_vocab(&train, cfg.num("vocab_size")?)?;
    let (max_src, max_tgt) = (cfg.num("max_src")?, cfg.num("max_tgt")?);
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    vocab.write(&out.join(VOCAB_FILE))?;

    let mut splits = vec![("train", train), ("dev", dev)];
    if let Some(p) = cfg.path("test") {
        splits.push(("test", read_corpus(&p)?));
    }
    println!("vocab_size {}", vocab.len());
    for (name, pairs) in &splits {
        let enc = encode_all(pairs, &vocab, max_src, max_tgt)?;
        write_encoded(&out.join(encoded_file(name)), &enc)?;
        let stats = corpus_stats(pairs, &vocab);
        println!(
            "{name} pairs {} tokens {} oov_tokens {} oov_rate {:.6}",
            stats.pairs,
            stats.tokens,
            stats.oov_tokens,
            stats.oov_rate()
        );
    }
    Ok(())
}

fn load_split(dir: &Path, split: &str) -> Result<Vec<EncodedPair>> {
    read_encoded(&dir.join(encoded_file(split)))
}

/// Streams the step log, the history CSV and per-interval checkpoints.
struct FileMonitor {
    log: BufWriter<File>,
    log_path: PathBuf,
    history: BufWriter<File>,
    history_path: PathBuf,
    ckpt_dir: PathBuf,
    stage: &'static str,
    vocab_hash: String,
    records: Vec<HistoryRecord>,
}

impl FileMonitor {
    fn new(out: &Path, stage: &'static str, header: &str, vocab_hash: &str) -> Result<Self> {
        let log_path = out.join(format!("{stage}.log"));
        let history_path = out.join(format!("{stage}_history.csv"));
        let mut history = create(&history_path)?;
        writeln!(history, "{header}").map_err(io_err(&history_path))?;
        Ok(FileMonitor {
            log: create(&log_path)?,
            log_path,
            history,
            history_path,
            ckpt_dir: out.join("checkpoints"),
            stage,
            vocab_hash: vocab_hash.to_string(),
            records: Vec::new(),
        })
    }

    fn finish(mut self) -> Result<()> {
        self.log.flush().map_err(io_err(&self.log_path))?;
        self.history.flush().map_err(io_err(&self.history_path))
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl TrainMonitor for FileMonitor {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        writeln!(self.log, "{log}").map_err(io_err(&self.log_path))
    }

    fn on_eval(&mut self, record: &HistoryRecord, params: &Parameters) -> Result<()> {
        let row = if self.stage == "pretrain" {
            format!("{},{}", record.step, fmt_opt(record.dev_xent))
        } else {
            format!(
                "{},{},{}",
                record.step,
                fmt_opt(record.f_bert),
                fmt_opt(record.rouge_l)
            )
        };
        writeln!(self.history, "{row}").map_err(io_err(&self.history_path))?;
        self.records.push(record.clone());
        let path = self
            .ckpt_dir
            .join(format!("{}-step-{:06}.json", self.stage, record.step));
        fs::create_dir_all(&self.ckpt_dir).map_err(io_err(&self.ckpt_dir))?;
        Checkpoint::new(params, &self.vocab_hash, record.step, self.records.clone()).save(&path)
    }
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    Vocabulary::read(&cfg.data_dir().join(VOCAB_FILE))
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let data = cfg.data_dir();
    let (train, dev) = (load_split(&data, "train")?, load_split(&data, "dev")?);
    let model = cfg.model_config(vocab.len())?;
    let tc = cfg.pretrain_config()?;
    let out = cfg.out_dir();
    let hash = vocab.content_hash();
    let mut monitor = FileMonitor::new(&out, "pretrain", "step,dev_xent", &hash)?;
    let outcome = run_pretrain(&tc, &model, &hash, &train, &dev, &mut monitor)?;
    monitor.finish()?;
    let path = out.join("pretrained.json");
    outcome.best.save(&path)?;
    let best = outcome
        .history
        .iter()
        .find(|h| h.step == outcome.best.step)
        .and_then(|h| h.dev_xent);
    println!(
        "best step {} dev_xent {} checkpoint {}",
        outcome.best.step,
        fmt_opt(best),
        path.display()
    );
    Ok(())
}

/// A missing or unreadable checkpoint counts as a checkpoint mismatch.
fn load_checkpoint(cfg: &RunConfig, vocab: &Vocabulary) -> Result<Checkpoint> {
    let path = cfg
        .path("checkpoint")
        .ok_or_else(|| Error::ConfigMismatch("no checkpoint given".into()))?;
    if !path.is_file() {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint {} not found",
            path.display()
        )));
    }
    let ck = Checkpoint::load(&path)?;
    ck.check_compatible(&cfg.model_config(vocab.len())?, &vocab.content_hash())?;
    Ok(ck)
}

pub fn finetune(cfg: &RunConfig) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let start = load_checkpoint(cfg, &vocab)?;
    let data = cfg.data_dir();
    let (train, dev) = (load_split(&data, "train")?, load_split(&data, "dev")?);
    let tc = cfg.finetune_config()?;
    let out = cfg.out_dir();
    let mut monitor = FileMonitor::new(&out, "finetune", "step,f_bert,rouge_l", &start.vocab_hash)?;
    let outcome = rl_finetune(&start, &tc, &vocab, &train, &dev, &mut monitor)?;
    monitor.finish()?;
    let path = out.join("finetuned.json");
    outcome.best.save(&path)?;
    println!(
        "start f_bert {:.6} rouge_l {:.6}; best step {} checkpoint {}",
        outcome.start.f_bert,
        outcome.start.rouge_l,
        outcome.best.step,
        path.display()
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let ck = load_checkpoint(cfg, &vocab)?;
    let params = ck.params()?;
    let test = match cfg.path("test") {
        Some(p) => encode_all(
            &read_corpus(&p)?,
            &vocab,
            ck.config.max_src,
            ck.config.max_tgt,
        )?,
        None => load_split(&cfg.data_dir(), "test")?,
    };
    let report = evaluate_model(&params, &vocab, &test, &cfg.provider()?, cfg.ngram()?)?;
    emit(cfg, |w| write_csv(&report, w))
}

fn read_optional_articles(cfg: &RunConfig, n: usize) -> Result<Option<Vec<dsrl::TokenSequence>>> {
    match cfg.path("articles") {
        None => Ok(None),
        Some(p) => {
            let arts = read_sequences(&p)?;
            check_aligned("articles", n, arts.len())?;
            Ok(Some(arts.into_iter().map(|a| a.1).collect()))
        }
    }
}

pub fn score(cfg: &RunConfig) -> Result<()> {
    let cands = read_sequences(&cfg.require_path("candidates")?)?;
    let refs = read_sequences(&cfg.require_path("references")?)?;
    check_aligned("references", cands.len(), refs.len())?;
    let articles = read_optional_articles(cfg, cands.len())?;
    let examples: Vec<ReportExample> = cands
        .into_iter()
        .zip(refs)
        .enumerate()
        .map(|(i, ((id, candidate), (_, reference)))| ReportExample {
            id,
            candidate,
            reference,
            article: articles.as_ref().map(|a| a[i].clone()),
        })
        .collect();
    let report = corpus_report(
        &examples,
        &cfg.provider()?,
        cfg.ngram()?,
        cfg.allow_negative()?,
    )?;
    emit(cfg, |w| write_csv(&report, w))
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let cands = read_sequences(&cfg.require_path("candidates")?)?;
    if cands.is_empty() {
        return Err(Error::Empty("candidate file"));
    }
    let articles = read_optional_articles(cfg, cands.len())?;
    let n = cfg.ngram()?;
    if n == 0 {
        return Err(Error::Config("ngram must be at least 1".into()));
    }
    let rows: Vec<(String, f64, Option<f64>)> = cands
        .iter()
        .enumerate()
        .map(|(i, (id, c))| {
            let div = articles.as_ref().map(|a| diversity_rate(c, &a[i], n));
            (id.clone(), repetition_rate(c, n), div)
        })
        .collect();
    emit(cfg, |w| write_analysis_csv(&rows, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dev_split_holds_out_tail() {
        let pairs: Vec<_> = (0..10)
            .map(|i| ArticleSummaryPair::from_text(i.to_string(), "a b", "a"))
            .collect();
        let (train, dev) = split_dev(pairs.clone(), 0.2).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(dev[0].id, "8");
        assert!(split_dev(pairs[..1].to_vec(), 0.1).is_err());
        assert!(split_dev(pairs, 1.0).is_err());
    }
}
