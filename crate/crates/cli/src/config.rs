//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dsrl::embed::{DEFAULT_CONTEXT_MIX, DEFAULT_DIM};
use dsrl::train::{AdamConfig, Dataset, DEFAULT_CLIP_NORM, DEFAULT_PRETRAIN_LR, DEFAULT_RL_LR};
use dsrl::{EmbeddingProvider, Error, ModelConfig, Objective, Result, TrainConfig};

/// Every accepted key with its default and meaning. An empty default means
/// "unset".
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "out_dir",
        "out",
        "directory for every artifact a command writes",
    ),
    (
        "data_dir",
        "",
        "preprocess output read by training (defaults to out_dir)",
    ),
    (
        "input",
        "",
        "training corpus, JSONL with article/summary/id",
    ),
    (
        "dev",
        "",
        "dev corpus; when unset, dev_fraction of input is held out",
    ),
    ("test", "", "test corpus for preprocess or evaluate"),
    (
        "dev_fraction",
        "0.1",
        "trailing share of input held out as dev",
    ),
    ("checkpoint", "", "checkpoint to fine-tune or evaluate"),
    (
        "candidates",
        "",
        "candidate file for score/analyze (JSONL or raw lines)",
    ),
    ("references", "", "reference file for score"),
    ("articles", "", "optional article file for the novelty rate"),
    (
        "output",
        "",
        "CSV destination for score/analyze/evaluate (stdout when unset)",
    ),
    (
        "vocab_size",
        "50000",
        "vocabulary size including 4 reserved ids",
    ),
    ("max_src", "400", "article truncation length"),
    ("max_tgt", "100", "summary truncation and decode length"),
    ("model_embed_dim", "128", "word embedding width"),
    ("hidden_dim", "256", "recurrent state width"),
    (
        "seed",
        "1",
        "seed for initialization, batching and sampling",
    ),
    (
        "objective",
        "dsr",
        "fine-tuning objective: rouge_xent, dsr_rouge, dsr_xent or dsr",
    ),
    ("gamma", "", "mixing weight; dataset default when unset"),
    (
        "dataset",
        "gigaword",
        "gigaword or cnn_dm; picks gamma and n-gram defaults",
    ),
    (
        "learning_rate",
        "",
        "Adam step size; 1e-3 pretraining, 1e-5 fine-tuning when unset",
    ),
    ("batch_size", "16", "examples per optimizer step"),
    ("steps", "2000", "optimizer steps"),
    (
        "eval_interval",
        "100",
        "steps between dev evaluations and checkpoints",
    ),
    ("clip_norm", "2.0", "global gradient norm cap"),
    ("provider", "hash", "embedding provider: hash or file"),
    ("embed_dim", "64", "hash provider vector width"),
    ("context_mix", "0.5", "hash provider neighbor weight"),
    ("embed_seed", "0", "hash provider seed"),
    (
        "embed_dir",
        "",
        "file provider root with cand/ and ref/ subdirectories",
    ),
    (
        "ngram",
        "",
        "n-gram size for repetition and novelty; dataset default when unset",
    ),
    (
        "allow_negative_sim",
        "false",
        "keep negative cosine maxima in the semantic score",
    ),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn key_ref(key: &str) -> Result<&'static str> {
    KEYS.iter()
        .map(|k| k.0)
        .find(|k| *k == key)
        .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let k = key_ref(key)?;
        self.values.insert(k, value.into());
        Ok(())
    }

    /// Applies a `key = value` file (`#` starts a comment) or a flat JSON
    /// object.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        if text.trim_start().starts_with('{') {
            let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
            for (k, v) in map {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                };
                self.set(&k, v)?;
            }
            return Ok(());
        }
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.opt(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.opt(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out_dir").unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.path("data_dir").unwrap_or_else(|| self.out_dir())
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::parse(self.raw("dataset"))
    }

    pub fn ngram(&self) -> Result<usize> {
        match self.parse::<usize>("ngram")? {
            Some(n) => Ok(n),
            None => Ok(self.dataset()?.analysis_ngram()),
        }
    }

    pub fn allow_negative(&self) -> Result<bool> {
        self.num("allow_negative_sim")
    }

    pub fn provider(&self) -> Result<EmbeddingProvider> {
        match self.raw("provider") {
            "hash" => Ok(EmbeddingProvider::Hash {
                dim: self.parse("embed_dim")?.unwrap_or(DEFAULT_DIM),
                context_mix: self.parse("context_mix")?.unwrap_or(DEFAULT_CONTEXT_MIX),
                seed: self.num("embed_seed")?,
            }),
            "file" => Ok(EmbeddingProvider::File {
                dir: self.require_path("embed_dir")?,
            }),
            other => Err(Error::Config(format!("unknown provider {other:?}"))),
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            vocab_size,
            embed_dim: self.num("model_embed_dim")?,
            hidden_dim: self.num("hidden_dim")?,
            max_src: self.num("max_src")?,
            max_tgt: self.num("max_tgt")?,
            seed: self.num("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self, objective: Objective, default_lr: f64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            objective,
            learning_rate: self.parse("learning_rate")?.unwrap_or(default_lr),
            batch_size: self.num("batch_size")?,
            steps: self.num("steps")?,
            eval_interval: self.num("eval_interval")?,
            seed: self.num("seed")?,
            provider: self.provider()?,
            ngram: self.ngram()?,
            clip_norm: self.parse("clip_norm")?.unwrap_or(DEFAULT_CLIP_NORM),
            adam: AdamConfig::default(),
        })
    }

    pub fn pretrain_config(&self) -> Result<TrainConfig> {
        self.train_config(Objective::Xent, DEFAULT_PRETRAIN_LR)
    }

    pub fn finetune_config(&self) -> Result<TrainConfig> {
        let objective =
            Objective::parse(self.raw("objective"), self.parse("gamma")?, self.dataset()?)?;
        self.train_config(objective, DEFAULT_RL_LR)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, _, _) in KEYS {
            writeln!(f, "{k} = {}", self.raw(k))?;
        }
        Ok(())
    }
}
