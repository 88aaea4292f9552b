use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RewardKind;

/// Corpus family; selects the default mixing weights and n-gram size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dataset {
    #[default]
    Gigaword,
    CnnDm,
}

impl Dataset {
    /// Weight on the reinforcement term when mixed with cross-entropy.
    pub fn xent_mix_gamma(self) -> f64 {
        match self {
            Dataset::Gigaword => 0.998,
            Dataset::CnnDm => 0.9984,
        }
    }

    /// Gram size for the repetition/novelty analysis.
    pub fn analysis_ngram(self) -> usize {
        match self {
            Dataset::Gigaword => 1,
            Dataset::CnnDm => 5,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gigaword" => Ok(Dataset::Gigaword),
            "cnndm" | "cnn_dm" | "cnn-dm" => Ok(Dataset::CnnDm),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Gigaword => "gigaword",
            Dataset::CnnDm => "cnndm",
        }
    }
}

pub const DSR_ROUGE_GAMMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    /// Teacher-forced cross-entropy only (pretraining).
    Xent,
    /// `γ L_scst(rouge) + (1 - γ) L_xent`
    RougeXent { gamma: f64 },
    /// `γ L_scst(f_bert) + (1 - γ) L_scst(rouge)`
    DsrRouge { gamma: f64 },
    /// `γ' L_scst(f_bert) + (1 - γ') L_xent`
    DsrXent { gamma: f64 },
    /// `L_scst(f_bert)`
    Dsr,
}

/// Per-term weights of an objective's convex combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermWeights {
    pub dsr: f64,
    pub rouge: f64,
    pub xent: f64,
}

impl TermWeights {
    pub fn needs_sampling(&self) -> bool {
        self.dsr != 0.0 || self.rouge != 0.0
    }
}

impl Objective {
    /// Builds an objective by name, filling γ from the dataset defaults when
    /// not given.
    pub fn parse(name: &str, gamma: Option<f64>, dataset: Dataset) -> Result<Self> {
        let obj = match name {
            "xent" => Objective::Xent,
            "rouge_xent" => Objective::RougeXent {
                gamma: gamma.unwrap_or(dataset.xent_mix_gamma()),
            },
            "dsr_rouge" => Objective::DsrRouge {
                gamma: gamma.unwrap_or(DSR_ROUGE_GAMMA),
            },
            "dsr_xent" => Objective::DsrXent {
                gamma: gamma.unwrap_or(dataset.xent_mix_gamma()),
            },
            "dsr" => Objective::Dsr,
            other => return Err(Error::Config(format!("unknown objective {other:?}"))),
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Xent => "xent",
            Objective::RougeXent { .. } => "rouge_xent",
            Objective::DsrRouge { .. } => "dsr_rouge",
            Objective::DsrXent { .. } => "dsr_xent",
            Objective::Dsr => "dsr",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Objective::RougeXent { gamma }
            | Objective::DsrRouge { gamma }
            | Objective::DsrXent { gamma } => Some(gamma),
            Objective::Xent | Objective::Dsr => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.gamma() {
            Some(g) if !(0.0..=1.0).contains(&g) => {
                Err(Error::Config(format!("mixing weight {g} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn weights(&self) -> TermWeights {
        let zero = TermWeights {
            dsr: 0.0,
            rouge: 0.0,
            xent: 0.0,
        };
        match *self {
            Objective::Xent => TermWeights { xent: 1.0, ..zero },
            Objective::RougeXent { gamma } => TermWeights {
                rouge: gamma,
                xent: 1.0 - gamma,
                ..zero
            },
            Objective::DsrRouge { gamma } => TermWeights {
                dsr: gamma,
                rouge: 1.0 - gamma,
                ..zero
            },
            Objective::DsrXent { gamma } => TermWeights {
                dsr: gamma,
                xent: 1.0 - gamma,
                ..zero
            },
            Objective::Dsr => TermWeights { dsr: 1.0, ..zero },
        }
    }

    /// Dev-set selection score, mixing reward kinds as the objective does.
    pub fn dev_reward(&self, f_bert: f64, rouge_l: f64) -> f64 {
        let w = self.weights();
        let rl = w.dsr + w.rouge;
        if rl == 0.0 {
            return f_bert;
        }
        (w.dsr * f_bert + w.rouge * rouge_l) / rl
    }

    pub fn reward_kinds(&self) -> Vec<(RewardKind, f64)> {
        let w = self.weights();
        let mut out = Vec::new();
        if w.dsr != 0.0 {
            out.push((RewardKind::FBert, w.dsr));
        }
        if w.rouge != 0.0 {
            out.push((RewardKind::RougeLF, w.rouge));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_dataset() {
        let g = Objective::parse("rouge_xent", None, Dataset::Gigaword).unwrap();
        assert_eq!(g.gamma(), Some(0.998));
        let c = Objective::parse("dsr_xent", None, Dataset::CnnDm).unwrap();
        assert_eq!(c.gamma(), Some(0.9984));
        let d = Objective::parse("dsr_rouge", None, Dataset::CnnDm).unwrap();
        assert_eq!(d.gamma(), Some(0.5));
        assert_eq!(
            Objective::parse("dsr", Some(0.3), Dataset::Gigaword).unwrap(),
            Objective::Dsr
        );
        assert_eq!(Dataset::Gigaword.analysis_ngram(), 1);
        assert_eq!(Dataset::CnnDm.analysis_ngram(), 5);
    }

    #[test]
    fn weights_are_convex() {
        for name in ["xent", "rouge_xent", "dsr_rouge", "dsr_xent", "dsr"] {
            let w = Objective::parse(name, Some(0.3), Dataset::Gigaword)
                .unwrap()
                .weights();
            assert!((w.dsr + w.rouge + w.xent - 1.0).abs() < 1e-15);
        }
        let w = Objective::DsrRouge { gamma: 0.5 }.weights();
        assert_eq!((w.dsr, w.rouge, w.xent), (0.5, 0.5, 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Objective::parse("bleu", None, Dataset::Gigaword).is_err());
        assert!(Objective::parse("dsr_xent", Some(1.5), Dataset::Gigaword).is_err());
        assert!(Dataset::parse("wiki").is_err());
    }
}
