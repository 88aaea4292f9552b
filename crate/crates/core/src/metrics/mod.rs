//! Sentence-level lexical and semantic scores plus the repetition and
//! novelty analyses over generated text.

mod ngram;
mod report;
mod rouge;
mod semantic;

use serde::{Deserialize, Serialize};

pub use ngram::{diversity_rate, ngrams, repetition_rate};
pub use report::{
    corpus_report, write_analysis_csv, write_csv, MeanScores, MetricReport, ReportExample,
    ReportRow,
};
pub use rouge::{lcs_length, rouge_l};
pub use semantic::{compute_idf, semantic_score, IdfTable, Scored, SemanticOptions};

/// Precision, recall and their harmonic mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl ScoreTriple {
    pub const ZERO: ScoreTriple = ScoreTriple {
        precision: 0.0,
        recall: 0.0,
        f: 0.0,
    };

    /// `f = 2pr / (p + r)`, or 0 when `p + r <= 0`.
    pub fn new(precision: f64, recall: f64) -> Self {
        let sum = precision + recall;
        let f = if sum > 0.0 {
            2.0 * precision * recall / sum
        } else {
            0.0
        };
        ScoreTriple {
            precision,
            recall,
            f,
        }
    }
}
