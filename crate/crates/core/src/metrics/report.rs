use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{strip_separators, TokenSequence};
use crate::embed::{EmbeddingProvider, Side};
use crate::error::{Error, Result};

use super::{
    diversity_rate, repetition_rate, rouge_l, semantic_score, ScoreTriple, Scored, SemanticOptions,
};

pub struct ReportExample {
    pub id: String,
    pub candidate: TokenSequence,
    pub reference: TokenSequence,
    /// Needed for the out-of-article rate; rows without one report no
    /// diversity.
    pub article: Option<TokenSequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub semantic: ScoreTriple,
    pub rouge: ScoreTriple,
    pub repetition: f64,
    pub diversity: Option<f64>,
}

/// Arithmetic means of per-example precision, recall and F.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub semantic: MeanScores,
    pub rouge: MeanScores,
    pub repetition: f64,
    /// Present only when every row has an article.
    pub diversity: Option<f64>,
    pub ngram: usize,
    pub rows: Vec<ReportRow>,
}

fn score_example(
    ex: &ReportExample,
    provider: &EmbeddingProvider,
    ngram: usize,
    allow_negative: bool,
) -> Result<ReportRow> {
    let cand = strip_separators(&ex.candidate);
    let reference = strip_separators(&ex.reference);
    if reference.is_empty() {
        return Err(Error::Empty("reference"));
    }
    let semantic = if cand.is_empty() {
        ScoreTriple::ZERO
    } else {
        let ce = provider.embed(&ex.id, Side::Candidate, &cand)?;
        let re = provider.embed(&ex.id, Side::Reference, &reference)?;
        semantic_score(
            Scored {
                tokens: &cand,
                embeddings: &ce,
            },
            Scored {
                tokens: &reference,
                embeddings: &re,
            },
            SemanticOptions {
                idf: None,
                allow_negative,
            },
        )?
    };
    let diversity = ex
        .article
        .as_ref()
        .map(|a| diversity_rate(&cand, &strip_separators(a), ngram));
    Ok(ReportRow {
        id: ex.id.clone(),
        semantic,
        rouge: rouge_l(&cand, &reference),
        repetition: repetition_rate(&cand, ngram),
        diversity,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_triple<'a>(triples: impl Iterator<Item = &'a ScoreTriple> + Clone) -> MeanScores {
    MeanScores {
        precision: mean(triples.clone().map(|t| t.precision)),
        recall: mean(triples.clone().map(|t| t.recall)),
        f: mean(triples.map(|t| t.f)),
    }
}

/// Scores every example on separator-stripped sequences and macro-averages.
/// Rows are scored in parallel and reduced in input order.
pub fn corpus_report(
    examples: &[ReportExample],
    provider: &EmbeddingProvider,
    ngram: usize,
    allow_negative: bool,
) -> Result<MetricReport> {
    if examples.is_empty() {
        return Err(Error::Empty("example list"));
    }
    if ngram == 0 {
        return Err(Error::InvalidArgument(
            "n-gram size must be at least 1".into(),
        ));
    }
    let rows = examples
        .par_iter()
        .map(|ex| {
            score_example(ex, provider, ngram, allow_negative).map_err(|e| e.in_example(&ex.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let diversity = rows
        .iter()
        .map(|r| r.diversity)
        .collect::<Option<Vec<f64>>>()
        .map(|d| mean(d.into_iter()));
    Ok(MetricReport {
        semantic: mean_triple(rows.iter().map(|r| &r.semantic)),
        rouge: mean_triple(rows.iter().map(|r| &r.rouge)),
        repetition: mean(rows.iter().map(|r| r.repetition)),
        diversity,
        ngram,
        rows,
    })
}

pub const CSV_HEADER: &str = "id,p_sem,r_sem,f_sem,p_rouge,r_rouge,f_rouge,rep,div";
pub const AVERAGE_ROW_ID: &str = "macro_avg";

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn csv_field(id: &str) -> String {
    if id.contains([',', '"', '\n']) {
        format!("\"{}\"", id.replace('"', "\"\""))
    } else {
        id.to_string()
    }
}

/// One row per example plus a trailing macro-average row.
pub fn write_csv<W: Write>(report: &MetricReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut line = |id: &str, s: ScoreTriple, r: ScoreTriple, rep: f64, div: Option<f64>| {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(id),
            fmt(s.precision),
            fmt(s.recall),
            fmt(s.f),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.f),
            fmt(rep),
            fmt_opt(div)
        )
    };
    for row in &report.rows {
        line(
            &row.id,
            row.semantic,
            row.rouge,
            row.repetition,
            row.diversity,
        )?;
    }
    let as_triple = |m: MeanScores| ScoreTriple {
        precision: m.precision,
        recall: m.recall,
        f: m.f,
    };
    line(
        AVERAGE_ROW_ID,
        as_triple(report.semantic),
        as_triple(report.rouge),
        report.repetition,
        report.diversity,
    )
}

/// Repetition and novelty only: `id,rep,div` plus a macro-average row.
pub fn write_analysis_csv<W: Write>(
    rows: &[(String, f64, Option<f64>)],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "id,rep,div")?;
    for (id, rep, div) in rows {
        writeln!(out, "{},{},{}", csv_field(id), fmt(*rep), fmt_opt(*div))?;
    }
    let rep = mean(rows.iter().map(|r| r.1));
    let div = rows
        .iter()
        .map(|r| r.2)
        .collect::<Option<Vec<f64>>>()
        .map(|d| mean(d.into_iter()));
    writeln!(out, "{AVERAGE_ROW_ID},{},{}", fmt(rep), fmt_opt(div))
}
