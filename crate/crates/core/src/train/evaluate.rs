use rayon::prelude::*;

use crate::corpus::{EncodedPair, TokenSequence, Vocabulary};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::metrics::{corpus_report, MetricReport, ReportExample};
use crate::model::{greedy_decode, Parameters};

use super::DevMetrics;

/// Greedy decodes mapped to surface tokens, in corpus order. No
/// repetition filtering is applied.
pub fn decode_corpus(
    params: &Parameters,
    corpus: &[EncodedPair],
    vocab: &Vocabulary,
) -> Result<Vec<TokenSequence>> {
    corpus
        .par_iter()
        .map(|p| {
            greedy_decode(params, p)
                .map(|t| p.surface(&t.tokens, vocab))
                .map_err(|e| e.in_example(&p.id))
        })
        .collect()
}

/// Greedy-decodes `testset` and scores it against the references, with
/// repetition and novelty measured on `ngram`-grams.
pub fn evaluate(
    params: &Parameters,
    vocab: &Vocabulary,
    testset: &[EncodedPair],
    provider: &EmbeddingProvider,
    ngram: usize,
) -> Result<MetricReport> {
    if testset.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let outputs = decode_corpus(params, testset, vocab)?;
    let examples: Vec<ReportExample> = testset
        .iter()
        .zip(outputs)
        .map(|(p, candidate)| ReportExample {
            id: p.id.clone(),
            candidate,
            reference: p.summary.clone(),
            article: Some(p.article.clone()),
        })
        .collect();
    corpus_report(&examples, provider, ngram, false)
}

pub(super) fn dev_metrics(
    params: &Parameters,
    vocab: &Vocabulary,
    dev: &[EncodedPair],
    provider: &EmbeddingProvider,
) -> Result<DevMetrics> {
    let r = evaluate(params, vocab, dev, provider, 1)?;
    Ok(DevMetrics {
        f_bert: r.semantic.f,
        rouge_l: r.rouge.f,
    })
}
