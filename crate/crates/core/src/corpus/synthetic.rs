//! Seeded toy summarization corpora.
//!
//! Articles mix filler words (`f00`, `f01`, ...) with salient keywords
//! (`k00`, `k01`, ...). The reference summary lists the `summary_len`
//! highest-ranked keywords present in the article (lowest keyword index
//! first), so producing it requires both locating and ordering.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ArticleSummaryPair, Token};

#[derive(Clone, Debug, PartialEq)]
pub struct SalientSpec {
    pub pairs: usize,
    pub article_len: usize,
    pub fillers: usize,
    pub keywords: usize,
    /// Keywords placed in each article, inclusive range.
    pub keywords_per_article: (usize, usize),
    pub summary_len: usize,
    pub seed: u64,
}

impl Default for SalientSpec {
    fn default() -> Self {
        SalientSpec {
            pairs: 500,
            article_len: 8,
            fillers: 30,
            keywords: 8,
            keywords_per_article: (3, 4),
            summary_len: 3,
            seed: 0,
        }
    }
}

fn keyword(i: usize) -> Token {
    Token(format!("k{i:02}"))
}

fn filler(i: usize) -> Token {
    Token(format!("f{i:02}"))
}

pub fn salient_corpus(spec: &SalientSpec) -> Vec<ArticleSummaryPair> {
    let (lo, hi) = spec.keywords_per_article;
    assert!(lo >= spec.summary_len && lo <= hi && hi <= spec.keywords);
    assert!(hi <= spec.article_len && spec.fillers > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.pairs)
        .map(|n| {
            let k = rng.random_range(lo..=hi);
            let mut picked = index::sample(&mut rng, spec.keywords, k).into_vec();
            let mut article: Vec<Token> = picked.iter().map(|&i| keyword(i)).collect();
            while article.len() < spec.article_len {
                article.push(filler(rng.random_range(0..spec.fillers)));
            }
            article.shuffle(&mut rng);
            picked.sort_unstable();
            let summary = picked[..spec.summary_len]
                .iter()
                .map(|&i| keyword(i))
                .collect();
            ArticleSummaryPair {
                id: format!("toy{n:04}"),
                article,
                summary,
            }
        })
        .collect()
}
