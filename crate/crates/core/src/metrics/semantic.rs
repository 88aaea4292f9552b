//! Greedy-matching semantic similarity between two embedded sequences.
//!
//! Each reference token is matched to its most similar candidate token
//! (recall) and each candidate token to its most similar reference token
//! (precision); similarities are inner products of unit vectors.

use std::collections::{HashMap, HashSet};

use crate::corpus::Token;
use crate::embed::ContextualEmbeddings;
use crate::error::{Error, Result};

use super::ScoreTriple;

/// A token sequence together with its per-token embeddings.
#[derive(Clone, Copy, Debug)]
pub struct Scored<'a> {
    pub tokens: &'a [Token],
    pub embeddings: &'a ContextualEmbeddings,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SemanticOptions<'a> {
    /// Token weights; uniform when absent.
    pub idf: Option<&'a IdfTable>,
    /// Keep negative cosine maxima instead of clamping them to 0.
    pub allow_negative: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    weights: HashMap<Token, f64>,
    default: f64,
}

impl IdfTable {
    pub fn new(weights: HashMap<Token, f64>, default: f64) -> Result<Self> {
        if default < 0.0 || weights.values().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "idf weights must be nonnegative".into(),
            ));
        }
        Ok(IdfTable { weights, default })
    }

    pub fn weight(&self, token: &Token) -> f64 {
        self.weights.get(token).copied().unwrap_or(self.default)
    }

    pub fn default_weight(&self) -> f64 {
        self.default
    }
}

/// `idf(w) = ln((N + 1) / (df(w) + 1))`; unseen tokens get `ln(N + 1)`.
pub fn compute_idf(refs: &[Vec<Token>]) -> Result<IdfTable> {
    if refs.is_empty() {
        return Err(Error::Empty("reference list"));
    }
    let n = refs.len() as f64;
    let mut df: HashMap<Token, usize> = HashMap::new();
    for r in refs {
        let uniq: HashSet<&Token> = r.iter().collect();
        for t in uniq {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    let weights = df
        .into_iter()
        .map(|(t, d)| (t, ((n + 1.0) / (d as f64 + 1.0)).ln()))
        .collect();
    IdfTable::new(weights, (n + 1.0).ln())
}

fn check(side: &Scored<'_>, what: &'static str) -> Result<()> {
    if side.tokens.is_empty() {
        return Err(Error::Empty(what));
    }
    if side.tokens.len() != side.embeddings.len() {
        return Err(Error::Embedding(format!(
            "{what}: {} tokens but {} vectors",
            side.tokens.len(),
            side.embeddings.len()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted mean over `rows` of each row's best match among `cols`.
fn greedy_side(
    rows: &Scored<'_>,
    cols: &Scored<'_>,
    idf: Option<&IdfTable>,
    allow_negative: bool,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (tok, v) in rows.tokens.iter().zip(rows.embeddings.rows()) {
        let best = cols
            .embeddings
            .rows()
            .map(|u| dot(v, u))
            .fold(f64::NEG_INFINITY, f64::max);
        let best = if allow_negative { best } else { best.max(0.0) };
        let w = idf.map_or(1.0, |t| t.weight(tok));
        num += w * best;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn semantic_score(
    candidate: Scored<'_>,
    reference: Scored<'_>,
    opts: SemanticOptions<'_>,
) -> Result<ScoreTriple> {
    check(&candidate, "candidate")?;
    check(&reference, "reference")?;
    if candidate.embeddings.dim() != reference.embeddings.dim() {
        return Err(Error::Embedding(format!(
            "dimension mismatch: candidate {} vs reference {}",
            candidate.embeddings.dim(),
            reference.embeddings.dim()
        )));
    }
    let recall = greedy_side(&reference, &candidate, opts.idf, opts.allow_negative);
    let precision = greedy_side(&candidate, &reference, opts.idf, opts.allow_negative);
    Ok(ScoreTriple::new(precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::embed::hash_embed;
    use proptest::prelude::*;

    fn emb(rows: &[&[f64]]) -> ContextualEmbeddings {
        ContextualEmbeddings::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_sequences_score_one() {
        let toks = tokenize("the cat sat");
        let e = hash_embed(&toks, 16, 0.5, 0).unwrap();
        let s = Scored {
            tokens: &toks,
            embeddings: &e,
        };
        let out = semantic_score(s, s, SemanticOptions::default()).unwrap();
        for v in [out.precision, out.recall, out.f] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_example() {
        let rt = tokenize("a b");
        let ct = tokenize("c");
        let re = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let ce = emb(&[&[0.6, 0.8]]);
        let out = semantic_score(
            Scored {
                tokens: &ct,
                embeddings: &ce,
            },
            Scored {
                tokens: &rt,
                embeddings: &re,
            },
            SemanticOptions::default(),
        )
        .unwrap();
        assert!((out.recall - 0.7).abs() < 1e-12);
        assert!((out.precision - 0.8).abs() < 1e-12);
        assert!((out.f - 2.0 * 0.7 * 0.8 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_is_zero() {
        let rt = tokenize("a b");
        let ct = tokenize("c");
        let re = emb(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let ce = emb(&[&[0.0, 0.0, 1.0]]);
        let out = semantic_score(
            Scored {
                tokens: &ct,
                embeddings: &ce,
            },
            Scored {
                tokens: &rt,
                embeddings: &re,
            },
            SemanticOptions::default(),
        )
        .unwrap();
        assert_eq!(out, ScoreTriple::ZERO);
    }

    #[test]
    fn negative_similarity_clamped_unless_allowed() {
        let t = tokenize("a");
        let pos = emb(&[&[1.0, 0.0]]);
        let neg = emb(&[&[-1.0, 0.0]]);
        let a = Scored {
            tokens: &t,
            embeddings: &pos,
        };
        let b = Scored {
            tokens: &t,
            embeddings: &neg,
        };
        assert_eq!(
            semantic_score(a, b, SemanticOptions::default()).unwrap(),
            ScoreTriple::ZERO
        );
        let raw = semantic_score(
            a,
            b,
            SemanticOptions {
                allow_negative: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(raw.precision, -1.0);
        assert_eq!(raw.f, 0.0);
    }

    #[test]
    fn errors() {
        let t = tokenize("a");
        let e2 = emb(&[&[1.0, 0.0]]);
        let e3 = emb(&[&[1.0, 0.0, 0.0]]);
        let a = Scored {
            tokens: &t,
            embeddings: &e2,
        };
        let empty = Scored {
            tokens: &[],
            embeddings: &e2,
        };
        assert!(semantic_score(empty, a, SemanticOptions::default()).is_err());
        assert!(semantic_score(a, empty, SemanticOptions::default()).is_err());
        let b = Scored {
            tokens: &t,
            embeddings: &e3,
        };
        assert!(semantic_score(a, b, SemanticOptions::default()).is_err());
        let two = tokenize("a b");
        let c = Scored {
            tokens: &two,
            embeddings: &e2,
        };
        assert!(semantic_score(a, c, SemanticOptions::default()).is_err());
    }

    #[test]
    fn idf_examples() {
        let refs = vec![tokenize("a b"), tokenize("a c"), tokenize("a d d")];
        let idf = compute_idf(&refs).unwrap();
        assert_eq!(idf.weight(&tokenize("a")[0]), 0.0);
        assert!((idf.weight(&tokenize("b")[0]) - 2f64.ln()).abs() < 1e-15);
        assert!((idf.weight(&tokenize("d")[0]) - 2f64.ln()).abs() < 1e-15);
        assert!((idf.weight(&tokenize("zzz")[0]) - 4f64.ln()).abs() < 1e-15);
        assert!(compute_idf(&[]).is_err());
    }

    #[test]
    fn idf_weights_change_scores() {
        let rt = tokenize("a b");
        let ct = tokenize("c");
        let re = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let ce = emb(&[&[0.6, 0.8]]);
        let mut w = HashMap::new();
        w.insert(rt[0].clone(), 3.0);
        w.insert(rt[1].clone(), 1.0);
        let idf = IdfTable::new(w, 1.0).unwrap();
        let out = semantic_score(
            Scored {
                tokens: &ct,
                embeddings: &ce,
            },
            Scored {
                tokens: &rt,
                embeddings: &re,
            },
            SemanticOptions {
                idf: Some(&idf),
                allow_negative: false,
            },
        )
        .unwrap();
        assert!((out.recall - (3.0 * 0.6 + 0.8) / 4.0).abs() < 1e-12);
        assert!((out.precision - 0.8).abs() < 1e-12);
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (2usize..6).prop_flat_map(|d| {
            let v = prop::collection::vec(-1.0f64..1.0, d)
                .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            (
                prop::collection::vec(v.clone(), 1..8),
                prop::collection::vec(v, 1..8),
            )
        })
    }

    fn labels(n: usize) -> Vec<Token> {
        (0..n)
            .map(|i| Token::new(format!("t{i}")).unwrap())
            .collect()
    }

    proptest! {
        #[test]
        fn swap_symmetry((a, b) in instance()) {
            let (ea, eb) = (ContextualEmbeddings::from_rows(&a).unwrap(), ContextualEmbeddings::from_rows(&b).unwrap());
            let (ta, tb) = (labels(a.len()), labels(b.len()));
            let x = Scored { tokens: &ta, embeddings: &ea };
            let y = Scored { tokens: &tb, embeddings: &eb };
            let xy = semantic_score(x, y, SemanticOptions::default()).unwrap();
            let yx = semantic_score(y, x, SemanticOptions::default()).unwrap();
            prop_assert_eq!(xy.precision, yx.recall);
            prop_assert_eq!(xy.recall, yx.precision);
            prop_assert!((xy.f - yx.f).abs() < 1e-15);
            for v in [xy.precision, xy.recall, xy.f] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn uniform_idf_cancels((a, b) in instance(), w in 0.1f64..5.0) {
            let (ea, eb) = (ContextualEmbeddings::from_rows(&a).unwrap(), ContextualEmbeddings::from_rows(&b).unwrap());
            let (ta, tb) = (labels(a.len()), labels(b.len()));
            let x = Scored { tokens: &ta, embeddings: &ea };
            let y = Scored { tokens: &tb, embeddings: &eb };
            let idf = IdfTable::new(HashMap::new(), w).unwrap();
            let plain = semantic_score(x, y, SemanticOptions::default()).unwrap();
            let weighted = semantic_score(x, y, SemanticOptions { idf: Some(&idf), allow_negative: false }).unwrap();
            prop_assert!((plain.precision - weighted.precision).abs() < 1e-12);
            prop_assert!((plain.recall - weighted.recall).abs() < 1e-12);
            prop_assert!((plain.f - weighted.f).abs() < 1e-12);
        }
    }
}
