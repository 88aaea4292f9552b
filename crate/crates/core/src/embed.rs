//! Per-token contextual embeddings for the semantic reward.
//!
//! Every vector leaving this module has unit L2 norm, so downstream scoring
//! can use plain dot products as cosine similarities.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::corpus::Token;
use crate::error::{Error, Result};

pub const DEFAULT_CONTEXT_MIX: f64 = 0.5;
pub const DEFAULT_DIM: usize = 64;

/// Row-major unit vectors, one per token.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualEmbeddings {
    dim: usize,
    data: Vec<f64>,
}

impl ContextualEmbeddings {
    /// Normalizes each row. Rejects ragged, non-finite or all-zero rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(Error::Empty("embedding rows"))?
            .as_ref()
            .len();
        if first == 0 {
            return Err(Error::Embedding("zero-dimensional vectors".into()));
        }
        let mut data = Vec::with_capacity(first * rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != first {
                return Err(Error::Embedding(format!(
                    "row {i} has dimension {}, expected {first}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Embedding(format!("row {i} has non-finite values")));
            }
            let norm = l2(row);
            if norm == 0.0 {
                return Err(Error::Embedding(format!("row {i} is the zero vector")));
            }
            data.extend(row.iter().map(|x| x / norm));
        }
        Ok(ContextualEmbeddings { dim: first, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn base_vector(token: &Token, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_str().as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = l2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Seeded pseudo-random token vectors blended with their immediate
/// neighbours: `v_i = normalize(b(w_i) + mix * (b(w_{i-1}) + b(w_{i+1})))`.
pub fn hash_embed(
    tokens: &[Token],
    dim: usize,
    context_mix: f64,
    seed: u64,
) -> Result<ContextualEmbeddings> {
    if tokens.is_empty() {
        return Err(Error::Empty("token list"));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("embedding dim {dim} < 2")));
    }
    if !(0.0..=1.0).contains(&context_mix) {
        return Err(Error::InvalidArgument(format!(
            "context_mix {context_mix} outside [0, 1]"
        )));
    }
    let base: Vec<Vec<f64>> = tokens.iter().map(|t| base_vector(t, dim, seed)).collect();
    let rows: Vec<Vec<f64>> = (0..tokens.len())
        .map(|i| {
            let mut v = base[i].clone();
            if context_mix > 0.0 {
                for j in [i.wrapping_sub(1), i + 1] {
                    if let Some(n) = base.get(j) {
                        v.iter_mut().zip(n).for_each(|(a, b)| *a += context_mix * b);
                    }
                }
                // Opposite neighbours can cancel the centre exactly only in
                // degenerate cases; fall back to the context-free vector.
                if l2(&v) < 1e-12 {
                    v.clone_from(&base[i]);
                }
            }
            v
        })
        .collect();
    ContextualEmbeddings::from_rows(&rows)
}

/// Reads a `DIM d` header followed by `<token> <v1> .. <vd>` rows. The token
/// column must match `expected` exactly.
pub fn load_embeddings(path: &Path, expected: &[Token]) -> Result<ContextualEmbeddings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, expected)
        .map_err(|e| Error::Embedding(format!("{}: {e}", path.display())))
}

fn parse_embeddings(
    text: &str,
    expected: &[Token],
) -> std::result::Result<ContextualEmbeddings, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("missing DIM header")?;
    let dim: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["DIM", d] => d.parse().map_err(|_| format!("bad DIM value {d:?}"))?,
        _ => return Err(format!("expected `DIM d` header, got {header:?}")),
    };
    let mut rows = Vec::new();
    let mut tokens = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split_whitespace();
        let tok = fields.next().ok_or_else(|| format!("row {i} empty"))?;
        let vals = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| format!("row {i}: bad number {f:?}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if vals.len() != dim {
            return Err(format!(
                "row {i} has dimension {}, header says {dim}",
                vals.len()
            ));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(format!("row {i} has non-finite values"));
        }
        tokens.push(tok);
        rows.push(vals);
    }
    if tokens.len() != expected.len() || tokens.iter().zip(expected).any(|(a, b)| *a != b.as_str())
    {
        return Err(format!(
            "token mismatch: file has [{}], expected [{}]",
            tokens.join(" "),
            crate::corpus::join(expected)
        ));
    }
    ContextualEmbeddings::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn write_embeddings(path: &Path, tokens: &[Token], emb: &ContextualEmbeddings) -> Result<()> {
    let mut out = format!("DIM {}\n", emb.dim());
    for (t, row) in tokens.iter().zip(emb.rows()) {
        out.push_str(t.as_str());
        for v in row {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Which side of a comparison a sequence belongs to; selects the
/// subdirectory for file-backed embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Candidate,
    Reference,
}

impl Side {
    pub fn dir_name(self) -> &'static str {
        match self {
            Side::Candidate => "cand",
            Side::Reference => "ref",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingProvider {
    Hash {
        dim: usize,
        context_mix: f64,
        seed: u64,
    },
    /// Precomputed vectors at `<dir>/cand/<id>.emb` and `<dir>/ref/<id>.emb`.
    File { dir: PathBuf },
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider::Hash {
            dim: DEFAULT_DIM,
            context_mix: DEFAULT_CONTEXT_MIX,
            seed: 0,
        }
    }
}

impl EmbeddingProvider {
    pub fn hash(dim: usize) -> Self {
        EmbeddingProvider::Hash {
            dim,
            context_mix: DEFAULT_CONTEXT_MIX,
            seed: 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingProvider::Hash { .. } => "hash",
            EmbeddingProvider::File { .. } => "file",
        }
    }

    /// File providers can only serve sequences that were embedded ahead of
    /// time, so they cannot score freshly generated text.
    pub fn supports_generated(&self) -> bool {
        matches!(self, EmbeddingProvider::Hash { .. })
    }

    pub fn embed(&self, id: &str, side: Side, tokens: &[Token]) -> Result<ContextualEmbeddings> {
        match self {
            EmbeddingProvider::Hash {
                dim,
                context_mix,
                seed,
            } => hash_embed(tokens, *dim, *context_mix, *seed),
            EmbeddingProvider::File { dir } => {
                let path = dir.join(side.dir_name()).join(format!("{id}.emb"));
                load_embeddings(&path, tokens)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn hash_embed_is_deterministic_and_unit() {
        let toks = tokenize("a b c a");
        let e1 = hash_embed(&toks, 16, 0.5, 7).unwrap();
        let e2 = hash_embed(&toks, 16, 0.5, 7).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.len(), 4);
        for r in e1.rows() {
            assert!((l2(r) - 1.0).abs() < 1e-9);
        }
        assert_ne!(e1, hash_embed(&toks, 16, 0.5, 8).unwrap());
    }

    #[test]
    fn context_changes_vectors() {
        let toks = tokenize("a b c a");
        let ctx = hash_embed(&toks, 16, 0.5, 0).unwrap();
        assert_ne!(ctx.row(0), ctx.row(3));
        let plain = hash_embed(&toks, 16, 0.0, 0).unwrap();
        assert_eq!(plain.row(0), plain.row(3));
        // Same token with the same neighbours yields the same vector.
        let again = hash_embed(&tokenize("x a b c a"), 16, 0.5, 0).unwrap();
        assert_eq!(again.row(2), ctx.row(1));
    }

    #[test]
    fn distinct_tokens_nearly_orthogonal() {
        let mut total = 0.0;
        for i in 0..1000 {
            let toks = tokenize(&format!("a{i} b{i}"));
            let e = hash_embed(&toks, 64, 0.0, 0).unwrap();
            total += dot(e.row(0), e.row(1)).abs();
        }
        assert!(total / 1000.0 < 0.2, "mean |cos| = {}", total / 1000.0);
    }

    #[test]
    fn hash_embed_errors() {
        assert!(hash_embed(&[], 8, 0.5, 0).is_err());
        assert!(hash_embed(&tokenize("a"), 1, 0.5, 0).is_err());
        assert!(hash_embed(&tokenize("a"), 8, 1.5, 0).is_err());
    }

    #[test]
    fn load_normalizes() {
        let toks = tokenize("a b c");
        let e = parse_embeddings("DIM 2\na 3 4\nb 1 0\nc 0 -2\n", &toks).unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(e.row(0), &[0.6, 0.8]);
        assert_eq!(e.row(2), &[0.0, -1.0]);

        let four = parse_embeddings("DIM 4\na 1 2 3 4\nb 1 0 0 0\nc 0 0 0 1\n", &toks).unwrap();
        assert_eq!(four.dim(), 4);
        assert_eq!(four.len(), 3);
    }

    #[test]
    fn load_errors() {
        let ab = tokenize("a b");
        assert!(parse_embeddings("DIM 2\na 1 0\nb 0 1\n", &tokenize("a c"))
            .unwrap_err()
            .contains("token mismatch"));
        assert!(parse_embeddings("DIM 2\na 1 0\nb 0 1 2\n", &ab).is_err());
        assert!(parse_embeddings("DIM 2\na 1 0\nb NaN 1\n", &ab).is_err());
        assert!(parse_embeddings("DIM 2\na 1 0\nb inf 1\n", &ab).is_err());
        assert!(parse_embeddings("a 1 0\n", &ab).is_err());
    }

    #[test]
    fn file_provider_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("ref")).unwrap();
        let toks = tokenize("x y");
        let emb = hash_embed(&toks, 8, 0.5, 3).unwrap();
        write_embeddings(&dir.path().join("ref").join("e1.emb"), &toks, &emb).unwrap();
        let provider = EmbeddingProvider::File {
            dir: dir.path().to_path_buf(),
        };
        let back = provider.embed("e1", Side::Reference, &toks).unwrap();
        for (a, b) in back.rows().zip(emb.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(provider.embed("e1", Side::Candidate, &toks).is_err());
    }
}
