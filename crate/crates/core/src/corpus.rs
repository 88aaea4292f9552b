//! Article/summary ingestion: whitespace tokenization, frequency-ranked
//! vocabulary, and pointer-extended id encoding.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod synthetic;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_RESERVED: usize = 4;

pub const RESERVED_SURFACES: [&str; NUM_RESERVED] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Sentence separator inside multi-sentence summaries.
pub const SEPARATOR: &str = "<s>";

pub const DEFAULT_MAX_SRC: usize = 400;
pub const DEFAULT_MAX_TGT: usize = 100;

/// A lowercase, whitespace-free text unit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

pub type TokenSequence = Vec<Token>;

impl Token {
    /// Returns `None` for empty strings or strings containing whitespace.
    pub fn new(surface: impl Into<String>) -> Option<Token> {
        let surface = surface.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(surface))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_separator(&self) -> bool {
        self.0 == SEPARATOR
    }

    fn is_reserved(&self) -> bool {
        RESERVED_SURFACES.contains(&self.0.as_str())
    }
}

impl TryFrom<String> for Token {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        Token::new(value.clone()).ok_or_else(|| format!("invalid token {value:?}"))
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases and splits on runs of whitespace.
pub fn tokenize(text: &str) -> TokenSequence {
    text.split_whitespace()
        .map(|w| Token(w.to_lowercase()))
        .collect()
}

pub fn join(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}

/// Drops sentence separators so multi-sentence summaries score as one
/// concatenated sequence.
pub fn strip_separators(tokens: &[Token]) -> TokenSequence {
    tokens
        .iter()
        .filter(|t| !t.is_separator())
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummaryPair {
    pub id: String,
    pub article: TokenSequence,
    pub summary: TokenSequence,
}

impl ArticleSummaryPair {
    pub fn from_text(id: impl Into<String>, article: &str, summary: &str) -> Self {
        ArticleSummaryPair {
            id: id.into(),
            article: tokenize(article),
            summary: tokenize(summary),
        }
    }
}

#[derive(Deserialize)]
struct RawPair {
    article: String,
    summary: String,
    #[serde(default)]
    id: Option<serde_json::Value>,
}

/// Reads one JSON object per line with `article`, `summary` and optional
/// `id`. Blank lines are skipped; missing ids default to the 1-based line
/// number.
pub fn read_corpus(path: &Path) -> Result<Vec<ArticleSummaryPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPair = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let id = match raw.id {
            None | Some(serde_json::Value::Null) => line_no.to_string(),
            Some(serde_json::Value::String(s)) => s,
            Some(other) => other.to_string(),
        };
        pairs.push(ArticleSummaryPair {
            id,
            article: tokenize(&raw.article),
            summary: tokenize(&raw.summary),
        });
    }
    Ok(pairs)
}

pub fn write_corpus(path: &Path, pairs: &[ArticleSummaryPair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let line = serde_json::json!({
            "id": p.id,
            "article": join(&p.article),
            "summary": join(&p.summary),
        });
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One serialized [`EncodedPair`] per line.
pub fn write_encoded(path: &Path, pairs: &[EncodedPair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_encoded(path: &Path) -> Result<Vec<EncodedPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(pairs)
}

/// Reserved ids first, then corpus tokens by descending frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<Token, u32>,
    tokens: Vec<Token>,
}

impl Vocabulary {
    fn with_tokens(body: impl IntoIterator<Item = Token>) -> Result<Self> {
        let mut tokens: Vec<Token> = RESERVED_SURFACES
            .iter()
            .map(|s| Token(s.to_string()))
            .collect();
        let mut index: HashMap<Token, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for tok in body {
            if index.contains_key(&tok) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary entry {tok}"
                )));
            }
            index.insert(tok.clone(), tokens.len() as u32);
            tokens.push(tok);
        }
        Ok(Vocabulary { index, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &Token) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &Token) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    /// Non-reserved entries in id order.
    pub fn body(&self) -> &[Token] {
        &self.tokens[NUM_RESERVED..]
    }

    /// One token per line; line `k` (0-based) holds id `k + 4`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in self.body() {
            writeln!(w, "{t}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut body = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let tok = Token::new(line.trim_end_matches('\r')).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: "vocabulary entries must be non-empty and whitespace-free".into(),
            })?;
            if tok.is_reserved() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("reserved token {tok} in vocabulary body"),
                });
            }
            body.push(tok);
        }
        Vocabulary::with_tokens(body)
    }

    /// SHA-256 over the vocabulary file contents, hex-encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in self.body() {
            h.update(t.as_str().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

pub fn build_vocab(pairs: &[ArticleSummaryPair], max_size: usize) -> Result<Vocabulary> {
    if pairs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if max_size <= NUM_RESERVED {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size must exceed {NUM_RESERVED}, got {max_size}"
        )));
    }
    let mut counts: HashMap<&Token, usize> = HashMap::new();
    for p in pairs {
        for t in p.article.iter().chain(&p.summary) {
            if !t.is_reserved() {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&Token, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - NUM_RESERVED);
    Vocabulary::with_tokens(ranked.into_iter().map(|(t, _)| t.clone()))
}

/// A pair mapped to model ids. Article OOVs receive per-pair extended ids
/// `V, V+1, ...` in first-occurrence order so the pointer can copy them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub id: String,
    pub source_ids: Vec<u32>,
    pub source_ext_ids: Vec<u32>,
    pub oov_tokens: Vec<Token>,
    /// `BOS, y_1 .. y_k, EOS`.
    pub target_ids: Vec<u32>,
    pub target_ext_ids: Vec<u32>,
    /// Truncated article as seen by the model.
    pub article: TokenSequence,
    /// Truncated reference summary.
    pub summary: TokenSequence,
}

impl EncodedPair {
    pub fn extended_size(&self, vocab_size: usize) -> usize {
        vocab_size + self.oov_tokens.len()
    }

    /// Number of predicted target positions (everything after BOS).
    pub fn target_len(&self) -> usize {
        self.target_ids.len() - 1
    }

    /// Maps extended ids back to surface tokens, dropping reserved ids
    /// other than UNK and cutting at the first EOS.
    pub fn surface(&self, ids: &[u32], vocab: &Vocabulary) -> TokenSequence {
        let v = vocab.len() as u32;
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            if id == EOS {
                break;
            }
            if id == PAD || id == BOS {
                continue;
            }
            let tok = if id >= v {
                self.oov_tokens.get((id - v) as usize)
            } else {
                vocab.token(id)
            };
            if let Some(t) = tok {
                out.push(t.clone());
            }
        }
        out
    }
}

pub fn encode_pair(
    pair: &ArticleSummaryPair,
    vocab: &Vocabulary,
    max_src: usize,
    max_tgt: usize,
) -> Result<EncodedPair> {
    if max_src == 0 || max_tgt == 0 {
        return Err(Error::InvalidArgument(
            "max_src and max_tgt must be at least 1".into(),
        ));
    }
    if pair.article.is_empty() {
        return Err(Error::Empty("article").in_example(&pair.id));
    }
    let v = vocab.len() as u32;
    let article: TokenSequence = pair.article.iter().take(max_src).cloned().collect();
    let summary: TokenSequence = pair.summary.iter().take(max_tgt - 1).cloned().collect();

    let mut oov_tokens: Vec<Token> = Vec::new();
    let mut oov_index: HashMap<&Token, u32> = HashMap::new();
    let mut source_ids = Vec::with_capacity(article.len());
    let mut source_ext_ids = Vec::with_capacity(article.len());
    for tok in &article {
        match vocab.id(tok) {
            Some(id) => {
                source_ids.push(id);
                source_ext_ids.push(id);
            }
            None => {
                let ext = *oov_index.entry(tok).or_insert_with(|| {
                    oov_tokens.push(tok.clone());
                    v + oov_tokens.len() as u32 - 1
                });
                source_ids.push(UNK);
                source_ext_ids.push(ext);
            }
        }
    }

    let mut target_ids = Vec::with_capacity(summary.len() + 2);
    let mut target_ext_ids = Vec::with_capacity(summary.len() + 2);
    target_ids.push(BOS);
    target_ext_ids.push(BOS);
    for tok in &summary {
        match vocab.id(tok) {
            Some(id) => {
                target_ids.push(id);
                target_ext_ids.push(id);
            }
            None => {
                target_ids.push(UNK);
                target_ext_ids.push(oov_index.get(tok).copied().unwrap_or(UNK));
            }
        }
    }
    target_ids.push(EOS);
    target_ext_ids.push(EOS);

    Ok(EncodedPair {
        id: pair.id.clone(),
        source_ids,
        source_ext_ids,
        oov_tokens,
        target_ids,
        target_ext_ids,
        article,
        summary,
    })
}

pub fn encode_all(
    pairs: &[ArticleSummaryPair],
    vocab: &Vocabulary,
    max_src: usize,
    max_tgt: usize,
) -> Result<Vec<EncodedPair>> {
    pairs
        .iter()
        .map(|p| encode_pair(p, vocab, max_src, max_tgt))
        .collect()
}

/// Corpus-level counts printed by preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub pairs: usize,
    pub tokens: usize,
    pub oov_tokens: usize,
}

impl CorpusStats {
    pub fn oov_rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.oov_tokens as f64 / self.tokens as f64
        }
    }
}

/// OOV rate over all article and summary tokens (before truncation).
pub fn corpus_stats(pairs: &[ArticleSummaryPair], vocab: &Vocabulary) -> CorpusStats {
    let mut tokens = 0;
    let mut oov = 0;
    for t in pairs
        .iter()
        .flat_map(|p| p.article.iter().chain(&p.summary))
    {
        tokens += 1;
        if vocab.id(t).is_none() {
            oov += 1;
        }
    }
    CorpusStats {
        pairs: pairs.len(),
        tokens,
        oov_tokens: oov,
    }
}
