//! Token files for `score` and `analyze`.

use std::path::Path;

use serde::Deserialize;

use dsrl::corpus::tokenize;
use dsrl::{Error, Result, Token, TokenSequence};

#[derive(Deserialize)]
#[serde(untagged)]
enum Tokens {
    List(Vec<String>),
    Text(String),
}

#[derive(Deserialize)]
struct Record {
    #[serde(default)]
    id: Option<serde_json::Value>,
    tokens: Tokens,
}

/// One sequence per line, either JSONL `{"id", "tokens"}` (tokens as a
/// list or a whitespace-separated string) or raw text. The format is JSONL
/// when every non-blank line starts with `{`. Missing ids default to the
/// 1-based line number. Raw files keep blank lines as empty sequences.
pub fn read_sequences(path: &Path) -> Result<Vec<(String, TokenSequence)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let jsonl = text.lines().any(|l| !l.trim().is_empty())
        && text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .all(|l| l.trim_start().starts_with('{'));
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if !jsonl {
            out.push((line_no.to_string(), tokenize(line)));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let tokens = match rec.tokens {
            Tokens::Text(s) => tokenize(&s),
            Tokens::List(v) => v
                .into_iter()
                .map(|s| {
                    Token::new(s.clone()).ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: format!("invalid token {s:?}"),
                    })
                })
                .collect::<Result<_>>()?,
        };
        let id = match rec.id {
            None | Some(serde_json::Value::Null) => line_no.to_string(),
            Some(serde_json::Value::String(s)) => s,
            Some(other) => other.to_string(),
        };
        out.push((id, tokens));
    }
    Ok(out)
}

pub fn check_aligned(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::InvalidArgument(format!(
            "{what} has {got} entries but candidates have {expected}"
        )));
    }
    Ok(())
}
