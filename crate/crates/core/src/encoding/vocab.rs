use std::collections::HashMap;

use thiserror::Error;

use crate::frontend::tokenize;

pub const PAD: usize = 0;
pub const CLS: usize = 1;
pub const SEP: usize = 2;
pub const MASK: usize = 3;
pub const UNK: usize = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary size {0} leaves no room for the {n} reserved tokens", n = SPECIAL_TOKENS.len())]
    SizeTooSmall(usize),
    #[error("malformed vocabulary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Token ↔ id map with the five reserved ids fixed at 0..=4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Lower-cased words and single punctuation marks of a natural-language comment.
pub fn comment_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// `token\tid` lines in id order. Tabs, newlines and backslashes inside
    /// tokens are escaped.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, t) in self.tokens.iter().enumerate() {
            out.push_str(&escape(t));
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, VocabError> {
        let mut tokens = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let malformed = |reason: &str| VocabError::Malformed { line: line_no + 1, reason: reason.to_string() };
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| malformed("missing tab"))?;
            let id: usize = id.parse().map_err(|_| malformed("id is not an integer"))?;
            if id != tokens.len() {
                return Err(malformed("ids must be dense and ascending"));
            }
            tokens.push(unescape(tok));
        }
        if tokens.len() < SPECIAL_TOKENS.len() || tokens[..SPECIAL_TOKENS.len()] != SPECIAL_TOKENS {
            return Err(VocabError::Malformed { line: 1, reason: "reserved tokens missing".to_string() });
        }
        Ok(Self::from_tokens(tokens))
    }
}

fn escape(t: &str) -> String {
    t.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(t: &str) -> String {
    let mut out = String::new();
    let mut chars = t.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Builds a vocabulary of at most `size` entries from `(comment, code)`
/// pairs. After the reserved ids, tokens are ranked by descending frequency
/// with ties broken lexicographically. Code that fails to tokenize
/// contributes only its comment.
pub fn build_vocab<'a, I>(corpus: I, size: usize) -> Result<Vocabulary, VocabError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    if size < SPECIAL_TOKENS.len() {
        return Err(VocabError::SizeTooSmall(size));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut seen = false;
    for (comment, code) in corpus {
        seen = true;
        for w in comment_tokens(comment) {
            *counts.entry(w).or_default() += 1;
        }
        if let Ok(toks) = tokenize(code) {
            for t in toks {
                *counts.entry(t.vocab_key().to_string()).or_default() += 1;
            }
        }
    }
    if !seen {
        return Err(VocabError::EmptyCorpus);
    }
    for s in SPECIAL_TOKENS {
        counts.remove(s);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(t, _)| t))
        .take(size)
        .collect();
    Ok(Vocabulary::from_tokens(tokens))
}
