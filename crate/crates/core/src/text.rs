//! Document cleaning, tokenization, vocabulary indexing and fixed-length encoding.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length every encoded document is truncated or padded to.
pub const SEQUENCE_LEN: usize = 200;
pub const PAD_INDEX: u32 = 0;
pub const OOV_INDEX: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";
/// 320000 embedding parameters at 64 dimensions.
pub const DEFAULT_VOCAB_SIZE: usize = 5000;

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
}

/// A set of tokens dropped during cleaning.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercases, replaces every non-letter (punctuation, digits, control
/// characters) with a space, drops stopwords and collapses whitespace.
pub fn clean(text: &str, stopwords: &Stopwords) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    lowered
        .split_whitespace()
        .filter(|t| !stopwords.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Token to index map with `0` reserved for padding and `1` for unknown tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    max_size: usize,
    tokens: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Self::from_tokens(r.tokens, r.max_size)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            max_size: v.max_size,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Keeps the `max_size - 2` most frequent tokens, ordered by descending
    /// count with ties broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Self> {
        if max_size < 3 {
            return Err(Error::InvalidConfig(format!("vocabulary size {max_size} < 3")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in corpus {
            for token in doc {
                *counts.entry(token.as_ref()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
        tokens.extend(ranked.into_iter().take(max_size - 2).map(|(t, _)| t.to_string()));
        Ok(Self::from_tokens(tokens, max_size))
    }

    fn from_tokens(tokens: Vec<String>, max_size: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            index,
            max_size,
        }
    }

    /// Number of indices in use, including the two reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn index_of(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(OOV_INDEX)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    /// `token<TAB>index` per line.
    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn from_tsv(text: &str, max_size: usize) -> Result<Self> {
        let mut tokens = Vec::new();
        for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let (token, index) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("vocabulary line {}: missing tab", line_no + 1)))?;
            let index: usize = index
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("vocabulary line {}: bad index", line_no + 1)))?;
            if index != tokens.len() {
                return Err(Error::Data(format!(
                    "vocabulary line {}: index {index} is not dense",
                    line_no + 1
                )));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != OOV_TOKEN || tokens.len() > max_size {
            return Err(Error::Data("vocabulary must start with the reserved tokens and fit max_size".into()));
        }
        Ok(Self::from_tokens(tokens, max_size))
    }
}

/// Fixed-length index sequence; positions at or past `true_length` hold the padding index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub indices: Vec<u32>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn as_f64(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64).collect()
    }
}

/// Maps tokens to indices, keeps the first `SEQUENCE_LEN` and right-pads.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> TokenSequence {
    encode_to_len(tokens, vocab, SEQUENCE_LEN)
}

pub fn encode_to_len<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, len: usize) -> TokenSequence {
    let mut indices: Vec<u32> = tokens
        .iter()
        .take(len)
        .map(|t| vocab.index_of(t.as_ref()))
        .collect();
    let true_length = indices.len();
    indices.resize(len, PAD_INDEX);
    TokenSequence { indices, true_length }
}

/// Everything needed to turn raw text into a model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextPipeline {
    pub stopwords: Stopwords,
    pub vocabulary: Vocabulary,
    pub sequence_len: usize,
}

impl TextPipeline {
    /// Fits a vocabulary on the given texts with the bundled stopword list.
    pub fn fit<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<Self> {
        let stopwords = Stopwords::english();
        let corpus: Vec<Vec<String>> = texts
            .iter()
            .map(|t| tokenize(&clean(t.as_ref(), &stopwords)))
            .collect();
        Ok(Self {
            vocabulary: Vocabulary::build(&corpus, max_size)?,
            stopwords,
            sequence_len: SEQUENCE_LEN,
        })
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        tokenize(&clean(text, &self.stopwords))
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        encode_to_len(&self.tokens(text), &self.vocabulary, self.sequence_len)
    }
}
