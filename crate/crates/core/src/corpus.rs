//! Bitext ingestion, normalization and target-side vocabularies.
//!
//! Sentences are normalized with Unicode canonical composition, whitespace
//! collapsing and optional case folding, then split on whitespace. The
//! reserved separator token never survives normalization, so it can be used
//! as an unambiguous boundary marker downstream.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Reserved boundary token between the two halves of a generator input.
pub const SEP: &str = "<sep>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.is_empty() {
            return Err(Error::Config("language tag must not be empty".into()));
        }
        if code.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!(
                "language tag {code:?} contains whitespace"
            )));
        }
        if code.to_lowercase() != code {
            return Err(Error::Config(format!(
                "language tag {code:?} must be lowercase"
            )));
        }
        Ok(LanguageTag(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        LanguageTag::new(value)
    }
}

impl From<LanguageTag> for String {
    fn from(tag: LanguageTag) -> Self {
        tag.0
    }
}

impl std::str::FromStr for LanguageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LanguageTag::new(s)
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    pub case_fold: bool,
}

impl NormConfig {
    pub fn folded() -> Self {
        NormConfig { case_fold: true }
    }

    /// Identifier of the recipe, recorded on every sentence it produces.
    pub fn id(&self) -> &'static str {
        if self.case_fold {
            "nfc+ws+fold"
        } else {
            "nfc+ws"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub raw: String,
    pub tokens: Vec<String>,
    pub norm_id: &'static str,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a sentence whose raw text is its space-joined tokens.
    pub fn from_tokens(tokens: Vec<String>, norm_id: &'static str) -> Self {
        Sentence {
            raw: tokens.join(" "),
            tokens,
            norm_id,
        }
    }

    /// Space-joined tokens.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

pub fn normalize(raw: &str, norm: NormConfig) -> Sentence {
    let composed: String = raw.nfc().collect();
    let folded = if norm.case_fold {
        composed.to_lowercase()
    } else {
        composed
    };
    // Replacing with a space splits the surrounding text, so no new
    // separator occurrence can form across the cut.
    let cleaned = folded.replace(SEP, " ");
    let tokens = cleaned.split_whitespace().map(str::to_owned).collect();
    Sentence {
        raw: raw.to_owned(),
        tokens,
        norm_id: norm.id(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub pivot: Sentence,
    pub other: Sentence,
    /// Zero-based line number in the source file(s).
    pub source_line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pivot,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitextCorpus {
    pub corpus_id: String,
    pub pivot_lang: LanguageTag,
    pub other_lang: LanguageTag,
    pub pairs: Vec<SentencePair>,
    /// Pairs dropped at load time because a side normalized to nothing.
    pub dropped: usize,
}

impl BitextCorpus {
    /// Builds a corpus from raw text pairs, dropping pairs with an empty side.
    pub fn from_raw_pairs<P, O>(
        corpus_id: impl Into<String>,
        pivot_lang: LanguageTag,
        other_lang: LanguageTag,
        raw_pairs: impl IntoIterator<Item = (P, O)>,
        norm: NormConfig,
    ) -> Self
    where
        P: AsRef<str>,
        O: AsRef<str>,
    {
        let raw = raw_pairs
            .into_iter()
            .map(|(p, o)| (p.as_ref().to_owned(), o.as_ref().to_owned()))
            .collect();
        let (pairs, dropped) = normalize_pairs(raw, norm);
        BitextCorpus {
            corpus_id: corpus_id.into(),
            pivot_lang,
            other_lang,
            pairs,
            dropped,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn side(&self, index: usize, side: Side) -> &Sentence {
        match side {
            Side::Pivot => &self.pairs[index].pivot,
            Side::Other => &self.pairs[index].other,
        }
    }
}

pub(crate) fn default_corpus_id(pivot: &LanguageTag, other: &LanguageTag) -> String {
    format!("{pivot}-{other}")
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            String::from_utf8(line.to_vec()).map_err(|_| Error::InvalidUtf8 {
                path: path.to_path_buf(),
                line: i + 1,
            })
        })
        .collect()
}

fn normalize_pairs(raw: Vec<(String, String)>, norm: NormConfig) -> (Vec<SentencePair>, usize) {
    let total = raw.len();
    let pairs: Vec<SentencePair> = raw
        .into_par_iter()
        .enumerate()
        .filter_map(|(line, (p, o))| {
            let pivot = normalize(&p, norm);
            let other = normalize(&o, norm);
            (!pivot.is_empty() && !other.is_empty()).then_some(SentencePair {
                pivot,
                other,
                source_line: line,
            })
        })
        .collect();
    let dropped = total - pairs.len();
    (pairs, dropped)
}

/// Loads two line-aligned text files into a corpus.
pub fn load_bitext(
    pivot_path: &Path,
    other_path: &Path,
    pivot_lang: LanguageTag,
    other_lang: LanguageTag,
    norm: NormConfig,
) -> Result<BitextCorpus> {
    let pivot_lines = read_lines(pivot_path)?;
    let other_lines = read_lines(other_path)?;
    if pivot_lines.len() != other_lines.len() {
        return Err(Error::LineCountMismatch {
            pivot_path: pivot_path.to_path_buf(),
            pivot_lines: pivot_lines.len(),
            other_path: other_path.to_path_buf(),
            other_lines: other_lines.len(),
        });
    }
    let (pairs, dropped) = normalize_pairs(pivot_lines.into_iter().zip(other_lines).collect(), norm);
    Ok(BitextCorpus {
        corpus_id: default_corpus_id(&pivot_lang, &other_lang),
        pivot_lang,
        other_lang,
        pairs,
        dropped,
    })
}

/// Loads a two-column TSV (pivot, other) into a corpus.
pub fn load_tsv(
    path: &Path,
    pivot_lang: LanguageTag,
    other_lang: LanguageTag,
    norm: NormConfig,
) -> Result<BitextCorpus> {
    let lines = read_lines(path)?;
    let mut raw = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(p), Some(o), None) => raw.push((p.to_owned(), o.to_owned())),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected exactly two tab-separated columns".into(),
                })
            }
        }
    }
    let (pairs, dropped) = normalize_pairs(raw, norm);
    Ok(BitextCorpus {
        corpus_id: default_corpus_id(&pivot_lang, &other_lang),
        pivot_lang,
        other_lang,
        pairs,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Every entry is equally likely.
    #[default]
    Uniform,
    /// Entries are drawn proportionally to their corpus counts.
    Frequency,
}

/// Token counts over one side of a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: BTreeMap<String, u64>,
    total: u64,
    source_corpus_id: String,
    // Sampling tables, in `entries` order.
    keys: Vec<String>,
    cumulative: Vec<u64>,
}

impl Vocabulary {
    pub fn from_counts(
        counts: impl IntoIterator<Item = (String, u64)>,
        source_corpus_id: impl Into<String>,
    ) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (token, count) in counts {
            if count == 0 {
                return Err(Error::Data(format!("vocabulary entry {token:?} has zero count")));
            }
            *entries.entry(token).or_insert(0) += count;
        }
        let keys: Vec<String> = entries.keys().cloned().collect();
        let mut acc = 0u64;
        let cumulative = entries
            .values()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
        Ok(Vocabulary {
            entries,
            total: acc,
            source_corpus_id: source_corpus_id.into(),
            keys,
            cumulative,
        })
    }

    pub fn entries(&self) -> &BTreeMap<String, u64> {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_corpus_id(&self) -> &str {
        &self.source_corpus_id
    }

    pub fn count(&self, token: &str) -> u64 {
        self.entries.get(token).copied().unwrap_or(0)
    }

    /// Draws one token. With `exclude` set, that token is never returned
    /// unless it is the only entry, in which case it is.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        mode: SamplingMode,
        exclude: Option<&str>,
    ) -> Option<&str> {
        if self.keys.is_empty() {
            return None;
        }
        let excluded = exclude
            .and_then(|t| self.keys.binary_search_by(|k| k.as_str().cmp(t)).ok())
            .filter(|_| self.keys.len() > 1);
        let index = match (mode, excluded) {
            (SamplingMode::Uniform, None) => rng.gen_range(0..self.keys.len()),
            (SamplingMode::Uniform, Some(ex)) => {
                let k = rng.gen_range(0..self.keys.len() - 1);
                if k >= ex {
                    k + 1
                } else {
                    k
                }
            }
            (SamplingMode::Frequency, None) => {
                let r = rng.gen_range(0..self.total);
                self.cumulative.partition_point(|&c| c <= r)
            }
            (SamplingMode::Frequency, Some(ex)) => {
                let start = if ex == 0 { 0 } else { self.cumulative[ex - 1] };
                let weight = self.cumulative[ex] - start;
                let mut r = rng.gen_range(0..self.total - weight);
                if r >= start {
                    r += weight;
                }
                self.cumulative.partition_point(|&c| c <= r)
            }
        };
        Some(&self.keys[index])
    }

    /// Writes `token<TAB>count` lines in token order.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (token, count) in &self.entries {
            out.push_str(token);
            out.push('\t');
            out.push_str(&count.to_string());
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        let mut counts = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: message.to_owned(),
            };
            let (token, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected token<TAB>count"))?;
            let count: u64 = count.parse().map_err(|_| parse_err("invalid count"))?;
            counts.push((token.to_owned(), count));
        }
        let id = path.display().to_string();
        Vocabulary::from_counts(counts, id)
    }
}

/// Counts every token occurrence on one side of the corpus.
pub fn build_vocabulary(corpus: &BitextCorpus, side: Side) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Data(format!(
            "cannot build a vocabulary from empty corpus {}",
            corpus.corpus_id
        )));
    }
    let counts = corpus
        .pairs
        .par_chunks(4096)
        .map(|chunk| {
            let mut local: HashMap<&str, u64> = HashMap::new();
            for pair in chunk {
                let sentence = match side {
                    Side::Pivot => &pair.pivot,
                    Side::Other => &pair.other,
                };
                for token in &sentence.tokens {
                    *local.entry(token.as_str()).or_insert(0) += 1;
                }
            }
            local
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    Vocabulary::from_counts(
        counts.into_iter().map(|(k, v)| (k.to_owned(), v)),
        corpus.corpus_id.clone(),
    )
}
