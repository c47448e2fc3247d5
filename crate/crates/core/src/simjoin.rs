//! Edit-distance similarity join between two bitexts sharing a pivot language.
//!
//! A pair of pivot sentences `(a, b)` joins when
//! `ed(a, b) <= gamma * min(|a|, |b|)`. Candidates are generated from a
//! per-length inverted index of token q-grams, pruned by a length filter and
//! a q-gram count filter, and confirmed with a banded verifier. Both filters
//! are loss-free: a pair that satisfies the threshold always survives them.

use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, BitextCorpus, NormConfig, Sentence};
use crate::error::{Error, Result};

/// Default cap on `|left| * |right|` for [`brute_force_candidates`].
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 16_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JoinConfig {
    pub gamma: f64,
    pub qgram: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Keep at most this many lowest-distance partners per left sentence; 0 keeps all.
    pub max_pairs_per_example: usize,
    /// Compare pivot sides case-insensitively.
    pub case_fold: bool,
    /// Emit pairs with identical (x1, y1, x2, y2) token sequences once.
    pub dedup: bool,
    /// Width of the sentence-length buckets of the index.
    pub bucket_width: usize,
}

impl Default for JoinConfig {
    fn default() -> Self {
        JoinConfig {
            gamma: 0.3,
            qgram: 2,
            min_tokens: 1,
            max_tokens: 1024,
            max_pairs_per_example: 0,
            case_fold: true,
            dedup: true,
            bucket_width: 1,
        }
    }
}

impl JoinConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        JoinConfig {
            gamma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.qgram == 0 {
            return Err(Error::Config("qgram must be at least 1".into()));
        }
        if self.bucket_width == 0 {
            return Err(Error::Config("bucket_width must be at least 1".into()));
        }
        if self.min_tokens > self.max_tokens {
            return Err(Error::Config(format!(
                "min_tokens {} exceeds max_tokens {}",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }

    fn admits(&self, len: usize) -> bool {
        (self.min_tokens..=self.max_tokens).contains(&len)
    }
}

/// Plain Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Distance if it is at most `tau`, `None` otherwise.
///
/// Only the diagonal band of width `2 * tau + 1` is evaluated and the scan
/// stops as soon as a whole row exceeds `tau`, so the cost is `O(tau * n)`.
pub fn bounded_edit_distance<T: PartialEq>(a: &[T], b: &[T], tau: usize) -> Option<usize> {
    let (n, m) = (a.len(), b.len());
    if n.abs_diff(m) > tau {
        return None;
    }
    if n == 0 || m == 0 {
        return Some(n.max(m));
    }
    const INF: usize = usize::MAX / 2;
    let mut prev = vec![INF; m + 1];
    let mut cur = vec![INF; m + 1];
    for (j, cell) in prev.iter_mut().enumerate().take(tau.min(m) + 1) {
        *cell = j;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(tau);
        let hi = (i + tau).min(m);
        if lo > 0 {
            cur[lo - 1] = INF;
        }
        let mut row_min = INF;
        for j in lo..=hi {
            let value = if j == 0 {
                i
            } else {
                let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
                sub.min(prev[j] + 1).min(cur[j - 1] + 1)
            };
            cur[j] = value;
            row_min = row_min.min(value);
        }
        if hi < m {
            cur[hi + 1] = INF;
        }
        if row_min > tau {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (prev[m] <= tau).then_some(prev[m])
}

/// Edit budget `gamma * min(la, lb)` as an exact real product.
pub fn threshold(gamma: f64, la: usize, lb: usize) -> f64 {
    gamma * la.min(lb) as f64
}

fn budget(gamma: f64, la: usize, lb: usize) -> usize {
    // The distance is an integer, so `d <= t` and `d <= floor(t)` agree.
    threshold(gamma, la, lb).floor() as usize
}

pub fn passes_threshold<T: PartialEq>(a: &[T], b: &[T], gamma: f64) -> bool {
    edit_distance(a, b) as f64 <= threshold(gamma, a.len(), b.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Posting {
    pub line: u32,
    pub len: u32,
    /// Occurrences of the q-gram in the sentence.
    pub count: u32,
}

/// Inverted q-gram index over the pivot side of one corpus.
///
/// Q-grams are keyed by a 64-bit hash of their token ids. A hash collision
/// can only inflate a shared-q-gram count, which never prunes a true match.
#[derive(Debug, Clone)]
pub struct SimIndex {
    qgram: usize,
    bucket_width: usize,
    token_ids: HashMap<String, u32>,
    seqs: Vec<Vec<u32>>,
    buckets: BTreeMap<usize, HashMap<u64, Vec<Posting>>>,
    by_length: BTreeMap<usize, Vec<u32>>,
    skipped: usize,
}

const UNKNOWN_TOKEN: u32 = u32::MAX;

fn qgram_key(gram: &[u32]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    gram.hash(&mut h);
    h.finish()
}

/// Distinct q-gram keys of `seq` with their multiplicities, sorted by key.
fn qgram_profile(seq: &[u32], q: usize) -> Vec<(u64, u32)> {
    if seq.len() < q {
        return Vec::new();
    }
    let mut keys: Vec<u64> = seq
        .windows(q)
        .filter(|w| !w.contains(&UNKNOWN_TOKEN))
        .map(qgram_key)
        .collect();
    keys.sort_unstable();
    let mut profile: Vec<(u64, u32)> = Vec::with_capacity(keys.len());
    for key in keys {
        match profile.last_mut() {
            Some((k, c)) if *k == key => *c += 1,
            _ => profile.push((key, 1)),
        }
    }
    profile
}

fn join_tokens(sentence: &Sentence, case_fold: bool) -> Vec<String> {
    if case_fold {
        sentence.tokens.iter().map(|t| t.to_lowercase()).collect()
    } else {
        sentence.tokens.clone()
    }
}

impl SimIndex {
    pub fn qgram(&self) -> usize {
        self.qgram
    }

    pub fn bucket_width(&self) -> usize {
        self.bucket_width
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn admitted(&self) -> usize {
        self.by_length.values().map(Vec::len).sum()
    }

    /// Ids of admitted sentences, ascending.
    pub fn admitted_lines(&self) -> Vec<u32> {
        let mut lines: Vec<u32> = self.by_length.values().flatten().copied().collect();
        lines.sort_unstable();
        lines
    }

    pub fn postings(&self) -> impl Iterator<Item = &Posting> {
        self.buckets.values().flat_map(|b| b.values().flatten())
    }

    pub fn posting_lists(&self) -> impl Iterator<Item = &[Posting]> {
        self.buckets
            .values()
            .flat_map(|b| b.values().map(Vec::as_slice))
    }

    fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.token_ids.get(t).copied().unwrap_or(UNKNOWN_TOKEN))
            .collect()
    }
}

pub fn build_index(corpus: &BitextCorpus, cfg: &JoinConfig) -> Result<SimIndex> {
    cfg.validate()?;
    let mut token_ids: HashMap<String, u32> = HashMap::new();
    let mut seqs = Vec::with_capacity(corpus.len());
    for pair in &corpus.pairs {
        let seq = join_tokens(&pair.pivot, cfg.case_fold)
            .into_iter()
            .map(|t| {
                let next = token_ids.len() as u32;
                *token_ids.entry(t).or_insert(next)
            })
            .collect::<Vec<u32>>();
        seqs.push(seq);
    }

    let mut buckets: BTreeMap<usize, HashMap<u64, Vec<Posting>>> = BTreeMap::new();
    let mut by_length: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let mut skipped = 0;
    for (line, seq) in seqs.iter().enumerate() {
        if !cfg.admits(seq.len()) {
            skipped += 1;
            continue;
        }
        let line = line as u32;
        by_length.entry(seq.len()).or_default().push(line);
        let bucket = buckets.entry(seq.len() / cfg.bucket_width).or_default();
        for (key, count) in qgram_profile(seq, cfg.qgram) {
            bucket.entry(key).or_default().push(Posting {
                line,
                len: seq.len() as u32,
                count,
            });
        }
    }
    Ok(SimIndex {
        qgram: cfg.qgram,
        bucket_width: cfg.bucket_width,
        token_ids,
        seqs,
        buckets,
        by_length,
        skipped,
    })
}

/// One joined pair, addressed by pair indices into the two corpora.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub left_index: usize,
    pub right_index: usize,
    pub distance: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinStats {
    pub left_sentences: usize,
    pub right_sentences: usize,
    pub left_skipped: usize,
    pub right_skipped: usize,
    /// Pairs handed to the verifier after filtering.
    pub verified: usize,
    /// Matches before deduplication and fan-out capping.
    pub raw_matches: usize,
    pub duplicates_removed: usize,
    pub capped: usize,
    pub candidates: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone)]
pub struct JoinOutput {
    /// Sorted by `(left_index, right_index)`.
    pub matches: Vec<CandidateMatch>,
    pub stats: JoinStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAlignedExample {
    pub left_corpus_id: String,
    pub right_corpus_id: String,
    pub left_index: usize,
    pub right_index: usize,
    pub x1: Sentence,
    pub y1: Sentence,
    pub x2: Sentence,
    pub y2: Sentence,
    pub distance: usize,
    pub threshold: f64,
}

/// Line-oriented JSON form of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub left_corpus: String,
    pub right_corpus: String,
    pub left_index: usize,
    pub right_index: usize,
    pub x1: String,
    pub y1: String,
    pub x2: String,
    pub y2: String,
    pub distance: usize,
    pub threshold: f64,
}

impl CandidateAlignedExample {
    pub fn to_record(&self) -> CandidateRecord {
        CandidateRecord {
            left_corpus: self.left_corpus_id.clone(),
            right_corpus: self.right_corpus_id.clone(),
            left_index: self.left_index,
            right_index: self.right_index,
            x1: self.x1.raw.clone(),
            y1: self.y1.raw.clone(),
            x2: self.x2.raw.clone(),
            y2: self.y2.raw.clone(),
            distance: self.distance,
            threshold: self.threshold,
        }
    }

    pub fn from_record(record: CandidateRecord, norm: NormConfig) -> Self {
        CandidateAlignedExample {
            x1: normalize(&record.x1, norm),
            y1: normalize(&record.y1, norm),
            x2: normalize(&record.x2, norm),
            y2: normalize(&record.y2, norm),
            left_corpus_id: record.left_corpus,
            right_corpus_id: record.right_corpus,
            left_index: record.left_index,
            right_index: record.right_index,
            distance: record.distance,
            threshold: record.threshold,
        }
    }
}

fn check_compatible(left: &BitextCorpus, right: &BitextCorpus) -> Result<()> {
    if left.pivot_lang != right.pivot_lang {
        return Err(Error::Data(format!(
            "pivot language mismatch: {} uses {}, {} uses {}",
            left.corpus_id, left.pivot_lang, right.corpus_id, right.pivot_lang
        )));
    }
    if left.other_lang == right.other_lang {
        return Err(Error::Data(format!(
            "both corpora translate into {}; a join needs two distinct languages",
            left.other_lang
        )));
    }
    Ok(())
}

struct Scratch {
    shared: Vec<u32>,
    touched: Vec<u32>,
}

fn query(
    index: &SimIndex,
    a: &[u32],
    cfg: &JoinConfig,
    scratch: &mut Scratch,
    left_index: usize,
    out: &mut Vec<CandidateMatch>,
) -> usize {
    let la = a.len();
    let q = index.qgram;
    let gamma = cfg.gamma;
    let hi = la + budget(gamma, la, usize::MAX);
    let mut verified = 0;

    let mut verify = |line: u32, out: &mut Vec<CandidateMatch>| {
        let b = &index.seqs[line as usize];
        let tau = budget(gamma, la, b.len());
        verified += 1;
        if let Some(distance) = bounded_edit_distance(a, b, tau) {
            out.push(CandidateMatch {
                left_index,
                right_index: line as usize,
                distance,
                threshold: threshold(gamma, la, b.len()),
            });
        }
    };

    // Minimum shared q-gram count per right length; lengths whose bound is
    // vacuous are verified exhaustively.
    let mut required: HashMap<usize, usize> = HashMap::new();
    for (&lb, lines) in index.by_length.range(..=hi) {
        let diff = la.abs_diff(lb) as f64;
        if diff > threshold(gamma, la, lb) {
            continue;
        }
        let tau = budget(gamma, la, lb) as i64;
        let bound = la.max(lb) as i64 - q as i64 + 1 - tau * q as i64;
        if bound <= 0 {
            for &line in lines {
                verify(line, out);
            }
        } else {
            required.insert(lb, bound as usize);
        }
    }
    if required.is_empty() {
        return verified;
    }

    let lo_len = *required.keys().min().unwrap();
    let hi_len = *required.keys().max().unwrap();
    let profile = qgram_profile(a, q);
    let buckets = index
        .buckets
        .range(lo_len / index.bucket_width..=hi_len / index.bucket_width);
    for (_, bucket) in buckets {
        for &(key, count_a) in &profile {
            let Some(postings) = bucket.get(&key) else {
                continue;
            };
            for p in postings {
                if !required.contains_key(&(p.len as usize)) {
                    continue;
                }
                let slot = &mut scratch.shared[p.line as usize];
                if *slot == 0 {
                    scratch.touched.push(p.line);
                }
                *slot += count_a.min(p.count);
            }
        }
    }
    scratch.touched.sort_unstable();
    for i in 0..scratch.touched.len() {
        let line = scratch.touched[i];
        let shared = std::mem::take(&mut scratch.shared[line as usize]) as usize;
        let lb = index.seqs[line as usize].len();
        if shared >= required[&lb] {
            verify(line, out);
        }
    }
    scratch.touched.clear();
    verified
}

/// Removes duplicate payloads and applies the fan-out cap. Input and output
/// are sorted by `(left_index, right_index)`.
fn finalize(
    left: &BitextCorpus,
    right: &BitextCorpus,
    mut matches: Vec<CandidateMatch>,
    cfg: &JoinConfig,
    stats: &mut JoinStats,
) -> Vec<CandidateMatch> {
    matches.sort_by_key(|m| (m.left_index, m.right_index));
    stats.raw_matches = matches.len();

    if cfg.dedup && !matches.is_empty() {
        let left_class = payload_classes(left);
        let right_class = payload_classes(right);
        let mut seen = std::collections::HashSet::new();
        matches.retain(|m| seen.insert((left_class[m.left_index], right_class[m.right_index])));
        stats.duplicates_removed = stats.raw_matches - matches.len();
    }

    if cfg.max_pairs_per_example > 0 {
        let before = matches.len();
        let mut capped = Vec::with_capacity(matches.len());
        for group in matches.chunk_by(|a, b| a.left_index == b.left_index) {
            let mut group = group.to_vec();
            group.sort_by_key(|m| (m.distance, m.right_index));
            group.truncate(cfg.max_pairs_per_example);
            group.sort_by_key(|m| m.right_index);
            capped.extend(group);
        }
        matches = capped;
        stats.capped = before - matches.len();
    }

    stats.candidates = matches.len();
    stats.mean_distance = if matches.is_empty() {
        0.0
    } else {
        matches.iter().map(|m| m.distance as f64).sum::<f64>() / matches.len() as f64
    };
    matches
}

/// Class id per pair; pairs share a class iff both token sequences match.
fn payload_classes(corpus: &BitextCorpus) -> Vec<u32> {
    let mut classes: HashMap<(&[String], &[String]), u32> = HashMap::new();
    corpus
        .pairs
        .iter()
        .map(|p| {
            let next = classes.len() as u32;
            *classes
                .entry((&p.pivot.tokens, &p.other.tokens))
                .or_insert(next)
        })
        .collect()
}

/// Indexed join. Matches are sorted by `(left_index, right_index)`.
pub fn join(left: &BitextCorpus, right: &BitextCorpus, cfg: &JoinConfig) -> Result<JoinOutput> {
    check_compatible(left, right)?;
    let index = build_index(right, cfg)?;
    let mut stats = JoinStats {
        left_sentences: left.len(),
        right_sentences: right.len(),
        right_skipped: index.skipped,
        ..Default::default()
    };

    let queries: Vec<Option<Vec<u32>>> = left
        .pairs
        .iter()
        .map(|p| {
            let tokens = join_tokens(&p.pivot, cfg.case_fold);
            cfg.admits(tokens.len()).then(|| index.encode(&tokens))
        })
        .collect();
    stats.left_skipped = queries.iter().filter(|q| q.is_none()).count();

    let right_len = right.len();
    let per_left: Vec<(Vec<CandidateMatch>, usize)> = queries
        .par_iter()
        .enumerate()
        .map_init(
            || Scratch {
                shared: vec![0; right_len],
                touched: Vec::new(),
            },
            |scratch, (i, seq)| {
                let mut out = Vec::new();
                let verified = match seq {
                    Some(seq) => query(&index, seq, cfg, scratch, i, &mut out),
                    None => 0,
                };
                (out, verified)
            },
        )
        .collect();

    let mut matches = Vec::new();
    for (found, verified) in per_left {
        stats.verified += verified;
        matches.extend(found);
    }
    let matches = finalize(left, right, matches, cfg, &mut stats);
    Ok(JoinOutput { matches, stats })
}

pub fn materialize(
    left: &BitextCorpus,
    right: &BitextCorpus,
    matches: &[CandidateMatch],
) -> Vec<CandidateAlignedExample> {
    matches
        .iter()
        .map(|m| {
            let l = &left.pairs[m.left_index];
            let r = &right.pairs[m.right_index];
            CandidateAlignedExample {
                left_corpus_id: left.corpus_id.clone(),
                right_corpus_id: right.corpus_id.clone(),
                left_index: m.left_index,
                right_index: m.right_index,
                x1: l.pivot.clone(),
                y1: l.other.clone(),
                x2: r.pivot.clone(),
                y2: r.other.clone(),
                distance: m.distance,
                threshold: m.threshold,
            }
        })
        .collect()
}

/// Indexed join, returning full candidate examples in `(left, right)` order.
pub fn extract_candidates(
    left: &BitextCorpus,
    right: &BitextCorpus,
    cfg: &JoinConfig,
) -> Result<Vec<CandidateAlignedExample>> {
    let out = join(left, right, cfg)?;
    Ok(materialize(left, right, &out.matches))
}

/// Literal all-pairs evaluation of the threshold rule, without filters,
/// length admission or fan-out cap. Reads `gamma`, `case_fold` and `dedup`
/// from `cfg`. Refuses inputs with more than `cap` sentence pairs.
pub fn brute_force_candidates(
    left: &BitextCorpus,
    right: &BitextCorpus,
    cfg: &JoinConfig,
    cap: usize,
) -> Result<Vec<CandidateMatch>> {
    check_compatible(left, right)?;
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", cfg.gamma)));
    }
    let work = left.len().saturating_mul(right.len());
    if work > cap {
        return Err(Error::Data(format!(
            "brute-force join of {} x {} sentences exceeds the cap of {cap} pairs; use the indexed join",
            left.len(),
            right.len()
        )));
    }
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut intern = |corpus: &BitextCorpus| -> Vec<Vec<u32>> {
        corpus
            .pairs
            .iter()
            .map(|p| {
                join_tokens(&p.pivot, cfg.case_fold)
                    .into_iter()
                    .map(|t| {
                        let next = ids.len() as u32;
                        *ids.entry(t).or_insert(next)
                    })
                    .collect()
            })
            .collect()
    };
    let lefts = intern(left);
    let rights = intern(right);
    let matches: Vec<CandidateMatch> = lefts
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, a)| {
            rights.iter().enumerate().filter_map(move |(j, b)| {
                let distance = edit_distance(a, b);
                let t = threshold(cfg.gamma, a.len(), b.len());
                (distance as f64 <= t).then_some(CandidateMatch {
                    left_index: i,
                    right_index: j,
                    distance,
                    threshold: t,
                })
            })
        })
        .collect();
    let uncapped = JoinConfig {
        max_pairs_per_example: 0,
        ..cfg.clone()
    };
    Ok(finalize(left, right, matches, &uncapped, &mut JoinStats::default()))
}
