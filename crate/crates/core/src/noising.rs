//! Self-supervised training data for the generator.
//!
//! Each target sentence is corrupted position by position: with probability
//! `beta` the token at an original position is removed, substituted by a
//! vocabulary token, or preceded by an inserted vocabulary token. The
//! training source is the pivot sentence, the separator, and the corrupted
//! target; the training target is the untouched target sentence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, BitextCorpus, SamplingMode, Sentence, Side, Vocabulary, SEP};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpWeights {
    pub insert: f64,
    pub remove: f64,
    pub substitute: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            insert: 1.0 / 3.0,
            remove: 1.0 / 3.0,
            substitute: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub beta: f64,
    pub op_weights: OpWeights,
    pub seed: u64,
    pub sampling: SamplingMode,
    /// Stop corrupting a sentence after this many operations. Unlimited when unset.
    pub max_ops: Option<usize>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            beta: 0.5,
            op_weights: OpWeights::default(),
            seed: 0,
            sampling: SamplingMode::Uniform,
            max_ops: None,
        }
    }
}

impl NoiseConfig {
    pub fn with_beta(beta: f64, seed: u64) -> Self {
        NoiseConfig {
            beta,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        let w = self.op_weights;
        if [w.insert, w.remove, w.substitute].iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::Config("operation weights must be non-negative".into()));
        }
        let sum = w.insert + w.remove + w.substitute;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("operation weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn needs_vocabulary(&self) -> bool {
        self.beta > 0.0 && (self.op_weights.insert > 0.0 || self.op_weights.substitute > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseOp {
    Insert,
    Remove,
    Substitute,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    /// Original positions visited.
    pub positions: u64,
    pub inserts: u64,
    pub removes: u64,
    pub substitutes: u64,
}

impl NoiseCounts {
    pub fn noised(&self) -> u64 {
        self.inserts + self.removes + self.substitutes
    }

    pub fn rate(&self) -> f64 {
        if self.positions == 0 {
            0.0
        } else {
            self.noised() as f64 / self.positions as f64
        }
    }

    pub fn add(&mut self, other: &NoiseCounts) {
        self.positions += other.positions;
        self.inserts += other.inserts;
        self.removes += other.removes;
        self.substitutes += other.substitutes;
    }

    fn record(&mut self, op: NoiseOp) {
        match op {
            NoiseOp::Insert => self.inserts += 1,
            NoiseOp::Remove => self.removes += 1,
            NoiseOp::Substitute => self.substitutes += 1,
        }
    }
}

fn choose_op<R: Rng + ?Sized>(rng: &mut R, w: &OpWeights) -> NoiseOp {
    let u: f64 = rng.gen();
    if u < w.insert {
        NoiseOp::Insert
    } else if u < w.insert + w.remove {
        NoiseOp::Remove
    } else if w.substitute > 0.0 {
        NoiseOp::Substitute
    } else if w.remove > 0.0 {
        NoiseOp::Remove
    } else {
        NoiseOp::Insert
    }
}

/// Corrupts `y`, also reporting which operations were applied.
pub fn noise_with_counts<R: Rng + ?Sized>(
    y: &[String],
    cfg: &NoiseConfig,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<(Vec<String>, NoiseCounts)> {
    if cfg.needs_vocabulary() && vocab.is_empty() {
        return Err(Error::Data(
            "insert/substitute noise requires a non-empty vocabulary".into(),
        ));
    }
    let mut out = Vec::with_capacity(y.len() + 4);
    let mut counts = NoiseCounts {
        positions: y.len() as u64,
        ..Default::default()
    };
    let mut applied = 0usize;
    for token in y {
        let alpha: f64 = rng.gen();
        let capped = cfg.max_ops.is_some_and(|cap| applied >= cap);
        if alpha >= cfg.beta || capped {
            out.push(token.clone());
            continue;
        }
        let op = choose_op(rng, &cfg.op_weights);
        match op {
            NoiseOp::Remove => {}
            NoiseOp::Insert => {
                let word = vocab.sample(rng, cfg.sampling, None).expect("vocabulary checked non-empty");
                out.push(word.to_owned());
                out.push(token.clone());
            }
            NoiseOp::Substitute => {
                let word = vocab
                    .sample(rng, cfg.sampling, Some(token))
                    .expect("vocabulary checked non-empty");
                out.push(word.to_owned());
            }
        }
        counts.record(op);
        applied += 1;
    }
    Ok((out, counts))
}

pub fn noise<R: Rng + ?Sized>(
    y: &[String],
    cfg: &NoiseConfig,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<Vec<String>> {
    noise_with_counts(y, cfg, vocab, rng).map(|(tokens, _)| tokens)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for one pair, independent of scheduling and worker count.
pub fn pair_rng(seed: u64, corpus_id: &str, pair_index: usize) -> ChaCha8Rng {
    let stream = splitmix64(seed ^ splitmix64(fnv1a(corpus_id.as_bytes())));
    ChaCha8Rng::seed_from_u64(splitmix64(stream ^ pair_index as u64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub corpus_id: String,
    pub pair_index: usize,
    pub source_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisedTrainingExample {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub meta: ExampleMeta,
}

impl NoisedTrainingExample {
    pub fn source_text(&self) -> String {
        self.source.join(" ")
    }

    pub fn target_text(&self) -> String {
        self.target.join(" ")
    }

    /// The corrupted target, i.e. everything after the separator.
    pub fn noised_target(&self) -> &[String] {
        let sep = self.source.iter().position(|t| t == SEP).unwrap_or(self.source.len());
        &self.source[(sep + 1).min(self.source.len())..]
    }
}

#[derive(Debug, Clone, Serialize)]
struct TrainingRecord<'a> {
    source: &'a str,
    target: &'a str,
    meta: &'a ExampleMeta,
}

pub fn make_training_example<R: Rng + ?Sized>(
    x2: &Sentence,
    y2: &Sentence,
    cfg: &NoiseConfig,
    vocab: &Vocabulary,
    rng: &mut R,
    meta: ExampleMeta,
) -> Result<(NoisedTrainingExample, NoiseCounts)> {
    let (noised, counts) = noise_with_counts(&y2.tokens, cfg, vocab, rng)?;
    let mut source = Vec::with_capacity(x2.len() + 1 + noised.len());
    source.extend(x2.tokens.iter().cloned());
    source.push(SEP.to_owned());
    source.extend(noised);
    Ok((
        NoisedTrainingExample {
            source,
            target: y2.tokens.clone(),
            meta,
        },
        counts,
    ))
}

/// Noises every pair of `corpus` with its own derived generator.
pub fn training_examples(
    corpus: &BitextCorpus,
    cfg: &NoiseConfig,
    vocab: &Vocabulary,
) -> Result<(Vec<NoisedTrainingExample>, NoiseCounts)> {
    cfg.validate()?;
    let built: Vec<(NoisedTrainingExample, NoiseCounts)> = corpus
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let mut rng = pair_rng(cfg.seed, &corpus.corpus_id, i);
            let meta = ExampleMeta {
                corpus_id: corpus.corpus_id.clone(),
                pair_index: i,
                source_line: pair.source_line,
            };
            make_training_example(&pair.pivot, &pair.other, cfg, vocab, &mut rng, meta)
        })
        .collect::<Result<_>>()?;
    let mut total = NoiseCounts::default();
    let examples = built
        .into_iter()
        .map(|(ex, counts)| {
            total.add(&counts);
            ex
        })
        .collect();
    Ok((examples, total))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainingOutput {
    /// Aligned source and target text files, one example per line.
    Parallel { source: PathBuf, target: PathBuf },
    /// One `{source, target, meta}` object per line.
    Jsonl(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmitSummary {
    pub pairs: usize,
    pub noise: NoiseCounts,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the generator training set for `corpus`, noising targets with a
/// vocabulary built from the corpus' own target side.
pub fn emit_training_set(
    corpus: &BitextCorpus,
    cfg: &NoiseConfig,
    out: &TrainingOutput,
) -> Result<EmitSummary> {
    let vocab = build_vocabulary(corpus, Side::Other)?;
    let (examples, noise) = training_examples(corpus, cfg, &vocab)?;
    match out {
        TrainingOutput::Parallel { source, target } => {
            let mut src = create(source)?;
            let mut tgt = create(target)?;
            for ex in &examples {
                writeln!(src, "{}", ex.source_text()).map_err(|e| Error::io(source, e))?;
                writeln!(tgt, "{}", ex.target_text()).map_err(|e| Error::io(target, e))?;
            }
            src.flush().map_err(|e| Error::io(source, e))?;
            tgt.flush().map_err(|e| Error::io(target, e))?;
        }
        TrainingOutput::Jsonl(path) => {
            let mut w = create(path)?;
            for ex in &examples {
                let record = TrainingRecord {
                    source: &ex.source_text(),
                    target: &ex.target_text(),
                    meta: &ex.meta,
                };
                let line = serde_json::to_string(&record).expect("record serializes");
                writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(EmitSummary {
        pairs: examples.len(),
        noise,
    })
}
