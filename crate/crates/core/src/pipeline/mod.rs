//! End-to-end orchestration: extraction, training-data emission, generation,
//! assembly and statistics for every pair of non-pivot languages.

pub mod config;
pub mod mixture;
pub mod stats;
pub mod sweep;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BitextCorpus, LanguageTag};
use crate::error::{Error, Result};
use crate::generation::{
    run_generation, AssemblyContext, ChildProcessTransport, EditReplay, GenerationTally, Generator, HttpTransport,
    Lexicon, MultiWayRecord, Outcome, Rejection,
};
use crate::noising::{emit_training_set, NoiseCounts, TrainingOutput};
use crate::simjoin::{join, materialize, CandidateAlignedExample, JoinStats};

pub use config::{GeneratorConfig, GeneratorKind, Manifest, ManifestEntry, Overrides, PipelineConfig};
pub use mixture::{prepend_language_token, temperature_sample, MixturePlan};
pub use stats::{stats_matrix, CorpusStats, PairCount};
pub use sweep::{sweep, SweepConfig, SweepReport};

/// Version of the `report.json` layout.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub gamma: f64,
    pub beta: f64,
    pub temperature: f64,
    pub seed: u64,
    pub generator: GeneratorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub corpus_id: String,
    pub pivot_lang: LanguageTag,
    pub other_lang: LanguageTag,
    pub pairs: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub corpus_id: String,
    pub examples: usize,
    pub noise: NoiseCounts,
    pub source: String,
    pub target: String,
}

/// Output files of one language pair, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFiles {
    pub candidates: String,
    pub multiway: String,
    pub rejected: String,
    pub left_text: String,
    pub right_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub name: String,
    pub left_lang: LanguageTag,
    pub right_lang: LanguageTag,
    pub left_corpus: String,
    pub right_corpus: String,
    pub join: JoinStats,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub copy_through: usize,
    pub unaligned: usize,
    pub resumed_from: usize,
    pub generator: String,
    pub files: PairFiles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub pair: Option<String>,
    /// Candidates fully written before the failure.
    pub checkpoint: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub status: RunStatus,
    pub settings: ReportSettings,
    pub corpora: Vec<CorpusReport>,
    pub training: Vec<TrainingReport>,
    pub pairs: Vec<PairReport>,
    pub stats: Option<CorpusStats>,
    pub failure: Option<Failure>,
    /// Wall-clock milliseconds per stage, keyed `stage` or `pair/stage`.
    pub timings_ms: BTreeMap<String, u64>,
}

struct StageError {
    stage: &'static str,
    pair: Option<String>,
    error: Error,
}

fn stage<T>(stage: &'static str, pair: Option<&str>, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError {
        stage,
        pair: pair.map(str::to_owned),
        error,
    })
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn create_file(path: &Path, append: bool) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = if append {
        OpenOptions::new().create(true).append(true).open(path)
    } else {
        File::create(path)
    };
    file.map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Generator for candidates whose right side is `target`, with its report label.
pub fn build_generator(cfg: &PipelineConfig, target: &LanguageTag) -> Result<(Generator, String)> {
    let g = &cfg.generator;
    match g.kind {
        GeneratorKind::EditReplay => {
            let path = g
                .lexicons
                .get(target.as_str())
                .ok_or_else(|| Error::Config(format!("no lexicon configured for {target}")))?;
            let replay = EditReplay {
                lexicon: Lexicon::load(path)?,
                case_fold: cfg.join.case_fold,
            };
            Ok((Generator::EditReplay(replay), format!("edit-replay:{target}")))
        }
        GeneratorKind::Http => {
            let url = g
                .endpoints
                .get(target.as_str())
                .or(g.url.as_ref())
                .ok_or_else(|| Error::Config(format!("no generator URL configured for {target}")))?;
            let transport = HttpTransport::new(url.clone(), &cfg.transport);
            Ok((
                Generator::Remote {
                    transport: Box::new(transport),
                    config: cfg.transport.clone(),
                },
                format!("http:{target}"),
            ))
        }
        GeneratorKind::Process => {
            let (program, args) = g
                .command
                .split_first()
                .ok_or_else(|| Error::Config("process generator needs a command".into()))?;
            let transport = ChildProcessTransport::new(program.clone(), args.to_vec(), &cfg.transport);
            Ok((
                Generator::Remote {
                    transport: Box::new(transport),
                    config: cfg.transport.clone(),
                },
                format!("process:{target}"),
            ))
        }
    }
}

fn write_json_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<()> {
    let line = serde_json::to_string(value).expect("records serialize");
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

const CHECKPOINT_EVERY: usize = 1024;

struct PairOutcome {
    report: PairReport,
    timings: Vec<(String, u64)>,
}

fn run_pair(
    cfg: &PipelineConfig,
    left: &BitextCorpus,
    right: &BitextCorpus,
    out_dir: &Path,
) -> std::result::Result<PairOutcome, StageError> {
    let name = format!("{}-{}", left.other_lang, right.other_lang);
    let at = Some(name.as_str());
    let files = PairFiles {
        candidates: format!("candidates/{name}.jsonl"),
        multiway: format!("multiway/{name}.jsonl"),
        rejected: format!("multiway/{name}.rejected.jsonl"),
        left_text: format!("multiway/{name}.{}", left.other_lang),
        right_text: format!("multiway/{name}.{}", right.other_lang),
    };
    let mut timings = Vec::new();

    let t = Instant::now();
    let joined = stage("extract", at, join(left, right, &cfg.join_config()))?;
    let candidates = materialize(left, right, &joined.matches);
    let cand_path = out_dir.join(&files.candidates);
    stage("extract", at, (|| {
        let mut w = create_file(&cand_path, false)?;
        for c in &candidates {
            write_json_line(&mut w, &c.to_record(), &cand_path)?;
        }
        w.flush().map_err(|e| Error::io(&cand_path, e))
    })())?;
    timings.push((format!("{name}/extract"), elapsed_ms(t)));

    let t = Instant::now();
    let (generator, generator_id) = stage("generate", at, build_generator(cfg, &right.other_lang))?;
    let ctx = AssemblyContext {
        left_lang: left.other_lang.clone(),
        right_lang: right.other_lang.clone(),
        generator_id: generator_id.clone(),
    };
    let checkpoint_path = out_dir.join(format!("multiway/{name}.checkpoint"));
    let resume_from = if cfg.resume {
        fs::read_to_string(&checkpoint_path)
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .unwrap_or(0)
    } else {
        0
    };
    let append = resume_from > 0;
    let paths = [&files.multiway, &files.rejected, &files.left_text, &files.right_text].map(|f| out_dir.join(f));
    let earlier = if append {
        stage("generate", at, restore_prefix(&paths, &candidates[..resume_from.min(candidates.len())]))?
    } else {
        GenerationTally::default()
    };
    let mut writers = stage(
        "generate",
        at,
        paths.iter().map(|p| create_file(p, append)).collect::<Result<Vec<_>>>(),
    )?;

    let flush_all = |writers: &mut Vec<BufWriter<File>>| -> Result<()> {
        for (w, p) in writers.iter_mut().zip(&paths) {
            w.flush().map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    };
    let save_checkpoint =
        |done: usize| fs::write(&checkpoint_path, format!("{done}\n")).map_err(|e| Error::io(&checkpoint_path, e));

    let result = run_generation(&candidates, &generator, &cfg.filter, &ctx, resume_from, |i, outcome: &Outcome| {
        match outcome {
            Ok(ex) => {
                write_json_line(&mut writers[0], &ex.to_record(), &paths[0])?;
                writeln!(writers[2], "{}", ex.left.raw).map_err(|e| Error::io(&paths[2], e))?;
                writeln!(writers[3], "{}", ex.right.raw).map_err(|e| Error::io(&paths[3], e))?;
            }
            Err(rejection) => write_json_line(&mut writers[1], rejection, &paths[1])?,
        }
        if (i + 1) % CHECKPOINT_EVERY == 0 {
            flush_all(&mut writers)?;
            save_checkpoint(i + 1)?;
        }
        Ok(())
    });
    let tally = match result {
        Ok(mut tally) => {
            tally.candidates += earlier.candidates;
            tally.accepted += earlier.accepted;
            for (reason, n) in &earlier.rejected {
                *tally.rejected.entry(*reason).or_insert(0) += n;
            }
            tally
        }
        Err(error) => {
            let _ = flush_all(&mut writers);
            if let Error::Aborted { checkpoint, .. } = &error {
                let _ = save_checkpoint(*checkpoint);
            }
            return Err(StageError {
                stage: "generate",
                pair: Some(name),
                error,
            });
        }
    };
    stage("generate", at, flush_all(&mut writers))?;
    stage("generate", at, save_checkpoint(candidates.len()))?;
    timings.push((format!("{name}/generate"), elapsed_ms(t)));

    Ok(PairOutcome {
        report: PairReport {
            name: name.clone(),
            left_lang: left.other_lang.clone(),
            right_lang: right.other_lang.clone(),
            left_corpus: left.corpus_id.clone(),
            right_corpus: right.corpus_id.clone(),
            join: joined.stats,
            candidates: tally.candidates,
            accepted: tally.accepted,
            rejected: tally
                .rejected
                .iter()
                .map(|(r, c)| (r.as_str().to_owned(), *c))
                .collect(),
            copy_through: tally.copy_through,
            unaligned: tally.unaligned,
            resumed_from: resume_from,
            generator: generator_id,
            files,
        },
        timings,
    })
}

/// Trims the generation outputs of an interrupted run to the records of
/// `done` and returns their tally. Records past the checkpoint may have
/// been flushed before the interruption.
fn restore_prefix(paths: &[PathBuf; 4], done: &[CandidateAlignedExample]) -> Result<GenerationTally> {
    let keep: HashSet<(usize, usize)> = done.iter().map(|c| (c.left_index, c.right_index)).collect();
    let read = |p: &Path| -> Result<String> {
        match fs::read_to_string(p) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
            Err(e) => Err(Error::io(p, e)),
        }
    };
    let parse_err = |p: &Path, line: usize, e: serde_json::Error| Error::Parse {
        path: p.to_path_buf(),
        line: line + 1,
        message: e.to_string(),
    };

    let mut tally = GenerationTally::default();
    let mut accepted = Vec::new();
    for (i, line) in read(&paths[0])?.lines().enumerate() {
        let r: MultiWayRecord = serde_json::from_str(line).map_err(|e| parse_err(&paths[0], i, e))?;
        if keep.contains(&(r.provenance.left_index, r.provenance.right_index)) {
            accepted.push(r);
        }
    }
    let mut rejected = Vec::new();
    for (i, line) in read(&paths[1])?.lines().enumerate() {
        let r: Rejection = serde_json::from_str(line).map_err(|e| parse_err(&paths[1], i, e))?;
        if keep.contains(&(r.left_index, r.right_index)) {
            *tally.rejected.entry(r.reason).or_insert(0) += 1;
            rejected.push(r);
        }
    }
    tally.accepted = accepted.len();
    tally.candidates = accepted.len() + rejected.len();
    if tally.candidates != done.len() {
        return Err(Error::Data(format!(
            "checkpoint covers {} candidates but {} outputs survive; rerun without resume",
            done.len(),
            tally.candidates
        )));
    }

    let mut writers = paths.iter().map(|p| create_file(p, false)).collect::<Result<Vec<_>>>()?;
    for r in &accepted {
        write_json_line(&mut writers[0], r, &paths[0])?;
        writeln!(writers[2], "{}", r.left).map_err(|e| Error::io(&paths[2], e))?;
        writeln!(writers[3], "{}", r.right).map_err(|e| Error::io(&paths[3], e))?;
    }
    for r in &rejected {
        write_json_line(&mut writers[1], r, &paths[1])?;
    }
    for (w, p) in writers.iter_mut().zip(paths) {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(tally)
}

/// Runs the whole pipeline and writes `report.json` to the output
/// directory, including on failure.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let manifest_path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no manifest configured".into()))?;
    let manifest = Manifest::load(manifest_path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_with_manifest(cfg, &manifest))
}

fn run_with_manifest(cfg: &PipelineConfig, manifest: &Manifest) -> Result<RunReport> {
    let out_dir = &cfg.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = RunReport {
        version: REPORT_VERSION,
        status: RunStatus::Ok,
        settings: ReportSettings {
            gamma: cfg.gamma,
            beta: cfg.beta,
            temperature: cfg.temperature,
            seed: cfg.seed,
            generator: cfg.generator.kind,
        },
        corpora: Vec::new(),
        training: Vec::new(),
        pairs: Vec::new(),
        stats: None,
        failure: None,
        timings_ms: BTreeMap::new(),
    };

    let outcome = run_stages(cfg, manifest, out_dir, &mut report);
    if let Err(failed) = &outcome {
        report.status = RunStatus::Failed;
        report.failure = Some(Failure {
            stage: failed.stage.to_owned(),
            pair: failed.pair.clone(),
            checkpoint: match &failed.error {
                Error::Aborted { checkpoint, .. } => Some(*checkpoint),
                _ => None,
            },
            message: failed.error.to_string(),
        });
    }
    write_report(out_dir, &report)?;
    match outcome {
        Ok(()) => Ok(report),
        Err(failed) => Err(failed.error),
    }
}

fn write_report(out_dir: &Path, report: &RunReport) -> Result<()> {
    let path = out_dir.join("report.json");
    let body = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn run_stages(
    cfg: &PipelineConfig,
    manifest: &Manifest,
    out_dir: &Path,
    report: &mut RunReport,
) -> std::result::Result<(), StageError> {
    let t = Instant::now();
    let corpora = stage("load", None, manifest.load_corpora(cfg.norm))?;
    report.timings_ms.insert("load".into(), elapsed_ms(t));
    report.corpora = corpora
        .iter()
        .map(|c| CorpusReport {
            corpus_id: c.corpus_id.clone(),
            pivot_lang: c.pivot_lang.clone(),
            other_lang: c.other_lang.clone(),
            pairs: c.len(),
            dropped: c.dropped,
        })
        .collect();

    let t = Instant::now();
    let noise = cfg.noise_config();
    report.training = corpora
        .par_iter()
        .map(|c| {
            let source = format!("train/{}.src", c.corpus_id);
            let target = format!("train/{}.tgt", c.corpus_id);
            let out = TrainingOutput::Parallel {
                source: out_dir.join(&source),
                target: out_dir.join(&target),
            };
            let summary = stage("train-data", Some(&c.corpus_id), emit_training_set(c, &noise, &out))?;
            Ok(TrainingReport {
                corpus_id: c.corpus_id.clone(),
                examples: summary.pairs,
                noise: summary.noise,
                source,
                target,
            })
        })
        .collect::<std::result::Result<_, StageError>>()?;
    report.timings_ms.insert("train-data".into(), elapsed_ms(t));

    let pairs: Vec<(usize, usize)> = (0..corpora.len())
        .flat_map(|i| (i + 1..corpora.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<std::result::Result<PairOutcome, StageError>> = pairs
        .par_iter()
        .map(|&(i, j)| run_pair(cfg, &corpora[i], &corpora[j], out_dir))
        .collect();
    let mut first_error = None;
    for result in results {
        match result {
            Ok(done) => {
                report.timings_ms.extend(done.timings);
                report.pairs.push(done.report);
            }
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let t = Instant::now();
    let mut languages = vec![manifest.pivot_lang().clone()];
    languages.extend(corpora.iter().map(|c| c.other_lang.clone()));
    let mut counts: Vec<PairCount> = corpora
        .iter()
        .map(|c| PairCount {
            a: c.pivot_lang.clone(),
            b: c.other_lang.clone(),
            count: c.len() as u64,
        })
        .collect();
    counts.extend(report.pairs.iter().map(|p| PairCount {
        a: p.left_lang.clone(),
        b: p.right_lang.clone(),
        count: p.accepted as u64,
    }));
    let matrix = stage("stats", None, stats_matrix(&languages, &counts))?;
    stage("stats", None, write_stats(out_dir, &matrix))?;
    report.stats = Some(matrix);
    report.timings_ms.insert("stats".into(), elapsed_ms(t));
    Ok(())
}

fn write_stats(out_dir: &Path, matrix: &CorpusStats) -> Result<()> {
    let json = out_dir.join("stats.json");
    fs::write(&json, matrix.to_json() + "\n").map_err(|e| Error::io(&json, e))?;
    let txt = out_dir.join("stats.txt");
    fs::write(&txt, matrix.render_table()).map_err(|e| Error::io(&txt, e))
}

/// Paths of the deterministic artifacts under `out_dir`, sorted.
pub fn artifact_paths(out_dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.file_name().is_some_and(|n| n != "report.json") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(out_dir, &mut out)?;
    out.sort();
    Ok(out)
}
