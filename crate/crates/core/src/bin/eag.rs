use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use eag_core::corpus::{normalize, BitextCorpus, LanguageTag, Vocabulary};
use eag_core::generation::{
    assemble_multiway, run_generation, AssemblyContext, GenerationResponse, GenerationTally, Outcome,
};
use eag_core::noising::{emit_training_set, noise_with_counts, pair_rng, NoiseCounts, TrainingOutput};
use eag_core::pipeline::mixture::{write_mixture, MixInput};
use eag_core::pipeline::{
    build_generator, run_pipeline, stats_matrix, sweep, Manifest, Overrides, PairCount, PipelineConfig,
    SweepConfig,
};
use eag_core::simjoin::{join, materialize, CandidateAlignedExample, CandidateRecord};
use eag_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "eag", version, about = "Build multi-way aligned corpora from pivot-centric bitext")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Similarity threshold for the pivot join.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Per-token noise probability.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Mixture sampling temperature.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Accepted for compatibility; outputs are always sorted.
    #[arg(long, global = true)]
    sorted_output: bool,
    /// Manifest of bitexts (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Join two bitexts on their pivot side and write candidate examples.
    Extract {
        #[arg(long)]
        left: LanguageTag,
        #[arg(long)]
        right: LanguageTag,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print join statistics only.
        #[arg(long)]
        stats_only: bool,
    },
    /// Noise each line of a file.
    Noise {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Vocabulary TSV; defaults to the input's own tokens.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Write generator training data for every manifest corpus.
    TrainData {
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
        /// Restrict to these non-pivot languages.
        #[arg(long)]
        lang: Vec<LanguageTag>,
    },
    /// Generate right-side hypotheses for a candidate file.
    Generate {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        left_lang: LanguageTag,
        #[arg(long)]
        right_lang: LanguageTag,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Combine candidates with hypotheses into multi-way examples.
    Assemble {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        hypotheses: PathBuf,
        #[arg(long)]
        left_lang: LanguageTag,
        #[arg(long)]
        right_lang: LanguageTag,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        rejected: Option<PathBuf>,
    },
    /// Sample a language-tagged training mixture.
    Mix {
        /// `name,target_lang,source_file,target_file`; repeatable.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        total: u64,
        #[arg(long)]
        source_out: PathBuf,
        #[arg(long)]
        target_out: PathBuf,
    },
    /// Language-by-language example counts.
    Stats {
        /// Multi-way JSONL files to count alongside the manifest bitexts.
        multiway: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Extraction and noise statistics over parameter grids.
    Sweep {
        #[arg(long)]
        left: LanguageTag,
        #[arg(long)]
        right: LanguageTag,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
        /// Comma-separated noise rates.
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long)]
        no_noise: bool,
    },
    /// Run the full pipeline.
    Run {
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
        /// Continue generation from existing checkpoints.
        #[arg(long)]
        resume: bool,
    },
}

fn load_config(g: &Global, output_dir: Option<PathBuf>) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        gamma: g.gamma,
        beta: g.beta,
        temperature: g.temperature,
        seed: g.seed,
        jobs: g.jobs,
        manifest: g.manifest.clone(),
        output_dir,
    });
    cfg.validate()?;
    if cfg.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    Ok(cfg)
}

fn manifest(cfg: &PipelineConfig) -> Result<Manifest> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no manifest given (use --manifest or the config file)".into()))?;
    Manifest::load(path)
}

fn corpus_for(cfg: &PipelineConfig, m: &Manifest, lang: &LanguageTag) -> Result<BitextCorpus> {
    let entry = m
        .entries
        .iter()
        .find(|e| &e.other_lang == lang)
        .ok_or_else(|| Error::Config(format!("language {lang} is not in the manifest")))?;
    eag_core::corpus::load_bitext(
        &entry.pivot_path,
        &entry.other_path,
        entry.pivot_lang.clone(),
        entry.other_lang.clone(),
        cfg.norm,
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_line(w: &mut impl Write, line: &str, path: &Path) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("values serialize")
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn read_candidates(path: &Path, cfg: &PipelineConfig) -> Result<Vec<CandidateAlignedExample>> {
    let records: Vec<CandidateRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .map(|r| CandidateAlignedExample::from_record(r, cfg.norm))
        .collect())
}

fn print_tally(tally: &GenerationTally) {
    println!("{}", to_json(tally));
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Extract {
            left,
            right,
            output,
            stats_only,
        } => {
            let cfg = load_config(g, None)?;
            let m = manifest(&cfg)?;
            let (l, r) = (corpus_for(&cfg, &m, &left)?, corpus_for(&cfg, &m, &right)?);
            let out = join(&l, &r, &cfg.join_config())?;
            if !stats_only {
                let path = output.ok_or_else(|| Error::Config("extract needs --output unless --stats-only".into()))?;
                let mut w = create(&path)?;
                for c in materialize(&l, &r, &out.matches) {
                    write_line(&mut w, &to_json(&c.to_record()), &path)?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
            println!("{}", to_json(&out.stats));
        }
        Command::Noise { input, output, vocab } => {
            let cfg = load_config(g, None)?;
            let noise = cfg.noise_config();
            noise.validate()?;
            let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let sentences: Vec<_> = text.lines().map(|l| normalize(l, cfg.norm)).collect();
            let vocab = match vocab {
                Some(p) => Vocabulary::read_tsv(&p)?,
                None => {
                    let mut counts = BTreeMap::new();
                    for t in sentences.iter().flat_map(|s| &s.tokens) {
                        *counts.entry(t.clone()).or_insert(0u64) += 1;
                    }
                    Vocabulary::from_counts(counts, input.display().to_string())?
                }
            };
            let stream = input.display().to_string();
            let mut total = NoiseCounts::default();
            let mut w = create(&output)?;
            for (i, s) in sentences.iter().enumerate() {
                let mut rng = pair_rng(noise.seed, &stream, i);
                let (tokens, counts) = noise_with_counts(&s.tokens, &noise, &vocab, &mut rng)?;
                total.add(&counts);
                write_line(&mut w, &tokens.join(" "), &output)?;
            }
            w.flush().map_err(|e| Error::io(&output, e))?;
            println!("{}", to_json(&total));
        }
        Command::TrainData { output_dir, lang } => {
            let cfg = load_config(g, output_dir)?;
            let m = manifest(&cfg)?;
            let noise = cfg.noise_config();
            for e in m.entries.iter().filter(|e| lang.is_empty() || lang.contains(&e.other_lang)) {
                let corpus = corpus_for(&cfg, &m, &e.other_lang)?;
                let dir = cfg.output_dir.join("train");
                let out = TrainingOutput::Parallel {
                    source: dir.join(format!("{}.src", corpus.corpus_id)),
                    target: dir.join(format!("{}.tgt", corpus.corpus_id)),
                };
                let summary = emit_training_set(&corpus, &noise, &out)?;
                info!("{}: {} examples", corpus.corpus_id, summary.pairs);
                println!("{}", to_json(&summary));
            }
        }
        Command::Generate {
            candidates,
            left_lang,
            right_lang,
            output,
        } => {
            let cfg = load_config(g, None)?;
            let cands = read_candidates(&candidates, &cfg)?;
            let (generator, generator_id) = build_generator(&cfg, &right_lang)?;
            let ctx = AssemblyContext {
                left_lang,
                right_lang,
                generator_id,
            };
            let mut w = create(&output)?;
            let tally = run_generation(&cands, &generator, &cfg.filter, &ctx, 0, |i, o: &Outcome| {
                let hypothesis = match o {
                    Ok(ex) => ex.right.raw.clone(),
                    Err(r) => r.hypothesis.clone(),
                };
                let resp = GenerationResponse { id: i as u64, hypothesis };
                write_line(&mut w, &to_json(&resp), &output)
            })?;
            w.flush().map_err(|e| Error::io(&output, e))?;
            print_tally(&tally);
        }
        Command::Assemble {
            candidates,
            hypotheses,
            left_lang,
            right_lang,
            output,
            rejected,
        } => {
            let cfg = load_config(g, None)?;
            let cands = read_candidates(&candidates, &cfg)?;
            let hyps: Vec<GenerationResponse> = read_jsonl(&hypotheses)?;
            let mut by_id = BTreeMap::new();
            for h in hyps {
                let id = h.id;
                if by_id.insert(id, h.hypothesis).is_some() {
                    return Err(Error::Data(format!("hypothesis id {id} appears twice")));
                }
            }
            let ctx = AssemblyContext {
                left_lang,
                right_lang,
                generator_id: hypotheses.display().to_string(),
            };
            let mut w = create(&output)?;
            let mut rw = rejected.as_deref().map(create).transpose()?;
            let mut tally = GenerationTally::default();
            for (i, cand) in cands.iter().enumerate() {
                let hyp = by_id
                    .get(&(i as u64))
                    .ok_or_else(|| Error::Data(format!("no hypothesis for candidate {i}")))?;
                tally.candidates += 1;
                match assemble_multiway(cand, &normalize(hyp, cfg.norm), &cfg.filter, &ctx) {
                    Ok(ex) => {
                        tally.accepted += 1;
                        write_line(&mut w, &to_json(&ex.to_record()), &output)?;
                    }
                    Err(rej) => {
                        *tally.rejected.entry(rej.reason).or_insert(0) += 1;
                        if let (Some(rw), Some(p)) = (rw.as_mut(), rejected.as_deref()) {
                            write_line(rw, &to_json(&rej), p)?;
                        }
                    }
                }
            }
            w.flush().map_err(|e| Error::io(&output, e))?;
            if let (Some(mut rw), Some(p)) = (rw, rejected.as_deref()) {
                rw.flush().map_err(|e| Error::io(p, e))?;
            }
            print_tally(&tally);
        }
        Command::Mix {
            inputs,
            total,
            source_out,
            target_out,
        } => {
            let cfg = load_config(g, None)?;
            let parsed = inputs
                .iter()
                .map(|item| {
                    let f: Vec<&str> = item.split(',').collect();
                    match f.as_slice() {
                        [name, lang, src, tgt] => Ok(MixInput {
                            name: name.to_string(),
                            target_lang: lang.parse()?,
                            source_path: PathBuf::from(src),
                            target_path: PathBuf::from(tgt),
                        }),
                        _ => Err(Error::Config(format!(
                            "--input expects name,target_lang,source_file,target_file, got {item:?}"
                        ))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let summary = write_mixture(&parsed, cfg.temperature, total, cfg.seed, &source_out, &target_out)?;
            println!("{}", to_json(&summary));
        }
        Command::Stats { multiway, json } => {
            let cfg = load_config(g, None)?;
            let m = manifest(&cfg)?;
            let corpora = m.load_corpora(cfg.norm)?;
            let mut languages = vec![m.pivot_lang().clone()];
            languages.extend(m.entries.iter().map(|e| e.other_lang.clone()));
            let mut counts: Vec<PairCount> = corpora
                .iter()
                .map(|c| PairCount {
                    a: c.pivot_lang.clone(),
                    b: c.other_lang.clone(),
                    count: c.len() as u64,
                })
                .collect();
            for path in &multiway {
                let records: Vec<eag_core::generation::MultiWayRecord> = read_jsonl(path)?;
                let mut per_pair: BTreeMap<(LanguageTag, LanguageTag), u64> = BTreeMap::new();
                for r in records {
                    *per_pair.entry((r.left_lang, r.right_lang)).or_insert(0) += 1;
                }
                counts.extend(per_pair.into_iter().map(|((a, b), count)| PairCount { a, b, count }));
            }
            let matrix = stats_matrix(&languages, &counts)?;
            if json {
                println!("{}", matrix.to_json());
            } else {
                print!("{}", matrix.render_table());
            }
        }
        Command::Sweep {
            left,
            right,
            gammas,
            betas,
            no_noise,
        } => {
            let cfg = load_config(g, None)?;
            let m = manifest(&cfg)?;
            let (l, r) = (corpus_for(&cfg, &m, &left)?, corpus_for(&cfg, &m, &right)?);
            let defaults = SweepConfig::default();
            let sweep_cfg = SweepConfig {
                gammas: if gammas.is_empty() { defaults.gammas } else { gammas },
                betas: if no_noise {
                    Vec::new()
                } else if betas.is_empty() {
                    defaults.betas
                } else {
                    betas
                },
                join: cfg.join_config(),
                noise: cfg.noise_config(),
            };
            let report = sweep(&l, &r, &sweep_cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Run { output_dir, resume } => {
            let mut cfg = load_config(g, output_dir)?;
            cfg.resume |= resume;
            let report = run_pipeline(&cfg)?;
            for p in &report.pairs {
                println!(
                    "{}: {} candidates, {} accepted, {} rejected",
                    p.name,
                    p.candidates,
                    p.accepted,
                    p.rejected.values().sum::<usize>()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
