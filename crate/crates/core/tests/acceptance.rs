//! Acceptance checks. Runs as a plain binary so every check prints one
//! PASS/FAIL line; exits non-zero if any check fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use eag_core::corpus::{build_vocabulary, Side, SEP};
use eag_core::generation::{compute_edit_script, remote_generate, GenerationRequest, HttpTransport, TransportConfig};
use eag_core::noising::{emit_training_set, training_examples, NoiseConfig, TrainingOutput};
use eag_core::pipeline::mixture::{temperature_probabilities, temperature_sample};
use eag_core::pipeline::{artifact_paths, run_pipeline, GeneratorKind, PipelineConfig};
use eag_core::simjoin::{brute_force_candidates, join, JoinConfig};
use eag_core::Error;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn match_set(ms: &[eag_core::simjoin::CandidateMatch]) -> BTreeSet<(usize, usize, usize)> {
    ms.iter().map(|m| (m.left_index, m.right_index, m.distance)).collect()
}

/// Left corpus of random sentences; the right corpus mixes random sentences
/// with lightly edited copies of left ones.
fn planted_pair(rng: &mut ChaCha8Rng, n_left: usize, n_right: usize, vocab: &[String]) -> (
    eag_core::corpus::BitextCorpus,
    eag_core::corpus::BitextCorpus,
) {
    let lefts: Vec<Vec<String>> = (0..n_left).map(|_| sentence(rng, vocab, 3, 30)).collect();
    let mut left_rows: Vec<(String, String)> =
        lefts.iter().enumerate().map(|(i, s)| (s.join(" "), format!("l{i}"))).collect();
    // a few exact duplicate pairs exercise deduplication
    for k in 0..n_left / 100 {
        let row = left_rows[k * 7 % n_left].clone();
        left_rows.push(row);
    }
    let right_rows = (0..n_right)
        .map(|j| {
            let s = if rng.gen_bool(0.4) {
                let src = &lefts[rng.gen_range(0..n_left)];
                let k = rng.gen_range(0..=5);
                mutate(rng, src, vocab, k)
            } else {
                sentence(rng, vocab, 3, 30)
            };
            (s.join(" "), format!("r{j}"))
        })
        .collect();
    (corpus("de", left_rows), corpus("fr", right_rows))
}

fn join_matches_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vocab = words(500);
    let mut total = 0;
    for round in 0..50 {
        let n_left = if round % 10 == 0 { 2000 } else { rng.gen_range(50..=2000) };
        let n_right = if round % 10 == 0 { 2000 } else { rng.gen_range(50..=2000) };
        let (left, right) = planted_pair(&mut rng, n_left, n_right, &vocab);
        for gamma in [0.1, 0.3, 0.5] {
            let cfg = JoinConfig::with_gamma(gamma);
            let fast = join(&left, &right, &cfg).map_err(|e| e.to_string())?;
            let slow = brute_force_candidates(&left, &right, &cfg, usize::MAX).map_err(|e| e.to_string())?;
            let (a, b) = (match_set(&fast.matches), match_set(&slow));
            ensure(a == b, || {
                format!(
                    "round {round} gamma {gamma}: indexed {} vs brute force {}; first difference {:?}",
                    a.len(),
                    b.len(),
                    a.symmetric_difference(&b).next()
                )
            })?;
            total += a.len();
        }
    }
    Ok(format!("50 corpus pairs x 3 thresholds, {total} matches identical"))
}

fn unique_sentences(rng: &mut ChaCha8Rng, vocab: &[String], n: usize, seen: &mut HashSet<Vec<String>>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = sentence(rng, vocab, 3, 30);
        if seen.insert(s.clone()) {
            out.push(s.join(" "));
        }
    }
    out
}

fn exact_join_at_zero() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab = words(500);
    let mut seen = HashSet::new();
    let lefts = unique_sentences(&mut rng, &vocab, 10_000, &mut seen);
    let mut rights = unique_sentences(&mut rng, &vocab, 10_000, &mut seen);
    let mut planted = BTreeSet::new();
    let mut used_left = HashSet::new();
    let mut used_right = HashSet::new();
    while planted.len() < 100 {
        let (i, j) = (rng.gen_range(0..10_000), rng.gen_range(0..10_000));
        if used_left.insert(i) && used_right.insert(j) {
            rights[j] = lefts[i].clone();
            planted.insert((i, j, 0));
        } else {
            used_left.remove(&i);
        }
    }
    let left = corpus("de", lefts.iter().enumerate().map(|(i, s)| (s.clone(), format!("l{i}"))).collect());
    let right = corpus("fr", rights.iter().enumerate().map(|(j, s)| (s.clone(), format!("r{j}"))).collect());
    let out = join(&left, &right, &JoinConfig::with_gamma(0.0)).map_err(|e| e.to_string())?;
    let got = match_set(&out.matches);
    ensure(got == planted, || format!("expected the 100 planted pairs, got {}", got.len()))?;
    Ok("100 of 100 planted duplicates, nothing else".into())
}

fn nested_across_thresholds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (left, right) = planted_pair(&mut rng, 2000, 2000, &words(500));
    let mut prev: Option<BTreeSet<(usize, usize)>> = None;
    let mut sizes = Vec::new();
    for gamma in [0.0, 0.2, 0.4, 0.6] {
        let out = join(&left, &right, &JoinConfig::with_gamma(gamma)).map_err(|e| e.to_string())?;
        let set: BTreeSet<(usize, usize)> = out.matches.iter().map(|m| (m.left_index, m.right_index)).collect();
        if let Some(p) = &prev {
            ensure(p.is_subset(&set), || format!("set at {gamma} misses earlier matches"))?;
        }
        sizes.push(set.len());
        prev = Some(set);
    }
    ensure(sizes.windows(2).any(|w| w[0] < w[1]), || "sets never grow".into())?;
    Ok(format!("sizes {sizes:?}"))
}

fn noise_rates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab = words(500);
    let rows = (0..8000)
        .map(|i| (format!("p{i}"), sentence(&mut rng, &vocab, 3, 30).join(" ")))
        .collect();
    let c = corpus("de", rows);
    let v = build_vocabulary(&c, Side::Other).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for beta in [0.1, 0.5, 0.7] {
        let (_, counts) = training_examples(&c, &NoiseConfig::with_beta(beta, 11), &v).map_err(|e| e.to_string())?;
        ensure(counts.positions >= 100_000, || format!("only {} positions", counts.positions))?;
        let rate = counts.rate();
        ensure((rate - beta).abs() <= 0.02, || format!("beta {beta}: rate {rate:.4}"))?;
        let n = counts.noised() as f64;
        for (name, k) in [("insert", counts.inserts), ("remove", counts.removes), ("substitute", counts.substitutes)] {
            let share = k as f64 / n;
            ensure((share - 1.0 / 3.0).abs() <= 0.02, || format!("beta {beta}: {name} share {share:.4}"))?;
        }
        lines.push(format!("{beta}->{rate:.4}"));
    }
    Ok(format!("rates {}", lines.join(", ")))
}

fn training_layout() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab = words(200);
    let rows: Vec<(String, String)> = (0..10_000)
        .map(|_| (sentence(&mut rng, &vocab, 3, 20).join(" "), sentence(&mut rng, &vocab, 3, 20).join(" ")))
        .collect();
    let c = corpus("de", rows.clone());
    for beta in [0.5, 0.0] {
        let (src, tgt) = (dir.path().join(format!("{beta}.src")), dir.path().join(format!("{beta}.tgt")));
        let out = TrainingOutput::Parallel {
            source: src.clone(),
            target: tgt.clone(),
        };
        emit_training_set(&c, &NoiseConfig::with_beta(beta, 5), &out).map_err(|e| e.to_string())?;
        let s = std::fs::read_to_string(&src).map_err(|e| e.to_string())?;
        let t = std::fs::read_to_string(&tgt).map_err(|e| e.to_string())?;
        let (s, t): (Vec<&str>, Vec<&str>) = (s.lines().collect(), t.lines().collect());
        ensure(s.len() == rows.len() && t.len() == rows.len(), || "line counts differ".into())?;
        for (k, (x2, y2)) in rows.iter().enumerate() {
            let seps = s[k].split(' ').filter(|w| *w == SEP).count();
            ensure(seps == 1, || format!("beta {beta} line {k}: {seps} separators"))?;
            ensure(t[k] == y2, || format!("beta {beta} line {k}: target differs"))?;
            if beta == 0.0 {
                ensure(s[k] == format!("{x2} {SEP} {y2}"), || format!("line {k}: identity source differs"))?;
            }
        }
    }
    Ok("10000 examples at beta 0.5 and 0".into())
}

fn edit_script_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = words(8);
    for k in 0..10_000 {
        let a = sentence(&mut rng, &vocab, 0, 15);
        let b = if rng.gen_bool(0.5) {
            let e = rng.gen_range(0..6);
            mutate(&mut rng, &a, &vocab, e)
        } else {
            sentence(&mut rng, &vocab, 0, 15)
        };
        let script = compute_edit_script(&a, &b);
        let applied = script.apply(&a).map_err(|e| e.to_string())?;
        ensure(applied == b, || format!("pair {k}: apply does not reproduce target"))?;
        let d = dp_distance(&a, &b);
        ensure(script.edit_count() == d, || format!("pair {k}: {} edits, distance {d}", script.edit_count()))?;
    }
    Ok("10000 pairs".into())
}

fn fixture_config(world: &World, out: &std::path::Path, jobs: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        manifest: Some(world.manifest.clone()),
        output_dir: out.to_path_buf(),
        jobs,
        seed: 7,
        ..Default::default()
    };
    cfg.generator.kind = GeneratorKind::EditReplay;
    cfg.generator.lexicons = world.lexicons.clone();
    cfg
}

fn end_to_end_fixture() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let world = build_world(dir.path(), 500, 8);
    let out = dir.path().join("out");
    let report = run_pipeline(&fixture_config(&world, &out, 0)).map_err(|e| e.to_string())?;
    let pair = &report.pairs[0];
    ensure(pair.candidates == 500 && pair.accepted == 500, || {
        format!("{} candidates, {} accepted", pair.candidates, pair.accepted)
    })?;
    let read = |f: &str| std::fs::read_to_string(out.join(f)).unwrap_or_default();
    let lefts: Vec<String> = read(&pair.files.left_text).lines().map(str::to_owned).collect();
    let rights: Vec<String> = read(&pair.files.right_text).lines().map(str::to_owned).collect();
    let records: Vec<serde_json::Value> = read(&pair.files.multiway)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    ensure(records.len() == 500, || format!("{} multi-way records", records.len()))?;
    for (k, (pivot, de, fr)) in world.expected.iter().enumerate() {
        ensure(&lefts[k] == de && &rights[k] == fr && records[k]["pivot"] == *pivot, || {
            format!("sentence {k}: got ({}, {}), want ({de}, {fr})", lefts[k], rights[k])
        })?;
    }
    Ok("500 of 500 sentences exact".into())
}

fn temperature_ratio() -> Outcome {
    let counts: BTreeMap<String, u64> = [("cs-en".to_owned(), 47_000_000), ("de-en".to_owned(), 4_500_000)].into();
    let p = temperature_probabilities(&counts, 5.0);
    let ratio = p["cs-en"] / p["de-en"];
    let direct = (47.0f64 / 4.5).powf(0.2);
    ensure((ratio - direct).abs() <= 1e-9, || format!("ratio {ratio} vs {direct}"))?;
    let p1 = temperature_probabilities(&counts, 1.0);
    for (k, n) in &counts {
        let want = *n as f64 / 51_500_000.0;
        ensure(((p1[k] - want) / want).abs() <= 1e-12, || format!("{k}: {} vs {want}", p1[k]))?;
    }
    let plan = temperature_sample(&counts, 5.0, 1_000_000).map_err(|e| e.to_string())?;
    ensure(plan.counts.values().sum::<u64>() == 1_000_000, || "plan total differs".into())?;
    Ok(format!("ratio {ratio:.6}"))
}

fn strip_timings(path: &std::path::Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings_ms");
    v
}

fn deterministic_runs() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let world = build_world(dir.path(), 500, 9);
    let (a, b) = (dir.path().join("one"), dir.path().join("four"));
    run_pipeline(&fixture_config(&world, &a, 1)).map_err(|e| e.to_string())?;
    run_pipeline(&fixture_config(&world, &b, 4)).map_err(|e| e.to_string())?;
    let fa = artifact_paths(&a).map_err(|e| e.to_string())?;
    let fb = artifact_paths(&b).map_err(|e| e.to_string())?;
    let rel = |root: &std::path::Path, v: &[std::path::PathBuf]| -> Vec<std::path::PathBuf> {
        v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    ensure(rel(&a, &fa) == rel(&b, &fb), || "different file sets".into())?;
    for (x, y) in fa.iter().zip(&fb) {
        ensure(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), || format!("{} differs", x.display()))?;
    }
    ensure(strip_timings(&a.join("report.json")) == strip_timings(&b.join("report.json")), || {
        "report.json differs beyond timings".into()
    })?;
    Ok(format!("{} files identical across 1 and 4 workers", fa.len()))
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (left, right) = planted_pair(&mut rng, 100_000, 100_000, &words(500));
    let start = Instant::now();
    let out = join(&left, &right, &JoinConfig::with_gamma(0.3)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let rss = peak_rss_kib().unwrap_or(0);
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    ensure(rss < 8 * 1024 * 1024, || format!("peak resident {rss} KiB"))?;
    Ok(format!(
        "{} candidates in {:.1}s on {} threads, peak resident {} MiB",
        out.stats.candidates,
        elapsed.as_secs_f64(),
        rayon::current_num_threads(),
        rss / 1024
    ))
}

fn wire_protocol() -> Outcome {
    let requests: Vec<GenerationRequest> = (0..40)
        .map(|i| GenerationRequest {
            id: 1000 + i,
            source: format!("sentence {i} {SEP} satz {i}"),
        })
        .collect();
    let cfg = TransportConfig {
        batch_size: 8,
        window: 2,
        max_retries: 3,
        initial_backoff_ms: 10,
        max_backoff_ms: 50,
        timeout_ms: 5_000,
    };

    let server = ScriptedServer::start(|n, batch| {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        Reply {
            status: if n == 0 { 503 } else { 200 },
            delay: Duration::from_millis(rng.gen_range(0..40)),
            responses: shuffled(&mut rng, echo(&batch)),
        }
    });
    let transport = HttpTransport::new(server.url.clone(), &cfg);
    let got = remote_generate(&requests, &transport, &cfg).map_err(|e| e.to_string())?;
    let ids: Vec<u64> = got.iter().map(|r| r.id).collect();
    ensure(ids == requests.iter().map(|r| r.id).collect::<Vec<_>>(), || "order not restored".into())?;
    ensure(got.iter().zip(&requests).all(|(g, r)| g.hypothesis == r.source), || "payload mismatch".into())?;
    ensure(server.hits() == 6, || format!("expected 5 batches plus one retry, saw {}", server.hits()))?;

    let dropping = ScriptedServer::start(|_, batch| Reply {
        status: 200,
        delay: Duration::ZERO,
        responses: echo(&batch).into_iter().filter(|r| r.id != 7).collect(),
    });
    let ten: Vec<GenerationRequest> = (0..10)
        .map(|i| GenerationRequest {
            id: i,
            source: format!("s{i}"),
        })
        .collect();
    let cfg = TransportConfig { batch_size: 16, ..cfg };
    let transport = HttpTransport::new(dropping.url.clone(), &cfg);
    match remote_generate(&ten, &transport, &cfg) {
        Err(e @ Error::Protocol { id: 7, .. }) => {
            ensure(e.to_string().contains('7'), || format!("message does not name the id: {e}"))?;
            ensure(e.exit_code() == 3, || "wrong exit code".into())?;
        }
        other => return Err(format!("expected a protocol error for id 7, got {other:?}")),
    }
    ensure(dropping.hits() == 1, || format!("protocol error was retried ({} requests)", dropping.hits()))?;

    let down = ScriptedServer::start(|_, _| Reply {
        status: 503,
        delay: Duration::ZERO,
        responses: Vec::new(),
    });
    let transport = HttpTransport::new(down.url.clone(), &cfg);
    let err = remote_generate(&ten, &transport, &cfg).unwrap_err();
    ensure(matches!(err, Error::Transport(_)), || format!("expected transport error, got {err}"))?;
    ensure(down.hits() == 4, || format!("expected 1 + 3 retries, saw {}", down.hits()))?;
    Ok("order restored, one retry, dropped id 7 reported, retries bounded".into())
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("indexed join equals brute force", join_matches_brute_force),
        ("gamma 0 returns exactly the planted duplicates", exact_join_at_zero),
        ("candidate sets nest as gamma grows", nested_across_thresholds),
        ("noise rate and operation mix", noise_rates),
        ("training example layout", training_layout),
        ("edit script round trip", edit_script_round_trip),
        ("tri-lingual fixture reproduced end to end", end_to_end_fixture),
        ("temperature sampling probabilities", temperature_ratio),
        ("runs are byte-identical across worker counts", deterministic_runs),
        ("100k x 100k join time and memory", throughput),
        ("wire protocol ordering, retry and dropped id", wire_protocol),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
