mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn eag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eag"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, world: &World, extra: &str) -> String {
    let mut body = format!("manifest = {:?}\nseed = 3\n{extra}[generator]\nkind = \"edit-replay\"\n", world.manifest);
    body += "[generator.lexicons]\n";
    for (lang, path) in &world.lexicons {
        body += &format!("{lang} = {path:?}\n");
    }
    let p = dir.join("eag.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eag(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&eag(dir.path(), &["run", "--gamma", "lots"])), 1);
    assert_eq!(code(&eag(dir.path(), &["--gamma", "1.5", "run"])), 1);
    // no manifest anywhere
    assert_eq!(code(&eag(dir.path(), &["run"])), 1);
    assert_eq!(code(&eag(dir.path(), &["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.en"), "one\ntwo\n").unwrap();
    std::fs::write(dir.path().join("a.de"), "eins\n").unwrap();
    std::fs::write(dir.path().join("b.en"), "one\n").unwrap();
    std::fs::write(dir.path().join("b.fr"), "un\n").unwrap();
    std::fs::write(
        dir.path().join("m.json"),
        r#"[{"pivot_path":"a.en","other_path":"a.de","pivot_lang":"en","other_lang":"de"},
            {"pivot_path":"b.en","other_path":"b.fr","pivot_lang":"en","other_lang":"fr"}]"#,
    )
    .unwrap();
    let o = eag(dir.path(), &["--manifest", "m.json", "extract", "--left", "de", "--right", "fr", "--stats-only"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("a.en") && err.contains("a.de"), "{err}");
}

#[test]
fn transport_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let world = build_world(dir.path(), 10, 31);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let cfg = dir.path().join("eag.toml");
    std::fs::write(
        &cfg,
        format!(
            "manifest = {:?}\n[transport]\nmax_retries = 0\n[generator]\nkind = \"http\"\nurl = {url:?}\n",
            world.manifest
        ),
    )
    .unwrap();
    let o = eag(dir.path(), &["--config", cfg.to_str().unwrap(), "run", "-o", "out"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.contains("\"status\": \"failed\""));
}

#[test]
fn run_is_reproducible_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let world = build_world(dir.path(), 80, 32);
    let cfg = write_config(dir.path(), &world, "gamma = 0.0\n");
    // the config's gamma of 0 would only join identical pivots
    let o = eag(dir.path(), &["--config", &cfg, "--gamma", "0.3", "--jobs", "2", "--sorted-output", "run", "-o", "a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("de-fr: 80 candidates, 80 accepted"));
    let o = eag(dir.path(), &["--config", &cfg, "--gamma", "0.3", "--jobs", "1", "run", "-o", "b"]);
    assert_eq!(code(&o), 0);
    for f in ["multiway/de-fr.jsonl", "multiway/de-fr.fr", "train/en-de.src", "candidates/de-fr.jsonl", "stats.txt"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let o = eag(dir.path(), &["--config", &cfg, "run", "-o", "c"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("de-fr: 20 candidates"), "{}", stdout(&o));
}

#[test]
fn stepwise_commands() {
    let dir = tempfile::tempdir().unwrap();
    let world = build_world(dir.path(), 40, 33);
    let cfg = write_config(dir.path(), &world, "");
    let run = |args: &[&str]| {
        let mut full = vec!["--config", cfg.as_str()];
        full.extend_from_slice(args);
        let o = eag(dir.path(), &full);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };

    let stats = run(&["extract", "--left", "de", "--right", "fr", "--stats-only"]);
    let stats: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(stats["candidates"], 40);
    assert!(!dir.path().join("c.jsonl").exists());

    run(&["extract", "--left", "de", "--right", "fr", "-o", "c.jsonl"]);
    run(&["generate", "--candidates", "c.jsonl", "--left-lang", "de", "--right-lang", "fr", "-o", "h.jsonl"]);
    let tally = run(&[
        "assemble",
        "--candidates",
        "c.jsonl",
        "--hypotheses",
        "h.jsonl",
        "--left-lang",
        "de",
        "--right-lang",
        "fr",
        "-o",
        "mw.jsonl",
        "--rejected",
        "rej.jsonl",
    ]);
    let tally: serde_json::Value = serde_json::from_str(&tally).unwrap();
    assert_eq!(tally["accepted"], 40);
    let records: Vec<serde_json::Value> = std::fs::read_to_string(dir.path().join("mw.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for (r, (pivot, de, fr)) in records.iter().zip(&world.expected) {
        assert_eq!((&r["pivot"], &r["left"], &r["right"]), (&pivot.as_str().into(), &de.as_str().into(), &fr.as_str().into()));
    }

    let table = run(&["stats", "mw.jsonl"]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[2].split_whitespace().eq(["de", "40", "-", "40"]), "{table}");

    run(&["--beta", "0.3", "train-data", "-o", "td"]);
    let src = std::fs::read_to_string(dir.path().join("td/train/en-fr.src")).unwrap();
    assert_eq!(src.lines().count(), 40);
    assert!(src.lines().all(|l| l.split(' ').filter(|w| *w == "<sep>").count() == 1));

    std::fs::write(dir.path().join("plain.txt"), "a b c d\ne f g h\n").unwrap();
    let counts = run(&["--beta", "0", "noise", "-i", "plain.txt", "-o", "noised.txt"]);
    assert!(counts.contains("\"positions\":8"));
    assert_eq!(std::fs::read_to_string(dir.path().join("noised.txt")).unwrap(), "a b c d\ne f g h\n");

    let sweep = run(&["sweep", "--left", "de", "--right", "fr", "--gammas", "0,0.2,0.4", "--betas", "0.1,0.5"]);
    let sweep: serde_json::Value = serde_json::from_str(&sweep).unwrap();
    let counts: Vec<u64> = sweep["gamma"].as_array().unwrap().iter().map(|p| p["candidates"].as_u64().unwrap()).collect();
    assert_eq!(counts.len(), 3);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(counts[0], 10);
    assert_eq!(sweep["beta"].as_array().unwrap().len(), 2);

    let mix = run(&[
        "mix",
        "--input",
        "en-de,de,a.en,a.de",
        "--input",
        "en-fr,fr,b.en,b.fr",
        "--total",
        "50",
        "--source-out",
        "mix.src",
        "--target-out",
        "mix.tgt",
    ]);
    assert!(mix.contains("\"lines\":50"));
    let src = std::fs::read_to_string(dir.path().join("mix.src")).unwrap();
    assert!(src.lines().all(|l| l.starts_with("<2de> ") || l.starts_with("<2fr> ")));
}
