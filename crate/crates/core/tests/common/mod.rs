#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use eag_core::corpus::{BitextCorpus, LanguageTag, NormConfig};
use eag_core::generation::{GenerationRequest, GenerationResponse};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn tag(s: &str) -> LanguageTag {
    LanguageTag::new(s).unwrap()
}

pub fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

pub fn sentence<R: Rng>(rng: &mut R, vocab: &[String], lo: usize, hi: usize) -> Vec<String> {
    let len = rng.gen_range(lo..=hi);
    (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect()
}

/// `k` random single-token edits.
pub fn mutate<R: Rng>(rng: &mut R, tokens: &[String], vocab: &[String], k: usize) -> Vec<String> {
    let mut out = tokens.to_vec();
    for _ in 0..k {
        let word = vocab[rng.gen_range(0..vocab.len())].clone();
        match rng.gen_range(0..3) {
            _ if out.is_empty() => out.push(word),
            0 => {
                let p = rng.gen_range(0..=out.len());
                out.insert(p, word);
            }
            1 if out.len() > 1 => {
                let p = rng.gen_range(0..out.len());
                out.remove(p);
            }
            _ => {
                let p = rng.gen_range(0..out.len());
                out[p] = word;
            }
        }
    }
    out
}

pub fn corpus(other: &str, rows: Vec<(String, String)>) -> BitextCorpus {
    BitextCorpus::from_raw_pairs(format!("en-{other}"), tag("en"), tag(other), rows, NormConfig::default())
}

/// Textbook full-matrix Levenshtein distance.
pub fn dp_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// What the scripted server does with one request.
pub struct Reply {
    pub status: u16,
    pub delay: Duration,
    pub responses: Vec<GenerationResponse>,
}

pub fn echo(batch: &[GenerationRequest]) -> Vec<GenerationResponse> {
    batch
        .iter()
        .map(|r| GenerationResponse {
            id: r.id,
            hypothesis: r.source.clone(),
        })
        .collect()
}

pub fn shuffled<R: Rng>(rng: &mut R, mut v: Vec<GenerationResponse>) -> Vec<GenerationResponse> {
    v.shuffle(rng);
    v
}

/// NDJSON-over-HTTP generator double. The script sees the zero-based
/// request number and the decoded batch.
pub struct ScriptedServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
}

impl ScriptedServer {
    pub fn start<F>(script: F) -> Self
    where
        F: Fn(usize, Vec<GenerationRequest>) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let script = Arc::new(script);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (counter, script) = (counter.clone(), script.clone());
                std::thread::spawn(move || serve(stream, &counter, &*script));
            }
        });
        ScriptedServer { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, script: &dyn Fn(usize, Vec<GenerationRequest>) -> Reply) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = None;
    let mut chunked = false;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            content_length = v.trim().parse::<usize>().ok();
        }
        if lower.starts_with("transfer-encoding:") && lower.contains("chunked") {
            chunked = true;
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            reader.read_line(&mut size).unwrap();
            let n = usize::from_str_radix(size.trim(), 16).unwrap();
            let mut chunk = vec![0; n + 2];
            reader.read_exact(&mut chunk).unwrap();
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(content_length.unwrap_or(0), 0);
        reader.read_exact(&mut body).unwrap();
    }
    let batch: Vec<GenerationRequest> = String::from_utf8(body)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let n = hits.fetch_add(1, Ordering::SeqCst);
    let reply = script(n, batch);
    std::thread::sleep(reply.delay);
    let mut payload = String::new();
    if reply.status == 200 {
        for r in &reply.responses {
            payload.push_str(&serde_json::to_string(r).unwrap());
            payload.push('\n');
        }
    }
    let reason = if reply.status == 200 { "OK" } else { "Service Unavailable" };
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/x-ndjson\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        reply.status,
        payload.len()
    );
    let _ = out.flush();
}

/// Three-language world: a pivot language and two languages that translate
/// it word for word through bijective lexicons. The second bitext's pivot
/// sentences differ from the first's by at most one word.
pub struct World {
    pub manifest: std::path::PathBuf,
    /// Lexicon TSV per non-pivot language.
    pub lexicons: std::collections::BTreeMap<String, std::path::PathBuf>,
    /// (pivot, left translation, right translation) per sentence, in order.
    pub expected: Vec<(String, String, String)>,
}

pub fn build_world(dir: &std::path::Path, sentences: usize, seed: u64) -> World {
    use rand::SeedableRng;
    use std::collections::{BTreeMap, HashSet};
    use std::fs;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pivot: Vec<String> = words(50);
    let lexicon = |rng: &mut rand_chacha::ChaCha8Rng, prefix: &str| -> BTreeMap<String, String> {
        let mut ids: Vec<usize> = (0..pivot.len()).collect();
        ids.shuffle(rng);
        pivot.iter().cloned().zip(ids.into_iter().map(|i| format!("{prefix}{i}"))).collect()
    };
    let de = lexicon(&mut rng, "d");
    let fr = lexicon(&mut rng, "f");
    let translate = |lex: &BTreeMap<String, String>, s: &[String]| -> String {
        s.iter().map(|w| lex[w].as_str()).collect::<Vec<_>>().join(" ")
    };

    let mut seen = HashSet::new();
    let mut base = Vec::with_capacity(sentences);
    while base.len() < sentences {
        let s = sentence(&mut rng, &pivot, 6, 12);
        if seen.insert(s.clone()) {
            base.push(s);
        }
    }

    let mut left = (String::new(), String::new());
    let mut right = (String::new(), String::new());
    let mut expected = Vec::with_capacity(sentences);
    for (i, s) in base.iter().enumerate() {
        let mut variant = s.clone();
        let word = pivot[rng.gen_range(0..pivot.len())].clone();
        match i % 4 {
            0 => {}
            1 => {
                let p = rng.gen_range(0..variant.len());
                let mut w = word;
                while w == variant[p] {
                    w = pivot[rng.gen_range(0..pivot.len())].clone();
                }
                variant[p] = w;
            }
            2 => {
                let p = rng.gen_range(0..=variant.len());
                variant.insert(p, word);
            }
            _ => {
                let p = rng.gen_range(0..variant.len());
                variant.remove(p);
            }
        }
        left.0 += &(s.join(" ") + "\n");
        left.1 += &(translate(&de, s) + "\n");
        right.0 += &(variant.join(" ") + "\n");
        right.1 += &(translate(&fr, &variant) + "\n");
        expected.push((s.join(" "), translate(&de, s), translate(&fr, s)));
    }

    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    };
    write("a.en", &left.0);
    write("a.de", &left.1);
    write("b.en", &right.0);
    write("b.fr", &right.1);
    let lex_file = |lex: &BTreeMap<String, String>| lex.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect::<String>();
    let mut lexicons = BTreeMap::new();
    lexicons.insert("de".to_owned(), write("lex.de.tsv", &lex_file(&de)));
    lexicons.insert("fr".to_owned(), write("lex.fr.tsv", &lex_file(&fr)));
    let manifest = write(
        "manifest.json",
        r#"[{"pivot_path":"a.en","other_path":"a.de","pivot_lang":"en","other_lang":"de"},
            {"pivot_path":"b.en","other_path":"b.fr","pivot_lang":"en","other_lang":"fr"}]"#,
    );
    World {
        manifest,
        lexicons,
        expected,
    }
}
