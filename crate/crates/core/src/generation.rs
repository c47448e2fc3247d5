//! Final-example generation.
//!
//! For each candidate the generator sees `x1 <sep> y2` and produces a target
//! sentence aligned with `x1`. Two generators are provided: a client for an
//! out-of-process model speaking newline-delimited JSON, and a deterministic
//! edit-replay generator that transfers the pivot-side edit script onto `y2`
//! through a bilingual lexicon.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, LanguageTag, NormConfig, Sentence, SEP};
use crate::error::{Error, Result};
use crate::simjoin::CandidateAlignedExample;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditOp<T> {
    Keep(usize),
    Delete(usize),
    /// Insert before the given source position; `len` appends.
    Insert(usize, T),
    Substitute(usize, T),
}

impl<T> EditOp<T> {
    pub fn position(&self) -> usize {
        match self {
            EditOp::Keep(p) | EditOp::Delete(p) | EditOp::Insert(p, _) | EditOp::Substitute(p, _) => *p,
        }
    }

    pub fn is_edit(&self) -> bool {
        !matches!(self, EditOp::Keep(_))
    }
}

/// Operation sequence over the original positions of a source sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditScript<T> {
    pub ops: Vec<EditOp<T>>,
}

impl<T: Clone> EditScript<T> {
    pub fn edit_count(&self) -> usize {
        self.ops.iter().filter(|op| op.is_edit()).count()
    }

    pub fn edits(&self) -> impl Iterator<Item = &EditOp<T>> {
        self.ops.iter().filter(|op| op.is_edit())
    }

    /// Replays the script on `src`. Fails if the script does not walk the
    /// source positions in order exactly once.
    pub fn apply(&self, src: &[T]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(src.len());
        let mut next = 0usize;
        for op in &self.ops {
            let pos = op.position();
            if pos != next || (pos >= src.len() && !matches!(op, EditOp::Insert(..))) {
                return Err(Error::Data(format!(
                    "edit script out of step at source position {pos} (expected {next})"
                )));
            }
            match op {
                EditOp::Keep(_) => out.push(src[pos].clone()),
                EditOp::Delete(_) => {}
                EditOp::Insert(_, t) => {
                    out.push(t.clone());
                    continue;
                }
                EditOp::Substitute(_, t) => out.push(t.clone()),
            }
            next += 1;
        }
        if next != src.len() {
            return Err(Error::Data(format!(
                "edit script stops at position {next} of {}",
                src.len()
            )));
        }
        Ok(out)
    }
}

/// Minimal script turning `src` into `dst`. Backtrace ties prefer
/// keep, then substitute, then delete, then insert.
pub fn compute_edit_script<T: PartialEq + Clone>(src: &[T], dst: &[T]) -> EditScript<T> {
    let (n, m) = (src.len(), dst.len());
    let width = m + 1;
    let mut d = vec![0u32; (n + 1) * width];
    for j in 0..=m {
        d[j] = j as u32;
    }
    for i in 1..=n {
        d[i * width] = i as u32;
        for j in 1..=m {
            let sub = d[(i - 1) * width + j - 1] + u32::from(src[i - 1] != dst[j - 1]);
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * width + j - 1];
            if src[i - 1] == dst[j - 1] && here == diag {
                ops.push(EditOp::Keep(i - 1));
                i -= 1;
                j -= 1;
                continue;
            }
            if here == diag + 1 {
                ops.push(EditOp::Substitute(i - 1, dst[j - 1].clone()));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * width + j] + 1 {
            ops.push(EditOp::Delete(i - 1));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(i, dst[j - 1].clone()));
            j -= 1;
        }
    }
    ops.reverse();
    EditScript { ops }
}

/// Pivot-token to target-token dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, String>,
}

impl Lexicon {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Lexicon {
            entries: entries.into_iter().collect(),
        }
    }

    /// Reads `pivot<TAB>target` lines. Later entries override earlier ones.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (src, tgt) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected pivot<TAB>target".into(),
            })?;
            entries.insert(src.to_owned(), tgt.to_owned());
        }
        Ok(Lexicon { entries })
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.entries.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub sentence: Sentence,
    /// Edited pivot tokens missing from the lexicon, copied through as-is.
    pub copy_through: usize,
    /// Edits that landed on an already-edited target position and were dropped.
    pub unaligned: usize,
}

enum TargetAction {
    Delete,
    Substitute(String),
}

/// Transfers the `x2 -> x1` script onto `y2`.
///
/// The edit at pivot position `p` is applied at target position `p`,
/// clamped to the end of `y2`. Pivot tokens are compared case-folded when
/// `case_fold` is set, and lexicon lookups use the compared form.
pub fn edit_replay_generate(cand: &CandidateAlignedExample, lexicon: &Lexicon, case_fold: bool) -> Replay {
    let fold = |s: &Sentence| -> Vec<String> {
        if case_fold {
            s.tokens.iter().map(|t| t.to_lowercase()).collect()
        } else {
            s.tokens.clone()
        }
    };
    let script = compute_edit_script(&fold(&cand.x2), &fold(&cand.x1));
    let y2 = &cand.y2.tokens;
    let len = y2.len();

    let mut copy_through = 0;
    let mut unaligned = 0;
    let mut translate = |pivot: &str| match lexicon.get(pivot) {
        Some(t) => t.to_owned(),
        None => {
            copy_through += 1;
            pivot.to_owned()
        }
    };

    let mut inserts: Vec<Vec<String>> = vec![Vec::new(); len + 1];
    let mut actions: Vec<Option<TargetAction>> = (0..len).map(|_| None).collect();
    for op in script.edits() {
        match op {
            EditOp::Insert(p, t) => inserts[(*p).min(len)].push(translate(t)),
            EditOp::Substitute(p, t) => {
                let word = translate(t);
                if len == 0 {
                    inserts[0].push(word);
                } else {
                    let slot = &mut actions[(*p).min(len - 1)];
                    if slot.is_some() {
                        unaligned += 1;
                    } else {
                        *slot = Some(TargetAction::Substitute(word));
                    }
                }
            }
            EditOp::Delete(p) => {
                if len == 0 {
                    unaligned += 1;
                    continue;
                }
                let slot = &mut actions[(*p).min(len - 1)];
                if slot.is_some() {
                    unaligned += 1;
                } else {
                    *slot = Some(TargetAction::Delete);
                }
            }
            EditOp::Keep(_) => unreachable!("edits() skips keeps"),
        }
    }

    let mut out = Vec::with_capacity(len + 2);
    for (pos, token) in y2.iter().enumerate() {
        out.append(&mut inserts[pos]);
        match actions[pos].take() {
            None => out.push(token.clone()),
            Some(TargetAction::Delete) => {}
            Some(TargetAction::Substitute(word)) => out.push(word),
        }
    }
    out.append(&mut inserts[len]);
    Replay {
        sentence: Sentence::from_tokens(out, cand.y2.norm_id),
        copy_through,
        unaligned,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub id: u64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub id: u64,
    pub hypothesis: String,
}

/// Generator input for a candidate: `x1 <sep> y2`.
pub fn generator_source(cand: &CandidateAlignedExample) -> String {
    format!("{} {SEP} {}", cand.x1.text(), cand.y2.text())
}

/// Serializes values as newline-delimited JSON, one object per line.
pub fn encode_lines<T: Serialize>(items: &[T]) -> String {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item).expect("wire objects serialize"));
        body.push('\n');
    }
    body
}

pub fn decode_responses(body: &str) -> Result<Vec<GenerationResponse>> {
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Transport(format!("malformed response line {l:?}: {e}")))
        })
        .collect()
}

/// One batch exchange with a generator service.
///
/// Implementations report recoverable failures as [`Error::Transport`]; the
/// client retries those. Anything else is final.
pub trait Transport: Send + Sync {
    fn exchange(&self, batch: &[GenerationRequest]) -> Result<Vec<GenerationResponse>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    pub batch_size: usize,
    /// Batches in flight at once.
    pub window: usize,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            batch_size: 32,
            window: 1,
            max_retries: 3,
            initial_backoff_ms: 100,
            max_backoff_ms: 5_000,
            timeout_ms: 60_000,
        }
    }
}

impl TransportConfig {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// POSTs each batch as an NDJSON body and reads NDJSON back.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, cfg: &TransportConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        HttpTransport { agent, url: url.into() }
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, batch: &[GenerationRequest]) -> Result<Vec<GenerationResponse>> {
        let response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/x-ndjson")
            .send(encode_lines(batch))
            .map_err(|e| Error::Transport(format!("{}: {e}", self.url)))?;
        let body = response
            .into_body()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("{}: {e}", self.url)))?;
        decode_responses(&body)
    }
}

struct ChildSession {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for ChildSession {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Talks to a generator over a child process' stdin/stdout. The process is
/// respawned after a transport failure.
pub struct ChildProcessTransport {
    program: String,
    args: Vec<String>,
    timeout: Duration,
    session: Mutex<Option<ChildSession>>,
}

impl ChildProcessTransport {
    pub fn new(program: impl Into<String>, args: Vec<String>, cfg: &TransportConfig) -> Self {
        ChildProcessTransport {
            program: program.into(),
            args,
            timeout: Duration::from_millis(cfg.timeout_ms),
            session: Mutex::new(None),
        }
    }

    fn spawn(&self) -> Result<ChildSession> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start {}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ChildSession {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exchange_with(&self, session: &mut ChildSession, batch: &[GenerationRequest]) -> Result<Vec<GenerationResponse>> {
        session
            .stdin
            .write_all(encode_lines(batch).as_bytes())
            .and_then(|_| session.stdin.flush())
            .map_err(|e| Error::Transport(format!("{}: write failed: {e}", self.program)))?;
        let mut body = String::new();
        let mut received = 0;
        while received < batch.len() {
            match session.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    body.push_str(&line);
                    body.push('\n');
                    received += 1;
                }
                Ok(Err(e)) => return Err(Error::Transport(format!("{}: read failed: {e}", self.program))),
                // Silence past the deadline: hand back what arrived and let
                // id validation name the missing request.
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Transport(format!("{} closed its output", self.program)))
                }
            }
        }
        decode_responses(&body)
    }
}

impl Transport for ChildProcessTransport {
    fn exchange(&self, batch: &[GenerationRequest]) -> Result<Vec<GenerationResponse>> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let result = self.exchange_with(guard.as_mut().expect("session present"), batch);
        if matches!(result, Err(Error::Transport(_))) {
            *guard = None;
        }
        result
    }
}

/// Checks one response per request and returns them in request order.
fn reorder(batch: &[GenerationRequest], responses: Vec<GenerationResponse>) -> Result<Vec<GenerationResponse>> {
    let expected: HashSet<u64> = batch.iter().map(|r| r.id).collect();
    let mut by_id: HashMap<u64, GenerationResponse> = HashMap::with_capacity(responses.len());
    for response in responses {
        let id = response.id;
        if !expected.contains(&id) {
            return Err(Error::Protocol {
                id,
                message: "response for unknown request".into(),
            });
        }
        if by_id.insert(id, response).is_some() {
            return Err(Error::Protocol {
                id,
                message: "duplicate response".into(),
            });
        }
    }
    batch
        .iter()
        .map(|r| {
            by_id.remove(&r.id).ok_or_else(|| Error::Protocol {
                id: r.id,
                message: "missing response".into(),
            })
        })
        .collect()
}

fn exchange_with_retry(
    transport: &dyn Transport,
    batch: &[GenerationRequest],
    cfg: &TransportConfig,
) -> Result<Vec<GenerationResponse>> {
    let mut attempt = 0;
    loop {
        match transport.exchange(batch) {
            Ok(responses) => return reorder(batch, responses),
            Err(Error::Transport(msg)) if attempt < cfg.max_retries => {
                let wait = cfg.backoff(attempt);
                log::warn!("transport failure ({msg}); retry {} in {wait:?}", attempt + 1);
                std::thread::sleep(wait);
                attempt += 1;
            }
            Err(Error::Transport(msg)) => {
                return Err(Error::Transport(format!(
                    "giving up after {} attempts: {msg}",
                    attempt + 1
                )))
            }
            Err(other) => return Err(other),
        }
    }
}

/// Sends `requests` in batches and returns the responses in request order.
pub fn remote_generate(
    requests: &[GenerationRequest],
    transport: &dyn Transport,
    cfg: &TransportConfig,
) -> Result<Vec<GenerationResponse>> {
    if requests.is_empty() {
        return Err(Error::Config("remote_generate needs at least one request".into()));
    }
    if cfg.batch_size == 0 || cfg.window == 0 {
        return Err(Error::Config("batch_size and window must be positive".into()));
    }
    let mut seen = HashSet::with_capacity(requests.len());
    if let Some(dup) = requests.iter().find(|r| !seen.insert(r.id)) {
        return Err(Error::Config(format!("request id {} used twice", dup.id)));
    }

    let batches: Vec<&[GenerationRequest]> = requests.chunks(cfg.batch_size).collect();
    let mut out = Vec::with_capacity(requests.len());
    for round in batches.chunks(cfg.window) {
        let results: Vec<Result<Vec<GenerationResponse>>> = if round.len() == 1 {
            vec![exchange_with_retry(transport, round[0], cfg)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = round
                    .iter()
                    .map(|batch| s.spawn(move || exchange_with_retry(transport, batch, cfg)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("worker panicked".into()))))
                    .collect()
            })
        };
        for result in results {
            out.extend(result?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_ratio: 0.5,
            max_ratio: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectReason {
    Empty,
    Separator,
    Ratio,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Empty => "empty",
            RejectReason::Separator => "separator",
            RejectReason::Ratio => "ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub left_corpus: String,
    pub right_corpus: String,
    pub left_index: usize,
    pub right_index: usize,
    pub distance: usize,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiWayExample {
    pub pivot: Sentence,
    pub left: Sentence,
    pub right: Sentence,
    pub left_lang: LanguageTag,
    pub right_lang: LanguageTag,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiWayRecord {
    pub pivot: String,
    pub left: String,
    pub right: String,
    pub left_lang: LanguageTag,
    pub right_lang: LanguageTag,
    pub provenance: Provenance,
}

impl MultiWayExample {
    pub fn to_record(&self) -> MultiWayRecord {
        MultiWayRecord {
            pivot: self.pivot.raw.clone(),
            left: self.left.raw.clone(),
            right: self.right.raw.clone(),
            left_lang: self.left_lang.clone(),
            right_lang: self.right_lang.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub left_index: usize,
    pub right_index: usize,
    pub reason: RejectReason,
    pub hypothesis: String,
}

/// Languages and generator label shared by all candidates of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssemblyContext {
    pub left_lang: LanguageTag,
    pub right_lang: LanguageTag,
    pub generator_id: String,
}

pub fn assemble_multiway(
    cand: &CandidateAlignedExample,
    hypothesis: &Sentence,
    filters: &FilterConfig,
    ctx: &AssemblyContext,
) -> std::result::Result<MultiWayExample, Rejection> {
    let reject = |reason| Rejection {
        left_index: cand.left_index,
        right_index: cand.right_index,
        reason,
        hypothesis: hypothesis.raw.clone(),
    };
    if hypothesis.is_empty() {
        return Err(reject(RejectReason::Empty));
    }
    let has_sep = hypothesis.tokens.iter().any(|t| t == SEP)
        || hypothesis.raw.split_whitespace().any(|t| t == SEP);
    if has_sep {
        return Err(reject(RejectReason::Separator));
    }
    let ratio = hypothesis.len() as f64 / cand.y2.len().max(1) as f64;
    if ratio < filters.min_ratio || ratio > filters.max_ratio {
        return Err(reject(RejectReason::Ratio));
    }
    Ok(MultiWayExample {
        pivot: cand.x1.clone(),
        left: cand.y1.clone(),
        right: hypothesis.clone(),
        left_lang: ctx.left_lang.clone(),
        right_lang: ctx.right_lang.clone(),
        provenance: Provenance {
            left_corpus: cand.left_corpus_id.clone(),
            right_corpus: cand.right_corpus_id.clone(),
            left_index: cand.left_index,
            right_index: cand.right_index,
            distance: cand.distance,
            generator: ctx.generator_id.clone(),
        },
    })
}

pub struct EditReplay {
    pub lexicon: Lexicon,
    pub case_fold: bool,
}

pub enum Generator {
    EditReplay(EditReplay),
    Remote {
        transport: Box<dyn Transport>,
        config: TransportConfig,
    },
}

impl Generator {
    pub fn kind(&self) -> &'static str {
        match self {
            Generator::EditReplay(_) => "edit-replay",
            Generator::Remote { .. } => "remote",
        }
    }
}

pub type Outcome = std::result::Result<MultiWayExample, Rejection>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTally {
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub copy_through: usize,
    pub unaligned: usize,
}

impl GenerationTally {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    fn record(&mut self, outcome: &Outcome) {
        self.candidates += 1;
        match outcome {
            Ok(_) => self.accepted += 1,
            Err(r) => *self.rejected.entry(r.reason).or_insert(0) += 1,
        }
    }
}

/// Candidates handled per round; a round is the unit of checkpointing.
const EDIT_REPLAY_ROUND: usize = 4096;

/// Generates and assembles `candidates[resume_from..]` in order, handing
/// each outcome to `sink` with its candidate index.
///
/// On a generator failure the error is [`Error::Aborted`] carrying the
/// number of candidates fully handed to `sink`; pass it back as
/// `resume_from` to continue.
pub fn run_generation(
    candidates: &[CandidateAlignedExample],
    generator: &Generator,
    filters: &FilterConfig,
    ctx: &AssemblyContext,
    resume_from: usize,
    mut sink: impl FnMut(usize, &Outcome) -> Result<()>,
) -> Result<GenerationTally> {
    let mut tally = GenerationTally::default();
    let round = match generator {
        Generator::EditReplay(_) => EDIT_REPLAY_ROUND,
        Generator::Remote { config, .. } => config.batch_size.max(1) * config.window.max(1),
    };
    let mut start = resume_from.min(candidates.len());
    while start < candidates.len() {
        let end = (start + round).min(candidates.len());
        let chunk = &candidates[start..end];
        let hypotheses: Vec<(Sentence, usize, usize)> = match generator {
            Generator::EditReplay(replay) => chunk
                .par_iter()
                .map(|c| {
                    let r = edit_replay_generate(c, &replay.lexicon, replay.case_fold);
                    (r.sentence, r.copy_through, r.unaligned)
                })
                .collect(),
            Generator::Remote { transport, config } => {
                let requests: Vec<GenerationRequest> = chunk
                    .iter()
                    .enumerate()
                    .map(|(k, c)| GenerationRequest {
                        id: (start + k) as u64,
                        source: generator_source(c),
                    })
                    .collect();
                let responses = remote_generate(&requests, transport.as_ref(), config).map_err(|e| Error::Aborted {
                    checkpoint: start,
                    source: Box::new(e),
                })?;
                responses
                    .into_iter()
                    // raw keeps the wire text, so a leaked separator stays visible
                    .map(|r| (normalize(&r.hypothesis, NormConfig::default()), 0, 0))
                    .collect()
            }
        };
        for (k, (cand, (hyp, copy, unaligned))) in chunk.iter().zip(hypotheses).enumerate() {
            tally.copy_through += copy;
            tally.unaligned += unaligned;
            let outcome = assemble_multiway(cand, &hyp, filters, ctx);
            tally.record(&outcome);
            sink(start + k, &outcome)?;
        }
        start = end;
    }
    Ok(tally)
}

/// Collects every outcome of [`run_generation`] in candidate order.
pub fn generate_all(
    candidates: &[CandidateAlignedExample],
    generator: &Generator,
    filters: &FilterConfig,
    ctx: &AssemblyContext,
) -> Result<(Vec<Outcome>, GenerationTally)> {
    let mut outcomes = Vec::with_capacity(candidates.len());
    let tally = run_generation(candidates, generator, filters, ctx, 0, |_, o| {
        outcomes.push(o.clone());
        Ok(())
    })?;
    Ok((outcomes, tally))
}
