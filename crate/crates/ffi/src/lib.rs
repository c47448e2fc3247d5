//! C ABI over `eag-core`.
//!
//! Every function returns an [`EagStatus`]; results come back through out
//! parameters. On failure `eag_last_error()` describes the problem for the
//! calling thread. Handles are opaque and must be released with their
//! matching `_free` function. Strings returned by the library are released
//! with `eag_string_free`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eag_core::corpus::{build_vocabulary, load_bitext, normalize, BitextCorpus, LanguageTag, NormConfig, Side, Vocabulary};
use eag_core::noising::{noise, pair_rng, NoiseConfig};
use eag_core::pipeline::mixture::temperature_probabilities;
use eag_core::simjoin::{edit_distance, extract_candidates, CandidateAlignedExample, JoinConfig};
use eag_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EagStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Io = 5,
    Transport = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// A loaded bitext.
pub struct EagCorpus(BitextCorpus);

/// Token counts used to draw noise tokens.
pub struct EagVocab(Vocabulary);

/// Candidate examples from a pivot join, sorted by (left, right).
pub struct EagCandidates(Vec<CandidateAlignedExample>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> EagStatus {
    match err {
        Error::Config(_) => EagStatus::Config,
        Error::Io { .. } => EagStatus::Io,
        Error::Transport(_) | Error::Protocol { .. } => EagStatus::Transport,
        Error::Aborted { source, .. } => status_of(source),
        _ => EagStatus::Data,
    }
}

fn fail(status: EagStatus, message: impl Into<String>) -> EagStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> Result<(), EagStatus>) -> EagStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EagStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(EagStatus::Panic, "internal panic"),
    }
}

fn core<T>(r: eag_core::Result<T>) -> Result<T, EagStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, EagStatus> {
    if p.is_null() {
        return Err(fail(EagStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EagStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, EagStatus> {
    p.as_ref().ok_or_else(|| fail(EagStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, EagStatus> {
    p.as_mut().ok_or_else(|| fail(EagStatus::NullPointer, format!("{what} is null")))
}

fn lang(s: &str) -> Result<LanguageTag, EagStatus> {
    core(LanguageTag::new(s))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn eag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn eag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Token edit distance between two whitespace-tokenized sentences.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_edit_distance(a: *const c_char, b: *const c_char, out_distance: *mut usize) -> EagStatus {
    guard(|| {
        let norm = NormConfig::default();
        let (a, b) = (normalize(text(a, "a")?, norm), normalize(text(b, "b")?, norm));
        *out(out_distance, "out_distance")? = edit_distance(&a.tokens, &b.tokens);
        Ok(())
    })
}

/// Loads a line-aligned bitext.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_corpus` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_corpus_load(
    pivot_path: *const c_char,
    other_path: *const c_char,
    pivot_lang: *const c_char,
    other_lang: *const c_char,
    case_fold: bool,
    out_corpus: *mut *mut EagCorpus,
) -> EagStatus {
    guard(|| {
        let slot = out(out_corpus, "out_corpus")?;
        let norm = NormConfig { case_fold };
        let corpus = core(load_bitext(
            Path::new(text(pivot_path, "pivot_path")?),
            Path::new(text(other_path, "other_path")?),
            lang(text(pivot_lang, "pivot_lang")?)?,
            lang(text(other_lang, "other_lang")?)?,
            norm,
        ))?;
        *slot = Box::into_raw(Box::new(EagCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_corpus_len(corpus: *const EagCorpus, out_len: *mut usize) -> EagStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(corpus, "corpus")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle from `eag_corpus_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eag_corpus_free(corpus: *mut EagCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Vocabulary of the non-pivot side of `corpus`.
///
/// # Safety
/// `corpus` must be a live handle; `out_vocab` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_vocab_from_corpus(corpus: *const EagCorpus, out_vocab: *mut *mut EagVocab) -> EagStatus {
    guard(|| {
        let slot = out(out_vocab, "out_vocab")?;
        let vocab = core(build_vocabulary(&handle(corpus, "corpus")?.0, Side::Other))?;
        *slot = Box::into_raw(Box::new(EagVocab(vocab)));
        Ok(())
    })
}

/// # Safety
/// `vocab` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eag_vocab_free(vocab: *mut EagVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Noises one sentence with uniform operation weights. The same
/// (`seed`, `stream`, `index`) always gives the same result.
///
/// # Safety
/// String arguments must be NUL-terminated; `vocab` must be a live handle;
/// `out_text` must be writable. The result is freed with `eag_string_free`.
#[no_mangle]
pub unsafe extern "C" fn eag_noise_sentence(
    sentence: *const c_char,
    vocab: *const EagVocab,
    beta: f64,
    seed: u64,
    stream: *const c_char,
    index: usize,
    out_text: *mut *mut c_char,
) -> EagStatus {
    guard(|| {
        let slot = out(out_text, "out_text")?;
        let cfg = NoiseConfig::with_beta(beta, seed);
        core(cfg.validate())?;
        let tokens = normalize(text(sentence, "sentence")?, NormConfig::default()).tokens;
        let mut rng = pair_rng(seed, text(stream, "stream")?, index);
        let noised = core(noise(&tokens, &cfg, &handle(vocab, "vocab")?.0, &mut rng))?;
        *slot = into_c_string(noised.join(" "));
        Ok(())
    })
}

/// Joins two bitexts sharing a pivot language at threshold `gamma` with
/// default settings otherwise.
///
/// # Safety
/// `left` and `right` must be live handles; `out_candidates` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_extract(
    left: *const EagCorpus,
    right: *const EagCorpus,
    gamma: f64,
    out_candidates: *mut *mut EagCandidates,
) -> EagStatus {
    guard(|| {
        let slot = out(out_candidates, "out_candidates")?;
        let cfg = JoinConfig::with_gamma(gamma);
        let cands = core(extract_candidates(&handle(left, "left")?.0, &handle(right, "right")?.0, &cfg))?;
        *slot = Box::into_raw(Box::new(EagCandidates(cands)));
        Ok(())
    })
}

/// # Safety
/// `candidates` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_candidates_len(candidates: *const EagCandidates, out_len: *mut usize) -> EagStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(candidates, "candidates")?.0.len();
        Ok(())
    })
}

/// Sentence indices and token distance of candidate `i`.
///
/// # Safety
/// `candidates` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn eag_candidates_get(
    candidates: *const EagCandidates,
    i: usize,
    out_left_index: *mut usize,
    out_right_index: *mut usize,
    out_distance: *mut usize,
) -> EagStatus {
    guard(|| {
        let all = &handle(candidates, "candidates")?.0;
        let c = all
            .get(i)
            .ok_or_else(|| fail(EagStatus::OutOfRange, format!("index {i} out of range for {} candidates", all.len())))?;
        *out(out_left_index, "out_left_index")? = c.left_index;
        *out(out_right_index, "out_right_index")? = c.right_index;
        *out(out_distance, "out_distance")? = c.distance;
        Ok(())
    })
}

/// Writes the candidates as JSON lines.
///
/// # Safety
/// `candidates` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn eag_candidates_write_jsonl(candidates: *const EagCandidates, path: *const c_char) -> EagStatus {
    guard(|| {
        let all = &handle(candidates, "candidates")?.0;
        let path = Path::new(text(path, "path")?);
        let io = |e| fail(EagStatus::Io, format!("{}: {e}", path.display()));
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for c in all {
            let line = serde_json::to_string(&c.to_record()).expect("records serialize");
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    })
}

/// # Safety
/// `candidates` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eag_candidates_free(candidates: *mut EagCandidates) {
    if !candidates.is_null() {
        drop(Box::from_raw(candidates));
    }
}

/// Temperature sampling probabilities `n_i^(1/T) / sum_j n_j^(1/T)`.
///
/// # Safety
/// `counts` and `out_probabilities` must each point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn eag_temperature_probabilities(
    counts: *const u64,
    n: usize,
    temperature: f64,
    out_probabilities: *mut f64,
) -> EagStatus {
    guard(|| {
        if n == 0 {
            return Ok(());
        }
        if counts.is_null() || out_probabilities.is_null() {
            return Err(fail(EagStatus::NullPointer, "counts or out_probabilities is null"));
        }
        if !(temperature >= 1.0) {
            return Err(fail(EagStatus::Config, format!("temperature must be >= 1, got {temperature}")));
        }
        let counts = std::slice::from_raw_parts(counts, n);
        let keyed: BTreeMap<String, u64> = counts.iter().enumerate().map(|(i, &c)| (format!("{i:020}"), c)).collect();
        let probs = temperature_probabilities(&keyed, temperature);
        let dst = std::slice::from_raw_parts_mut(out_probabilities, n);
        for (d, p) in dst.iter_mut().zip(probs.values()) {
            *d = *p;
        }
        Ok(())
    })
}
