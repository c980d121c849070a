//! C ABI over the csforge library.
//!
//! Every fallible function returns a [`CsfStatus`]. On failure a message is
//! stored per thread and can be read with [`csf_last_error`]. Strings handed
//! out through `out` parameters are owned by the caller and released with
//! [`csf_string_free`]; model handles are released with their own `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use csforge::align::Alignment;
use csforge::corpus::{encode_example, Cleaner, CorpusError, ParallelExample, Vocabulary};
use csforge::eval::bleu;
use csforge::generate::equivalence_generate;
use csforge::lm::{perplexity, LmData, LmError, LmModel};
use csforge::seq2seq::{decode_nbest, Seq2Seq};
use csforge::tensor::{load_checkpoint, CheckpointError, TensorError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    UnsupportedVersion = 6,
    Model = 7,
    Panic = 8,
}

/// Loaded pointer-generator with its vocabulary.
pub struct CsfGenerator {
    model: Seq2Seq,
    vocab: Vocabulary,
}

/// Loaded language model with its word and optional tag vocabularies.
pub struct CsfLanguageModel {
    model: LmModel,
    vocab: Vocabulary,
    pos_vocab: Option<Vocabulary>,
}

struct Failure {
    status: CsfStatus,
    message: String,
}

impl Failure {
    fn new(status: CsfStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let status = match e {
            CheckpointError::Io(_) => CsfStatus::Io,
            CheckpointError::UnsupportedVersion { .. } => CsfStatus::UnsupportedVersion,
            CheckpointError::BadMagic(_) | CheckpointError::Malformed(_) => CsfStatus::Parse,
        };
        Self::new(status, e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let status = match e {
            CorpusError::Io { .. } => CsfStatus::Io,
            CorpusError::InvalidUtf8 { .. } => CsfStatus::InvalidUtf8,
            _ => CsfStatus::Parse,
        };
        Self::new(status, e.to_string())
    }
}

impl From<TensorError> for Failure {
    fn from(e: TensorError) -> Self {
        Self::new(CsfStatus::Model, e.to_string())
    }
}

impl From<LmError> for Failure {
    fn from(e: LmError) -> Self {
        let status = match e {
            LmError::LengthMismatch { .. } | LmError::MissingPos | LmError::UnexpectedPos | LmError::EmptyCorpus => {
                CsfStatus::InvalidArgument
            }
            _ => CsfStatus::Model,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CsfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CsfStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal error: {msg}"));
            CsfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(CsfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(CsfStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(CsfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(CsfStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::new(CsfStatus::InvalidArgument, "output contains NUL"))?;
    if out.is_null() {
        return Err(Failure::new(CsfStatus::NullPointer, "out is null"));
    }
    out.write(c.into_raw());
    Ok(())
}

fn directory(raw: &str) -> Result<PathBuf, Failure> {
    let p = PathBuf::from(raw);
    if p.is_dir() {
        Ok(p)
    } else {
        Err(Failure::new(CsfStatus::Io, format!("{raw}: no such directory")))
    }
}

fn lines(raw: &str) -> Vec<Vec<String>> {
    raw.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn csf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn csf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn csf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cleans and tokenizes one utterance; tokens are joined by single spaces.
///
/// # Safety
/// `input` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_tokenize(input: *const c_char, out: *mut *mut c_char) -> CsfStatus {
    guard(|| {
        let s = text(input, "input")?;
        put_string(out, Cleaner::default().clean(s).join(" "))
    })
}

/// Corpus BLEU (0..100) over newline-separated, whitespace-tokenized lines.
///
/// # Safety
/// Both strings must be NUL-terminated; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_bleu(hypotheses: *const c_char, references: *const c_char, score: *mut f64) -> CsfStatus {
    guard(|| {
        let h = lines(text(hypotheses, "hypotheses")?);
        let r = lines(text(references, "references")?);
        let rep = bleu(&h, &r).map_err(|e| Failure::new(CsfStatus::InvalidArgument, e.to_string()))?;
        put(score, rep.score, "score")
    })
}

/// Code-switched candidates allowed by the equivalence constraint, one per
/// line. `alignment` uses `i-j` pairs, L1 index first.
///
/// # Safety
/// All strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_ec_generate(
    l1: *const c_char,
    l2: *const c_char,
    alignment: *const c_char,
    max_outputs: usize,
    out: *mut *mut c_char,
) -> CsfStatus {
    guard(|| {
        let pair = ParallelExample::from_text(text(l1, "l1")?, text(l2, "l2")?, None);
        let al = Alignment::parse_pharaoh(text(alignment, "alignment")?).map_err(|e| Failure::new(CsfStatus::Parse, e))?;
        if !al.within(pair.l1.len(), pair.l2.len()) {
            return Err(Failure::new(CsfStatus::InvalidArgument, "alignment index out of range"));
        }
        let body: String = equivalence_generate(&pair, &al, max_outputs)
            .iter()
            .map(|c| c.tokens.join(" ") + "\n")
            .collect();
        put_string(out, body)
    })
}

fn load_generator(dir: &Path) -> Result<CsfGenerator, Failure> {
    let model = Seq2Seq::from_params(load_checkpoint(dir.join("generator.csfg"))?)?;
    let vocab = Vocabulary::load(dir.join("generator.vocab"))?;
    if vocab.len() != model.vocab_size() {
        return Err(Failure::new(
            CsfStatus::Parse,
            format!("vocabulary has {} entries, checkpoint expects {}", vocab.len(), model.vocab_size()),
        ));
    }
    Ok(CsfGenerator { model, vocab })
}

/// Loads `generator.csfg` and `generator.vocab` from a model directory.
///
/// # Safety
/// `model_dir` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_generator_load(model_dir: *const c_char, out: *mut *mut CsfGenerator) -> CsfStatus {
    guard(|| {
        let g = load_generator(&directory(text(model_dir, "model_dir")?)?)?;
        put(out, Box::into_raw(Box::new(g)), "out")
    })
}

/// Beam-decodes one pair. Each output line is `rank<TAB>logprob<TAB>tokens`.
///
/// # Safety
/// `generator` must come from [`csf_generator_load`]; strings must be
/// NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_generator_decode(
    generator: *const CsfGenerator,
    l1: *const c_char,
    l2: *const c_char,
    beam: usize,
    n_best: usize,
    out: *mut *mut c_char,
) -> CsfStatus {
    guard(|| {
        let g = handle(generator, "generator")?;
        let cleaner = Cleaner::default();
        let pair = ParallelExample::new(cleaner.clean(text(l1, "l1")?), cleaner.clean(text(l2, "l2")?), None);
        let ex = encode_example(&pair, &g.vocab);
        let entries = decode_nbest(&g.model, &[ex], &g.vocab, beam, n_best, 1)
            .map_err(|e| Failure::new(CsfStatus::InvalidArgument, e.to_string()))?;
        let body: String = entries
            .iter()
            .map(|e| format!("{}\t{:.6}\t{}\n", e.rank, e.log_prob, e.tokens.join(" ")))
            .collect();
        put_string(out, body)
    })
}

/// # Safety
/// `generator` must come from [`csf_generator_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn csf_generator_free(generator: *mut CsfGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

fn load_lm(dir: &Path) -> Result<CsfLanguageModel, Failure> {
    let model = LmModel::from_params(load_checkpoint(dir.join("lm.csfg"))?)?;
    let vocab = Vocabulary::load(dir.join("lm.vocab"))?;
    let pos_vocab = if model.config.has_pos() {
        Some(Vocabulary::load(dir.join("lm.pos.vocab"))?)
    } else {
        None
    };
    Ok(CsfLanguageModel { model, vocab, pos_vocab })
}

/// Loads `lm.csfg`, `lm.vocab` and, for tagged models, `lm.pos.vocab`.
///
/// # Safety
/// `model_dir` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_lm_load(model_dir: *const c_char, out: *mut *mut CsfLanguageModel) -> CsfStatus {
    guard(|| {
        let m = load_lm(&directory(text(model_dir, "model_dir")?)?)?;
        put(out, Box::into_raw(Box::new(m)), "out")
    })
}

/// Whether the model needs a tag line per utterance.
///
/// # Safety
/// `lm` must come from [`csf_lm_load`].
#[no_mangle]
pub unsafe extern "C" fn csf_lm_has_pos(lm: *const CsfLanguageModel) -> bool {
    lm.as_ref().is_some_and(|m| m.pos_vocab.is_some())
}

/// Perplexity over newline-separated utterances. `tags` holds one tag line
/// per utterance and is required exactly when the model is tagged.
/// `tokens` may be NULL.
///
/// # Safety
/// `lm` must come from [`csf_lm_load`]; strings must be NUL-terminated;
/// `perplexity_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csf_lm_perplexity(
    lm: *const CsfLanguageModel,
    utterances: *const c_char,
    tags: *const c_char,
    perplexity_out: *mut f64,
    tokens: *mut usize,
) -> CsfStatus {
    guard(|| {
        let m = handle(lm, "lm")?;
        let words = lines(text(utterances, "utterances")?);
        let tag_lines = opt_text(tags, "tags")?.map(lines);
        let keep: Vec<usize> = (0..words.len()).filter(|&i| !words[i].is_empty()).collect();
        let ids = keep.iter().map(|&i| m.vocab.encode(&words[i])).collect();
        let pos = match (&m.pos_vocab, tag_lines) {
            (Some(pv), Some(t)) => {
                if t.len() < words.len() {
                    return Err(Failure::new(CsfStatus::InvalidArgument, "fewer tag lines than utterances"));
                }
                Some(keep.iter().map(|&i| pv.encode(&t[i])).collect())
            }
            (Some(_), None) => return Err(Failure::new(CsfStatus::InvalidArgument, "model is tagged; tags are required")),
            (None, Some(_)) => return Err(Failure::new(CsfStatus::InvalidArgument, "model takes no tags")),
            (None, None) => None,
        };
        let rep = perplexity(&m.model, &LmData::new(ids, pos)?, 1)?;
        put(perplexity_out, rep.perplexity(), "perplexity_out")?;
        if !tokens.is_null() {
            tokens.write(rep.tokens);
        }
        Ok(())
    })
}

/// # Safety
/// `lm` must come from [`csf_lm_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn csf_lm_free(lm: *mut CsfLanguageModel) {
    if !lm.is_null() {
        drop(Box::from_raw(lm));
    }
}
