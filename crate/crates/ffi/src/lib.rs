//! C ABI over the tagguard library.
//!
//! Every fallible function returns a [`TgStatus`] and writes its result
//! through an out-pointer. On failure, [`tg_last_error`] describes the most
//! recent error on the calling thread. Handles are opaque and must be
//! released with their matching `*_free` function; strings returned through
//! `char **` must be released with [`tg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tagguard::attacks::{self, AttackKind, AttackSpec, BogusBatch};
use tagguard::classifiers::{self, Classifier, ClassifierKind, TrainConfig, TrainedModel};
use tagguard::config::CliConfig;
use tagguard::corpus::{build_vocabulary, Corpus, Folksonomy, Label, Vocabulary};
use tagguard::evaluation::{derive_seed, evaluate, stream, Countermeasure};
use tagguard::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    Config = 5,
    Model = 6,
    Io = 7,
    Panic = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TgAttackKind {
    Overload = 0,
    Piggyback = 1,
}

impl From<TgAttackKind> for AttackKind {
    fn from(k: TgAttackKind) -> Self {
        match k {
            TgAttackKind::Overload => AttackKind::Overload,
            TgAttackKind::Piggyback => AttackKind::Piggyback,
        }
    }
}

/// A loaded folksonomy corpus.
pub struct TgCorpus {
    corpus: Corpus,
}

/// A generated batch of bogus folksonomies.
pub struct TgBatch {
    batch: BogusBatch,
}

/// A trained classifier bound to the vocabulary it was trained with.
pub struct TgModel {
    model: TrainedModel,
    vocabulary: Vocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TgStatus {
    match e {
        Error::Parse { .. } | Error::EmptyInput | Error::Json(_) => TgStatus::Parse,
        Error::Config(_) => TgStatus::Config,
        Error::ModelFormat(_) | Error::VocabularyMismatch { .. } => TgStatus::Model,
        Error::Io { .. } => TgStatus::Io,
        _ => TgStatus::InvalidArgument,
    }
}

struct Failure(TgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside tagguard".into());
            TgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(TgStatus::Internal, "output contains a nul byte".into()))
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn tg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses dataset text (tab-separated user, resource, comma-joined tags).
///
/// # Safety
/// `text` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_parse(text: *const c_char, out: *mut *mut TgCorpus) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let corpus: Corpus = str_arg(text, "text")?.parse()?;
        *out = Box::into_raw(Box::new(TgCorpus { corpus }));
        Ok(())
    })
}

/// Loads a dataset file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_load(path: *const c_char, out: *mut *mut TgCorpus) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let corpus = Corpus::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(TgCorpus { corpus }));
        Ok(())
    })
}

/// Generates the synthetic desk corpus from a TOML config (its `[synth]`
/// section); null means defaults.
///
/// # Safety
/// `config_toml` must be null or nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_synth(config_toml: *const c_char, out: *mut *mut TgCorpus) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let cfg = parse_config(config_toml)?;
        let corpus = tagguard::synth::desk_corpus(&cfg.synth)?;
        *out = Box::into_raw(Box::new(TgCorpus { corpus }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_len(corpus: *const TgCorpus, out: *mut usize) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(corpus, "corpus")?.corpus.len();
        Ok(())
    })
}

/// Statistics as JSON: folksonomies, users, unique_tags, size_histogram.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_stats_json(corpus: *const TgCorpus, out: *mut *mut c_char) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let stats = ref_arg(corpus, "corpus")?.corpus.stats();
        *out = into_c_string(serde_json::to_string(&stats).map_err(Error::from)?)?;
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_free(corpus: *mut TgCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Generates an attack batch at `ratio` of the corpus size with default pools.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_attack_generate(
    corpus: *const TgCorpus,
    kind: TgAttackKind,
    ratio: f64,
    seed: u64,
    out: *mut *mut TgBatch,
) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = &ref_arg(corpus, "corpus")?.corpus;
        let batch = attacks::generate(c, &AttackSpec::new(kind.into(), ratio, seed))?;
        *out = Box::into_raw(Box::new(TgBatch { batch }));
        Ok(())
    })
}

/// # Safety
/// `batch` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_batch_len(batch: *const TgBatch, out: *mut usize) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(batch, "batch")?.batch.folksonomies.len();
        Ok(())
    })
}

/// The batch in the dataset text format.
///
/// # Safety
/// `batch` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_batch_dataset(batch: *const TgBatch, out: *mut *mut c_char) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let b = &ref_arg(batch, "batch")?.batch;
        let c = Corpus::new(b.folksonomies.clone())?;
        *out = into_c_string(c.to_dataset_string())?;
        Ok(())
    })
}

/// Returns a new corpus holding `corpus` plus the batch.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_corpus_inject(
    corpus: *const TgCorpus,
    batch: *const TgBatch,
    out: *mut *mut TgCorpus,
) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = &ref_arg(corpus, "corpus")?.corpus;
        let b = &ref_arg(batch, "batch")?.batch;
        let merged = attacks::inject(c, b)?;
        *out = Box::into_raw(Box::new(TgCorpus { corpus: merged }));
        Ok(())
    })
}

/// # Safety
/// `batch` must be null or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tg_batch_free(batch: *mut TgBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// D_KL(p ‖ q) for two probability vectors of length `n`.
///
/// # Safety
/// `p` and `q` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_kl_divergence(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        if p.is_null() || q.is_null() {
            return Err(null("p or q"));
        }
        let (p, q) = (std::slice::from_raw_parts(p, n), std::slice::from_raw_parts(q, n));
        *out = attacks::kl_divergence(p, q)?;
        Ok(())
    })
}

unsafe fn parse_config(toml: *const c_char) -> Result<CliConfig, Failure> {
    if toml.is_null() {
        Ok(CliConfig::default())
    } else {
        Ok(CliConfig::parse(str_arg(toml, "config")?, None)?)
    }
}

/// Trains `classifier` ("nb", "svm" or "nn") on the corpus plus a training
/// batch generated from the config's `[attack]` and `[run] training_ratio`.
/// The config may be null.
///
/// # Safety
/// `corpus` must be a live handle, strings nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_train(
    corpus: *const TgCorpus,
    classifier: *const c_char,
    config_toml: *const c_char,
    out: *mut *mut TgModel,
) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = &ref_arg(corpus, "corpus")?.corpus;
        let kind: ClassifierKind = str_arg(classifier, "classifier")?.parse()?;
        let cfg = parse_config(config_toml)?;
        let vocabulary = build_vocabulary(c)?;
        let a = &cfg.attack;
        let mut spec = a.spec(a.kind, cfg.run.training_ratio, derive_seed(cfg.seed, stream::TRAIN_BATCH, 0));
        spec.fake_user_prefix = "train-".into();
        let batch = attacks::generate(c, &spec)?;
        let data: Vec<&Folksonomy> = c.folksonomies().iter().chain(&batch.folksonomies).collect();
        let tc = TrainConfig {
            seed: derive_seed(cfg.seed, stream::FOLD_MODEL, 0),
            ..cfg.train.clone()
        };
        let model = classifiers::train(kind, &data, &vocabulary, &tc)?;
        *out = Box::into_raw(Box::new(TgModel { model, vocabulary }));
        Ok(())
    })
}

/// Serialises the model with its vocabulary fingerprint.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_to_json(model: *const TgModel, out: *mut *mut c_char) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        *out = into_c_string(m.model.to_json(&m.vocabulary)?)?;
        Ok(())
    })
}

/// Loads a saved model; `corpus` supplies the vocabulary and must match the
/// fingerprint stored in `json`.
///
/// # Safety
/// `corpus` must be a live handle, `json` nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_from_json(
    corpus: *const TgCorpus,
    json: *const c_char,
    out: *mut *mut TgModel,
) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let vocabulary = build_vocabulary(&ref_arg(corpus, "corpus")?.corpus)?;
        let model = TrainedModel::from_json(str_arg(json, "json")?, &vocabulary)?;
        *out = Box::into_raw(Box::new(TgModel { model, vocabulary }));
        Ok(())
    })
}

/// Probability that a folksonomy with the given tags is bogus.
///
/// # Safety
/// `model` must be a live handle and `tags` must point to `n` nul-terminated
/// strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_bogus_probability(
    model: *const TgModel,
    tags: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        if tags.is_null() && n > 0 {
            return Err(null("tags"));
        }
        let mut names = Vec::with_capacity(n);
        for i in 0..n {
            names.push(str_arg(*tags.add(i), "tag")?);
        }
        let f = Folksonomy::new("query", "query", names, Label::Legitimate)?;
        *out = m.model.bogus_probability(&f);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tg_model_free(model: *mut TgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the evaluation described by `config_toml` (null for defaults) over
/// `corpus` and returns the report as JSON. The config's `[dataset]` section
/// is ignored.
///
/// # Safety
/// `corpus` must be a live handle, `config_toml` null or nul-terminated,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_evaluate_json(
    corpus: *const TgCorpus,
    config_toml: *const c_char,
    out: *mut *mut c_char,
) -> TgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = &ref_arg(corpus, "corpus")?.corpus;
        let cfg = parse_config(config_toml)?;
        let run = cfg.run_config(cfg.run.attacks[0], Countermeasure::None);
        let report = evaluate(c, &run, &cfg.run.attacks, &cfg.run.classifiers, None)?;
        *out = into_c_string(serde_json::to_string(&report).map_err(Error::from)?)?;
        Ok(())
    })
}
