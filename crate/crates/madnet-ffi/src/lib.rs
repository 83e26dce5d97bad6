//! C ABI for the madnet library.
//!
//! Conventions:
//! - Complex objects are opaque handles (`MadnetCorpus`, `MadnetVocab`,
//!   `MadnetModel`, `MadnetGraph`). Every constructor has a matching
//!   `*_free`; passing NULL to a free function is a no-op.
//! - Functions return [`MadnetStatus`]; outputs go through out-pointers.
//!   On failure, `madnet_last_error` returns a message for the calling
//!   thread (free it with `madnet_string_free`).
//! - Strings crossing the boundary are NUL-terminated UTF-8 owned by Rust;
//!   free them with `madnet_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::BufReader;
use std::path::Path;
use std::ptr;

use madnet::corpus::{
    build_vocab, missing_label_rate, parse_corpus, LabelMap, MpcInstance, ParsedInstance, Vocab,
};
use madnet::em::{e_step_posterior, hard_select};
use madnet::graph::{build_graph, HeteroGraph, NodeRef, Overrides};
use madnet::metrics::{bleu, meteor_lite_pair, rouge_l_pair};
use madnet::model::{Model, ModelConfig};
use madnet::numerics::load_checkpoint;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error message had NUL").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MadnetStatus {
    MadnetOk = 0,
    MadnetValidationError = 1,
    MadnetRuntimeError = 2,
    MadnetNullPointer = 3,
    MadnetInvalidUtf8 = 4,
}

use MadnetStatus::*;

pub struct MadnetCorpus {
    instances: Vec<ParsedInstance>,
}

pub struct MadnetVocab {
    vocab: Vocab,
}

pub struct MadnetModel {
    model: Model,
}

pub struct MadnetGraph {
    graph: HeteroGraph,
}

/// Corpus-level scores for one hypothesis/reference pair.
#[repr(C)]
pub struct MadnetScores {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn madnet_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent error on this thread, or NULL. The caller
/// owns the returned string (free with `madnet_string_free`).
#[no_mangle]
pub extern "C" fn madnet_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Frees a string previously returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from a madnet function that
/// transfers string ownership, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn madnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, MadnetStatus> {
    if ptr.is_null() {
        set_error("NULL string argument".into());
        return Err(MadnetNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        MadnetInvalidUtf8
    })
}

fn status_of<T>(result: Result<T, (MadnetStatus, String)>, out: impl FnOnce(T)) -> MadnetStatus {
    match result {
        Ok(v) => {
            out(v);
            MadnetOk
        }
        Err((status, msg)) => {
            set_error(msg);
            status
        }
    }
}

macro_rules! check_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            set_error(format!("NULL pointer argument `{}`", stringify!($p)));
            return MadnetNullPointer;
        })+
    };
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

/// Parses a JSON-Lines corpus file into a corpus handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_corpus_parse_file(
    path: *const c_char,
    out: *mut *mut MadnetCorpus,
) -> MadnetStatus {
    check_null!(out);
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let result = (|| {
        let file = std::fs::File::open(Path::new(path))
            .map_err(|e| (MadnetRuntimeError, format!("open {path}: {e}")))?;
        let instances = parse_corpus(BufReader::new(file))
            .map_err(|e| (MadnetValidationError, e.to_string()))?;
        Ok(Box::into_raw(Box::new(MadnetCorpus { instances })))
    })();
    status_of(result, |v| *out = v)
}

/// # Safety
/// `corpus` must be NULL or a live corpus handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn madnet_corpus_free(corpus: *mut MadnetCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn madnet_corpus_len(corpus: *const MadnetCorpus) -> usize {
    if corpus.is_null() {
        return 0;
    }
    (*corpus).instances.len()
}

/// Fraction of non-first context utterances lacking addressee labels.
///
/// # Safety
/// `corpus` must be a live corpus handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_corpus_missing_label_rate(
    corpus: *const MadnetCorpus,
    out: *mut f64,
) -> MadnetStatus {
    check_null!(corpus, out);
    let result = missing_label_rate(&(*corpus).instances)
        .map_err(|e| (MadnetValidationError, e.to_string()));
    status_of(result, |v| *out = v)
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Builds a vocabulary over every utterance and response in the corpus.
///
/// # Safety
/// `corpus` must be a live corpus handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_vocab_build(
    corpus: *const MadnetCorpus,
    min_freq: usize,
    out: *mut *mut MadnetVocab,
) -> MadnetStatus {
    check_null!(corpus, out);
    let result = build_vocab(madnet::corpus::corpus_texts(&(*corpus).instances), min_freq)
        .map(|vocab| Box::into_raw(Box::new(MadnetVocab { vocab })))
        .map_err(|e| (MadnetValidationError, e.to_string()));
    status_of(result, |v| *out = v)
}

/// Loads a `{token: id}` JSON vocabulary file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_vocab_load(
    path: *const c_char,
    out: *mut *mut MadnetVocab,
) -> MadnetStatus {
    check_null!(out);
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let result = (|| {
        let text = std::fs::read_to_string(path)
            .map_err(|e| (MadnetRuntimeError, format!("read {path}: {e}")))?;
        let vocab =
            Vocab::from_json(&text).map_err(|e| (MadnetValidationError, e.to_string()))?;
        Ok(Box::into_raw(Box::new(MadnetVocab { vocab })))
    })();
    status_of(result, |v| *out = v)
}

/// # Safety
/// `vocab` must be NULL or a live vocab handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn madnet_vocab_free(vocab: *mut MadnetVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// # Safety
/// `vocab` must be a live vocab handle.
#[no_mangle]
pub unsafe extern "C" fn madnet_vocab_size(vocab: *const MadnetVocab) -> usize {
    if vocab.is_null() {
        return 0;
    }
    (*vocab).vocab.size()
}

/// Tokenizes text into `out_ids` (capacity `cap`); `written` receives the
/// token count, which is at most `max_utt_len`.
///
/// # Safety
/// `vocab` must be a live handle; `text` NUL-terminated; `out_ids` must
/// point to at least `cap` writable u32 slots; `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_vocab_tokenize(
    vocab: *const MadnetVocab,
    text: *const c_char,
    max_utt_len: usize,
    out_ids: *mut u32,
    cap: usize,
    written: *mut usize,
) -> MadnetStatus {
    check_null!(vocab, out_ids, written);
    let text = match cstr_arg(text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let ids = madnet::corpus::tokenize(text, &(*vocab).vocab, max_utt_len);
    if ids.len() > cap {
        set_error(format!("buffer of {cap} too small for {} tokens", ids.len()));
        return MadnetValidationError;
    }
    for (i, id) in ids.iter().enumerate() {
        *out_ids.add(i) = *id;
    }
    *written = ids.len();
    MadnetOk
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

fn tokenized_instance(
    corpus: &MadnetCorpus,
    vocab: &MadnetVocab,
    index: usize,
    max_utt_len: usize,
) -> Result<MpcInstance, (MadnetStatus, String)> {
    let parsed = corpus
        .instances
        .get(index)
        .ok_or_else(|| (MadnetValidationError, format!("instance index {index} out of range")))?;
    MpcInstance::from_parsed(parsed, &vocab.vocab, max_utt_len)
        .map_err(|e| (MadnetValidationError, e.to_string()))
}

/// Builds the fully-connected heterogeneous graph for one instance.
///
/// # Safety
/// `corpus` and `vocab` must be live handles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_graph_build(
    corpus: *const MadnetCorpus,
    vocab: *const MadnetVocab,
    index: usize,
    out: *mut *mut MadnetGraph,
) -> MadnetStatus {
    check_null!(corpus, vocab, out);
    let result = (|| {
        let inst = tokenized_instance(&*corpus, &*vocab, index, 50)?;
        let graph = build_graph(&inst, &Overrides::new())
            .map_err(|e| (MadnetValidationError, e.to_string()))?;
        Ok(Box::into_raw(Box::new(MadnetGraph { graph })))
    })();
    status_of(result, |v| *out = v)
}

/// # Safety
/// `graph` must be NULL or a live graph handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn madnet_graph_free(graph: *mut MadnetGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn madnet_graph_edge_count(graph: *const MadnetGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).graph.directed_edge_count()
}

/// Edge type code (0..=9) from node p to node q. Nodes are addressed by
/// kind (0 = utterance, 1 = interlocutor) and index; the response node is
/// utterance `M`.
///
/// # Safety
/// `graph` must be a live graph handle; `out_code` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_graph_edge_type(
    graph: *const MadnetGraph,
    p_is_interlocutor: bool,
    p_index: usize,
    q_is_interlocutor: bool,
    q_index: usize,
    out_code: *mut u8,
) -> MadnetStatus {
    check_null!(graph, out_code);
    let node = |is_int: bool, idx: usize| {
        if is_int {
            NodeRef::Interlocutor(idx)
        } else {
            NodeRef::Utterance(idx)
        }
    };
    let result = (*graph)
        .graph
        .edge_type(node(p_is_interlocutor, p_index), node(q_is_interlocutor, q_index))
        .map(|ty| ty.code())
        .map_err(|e| (MadnetValidationError, e.to_string()));
    status_of(result, |v| *out_code = v)
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Loads a model from a checkpoint written by the `madnet` CLI (the
/// checkpoint carries its own model configuration).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_model_load(
    path: *const c_char,
    out: *mut *mut MadnetModel,
) -> MadnetStatus {
    check_null!(out);
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let result = (|| {
        let (params, meta) = load_checkpoint(Path::new(path))
            .map_err(|e| (MadnetRuntimeError, e.to_string()))?;
        let cfg: ModelConfig = match meta.model_config {
            Some(value) => serde_json::from_value(value)
                .map_err(|e| (MadnetValidationError, format!("model config: {e}")))?,
            None => {
                return Err((
                    MadnetValidationError,
                    "checkpoint does not embed a model configuration".into(),
                ))
            }
        };
        let model =
            Model::from_params(cfg, params).map_err(|e| (MadnetValidationError, e.to_string()))?;
        Ok(Box::into_raw(Box::new(MadnetModel { model })))
    })();
    status_of(result, |v| *out = v)
}

/// # Safety
/// `model` must be NULL or a live model handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn madnet_model_free(model: *mut MadnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Teacher-forced negative log-likelihood of instance `index`'s response.
///
/// # Safety
/// All handles must be live; `out_nll` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_model_response_nll(
    model: *const MadnetModel,
    corpus: *const MadnetCorpus,
    vocab: *const MadnetVocab,
    index: usize,
    out_nll: *mut f64,
) -> MadnetStatus {
    check_null!(model, corpus, vocab, out_nll);
    let model = &(*model).model;
    let result = (|| {
        let inst = tokenized_instance(&*corpus, &*vocab, index, model.cfg.max_utt_len)?;
        let graph = build_graph(&inst, &Overrides::new())
            .map_err(|e| (MadnetValidationError, e.to_string()))?;
        let scored = model
            .response_nll(&inst, &graph)
            .map_err(|e| (MadnetRuntimeError, e.to_string()))?;
        Ok(scored.nll)
    })();
    status_of(result, |v| *out_nll = v)
}

/// Greedy-decodes a response for instance `index`, returning owned text.
///
/// # Safety
/// All handles must be live; `out_text` a valid pointer. Free the returned
/// string with `madnet_string_free`.
#[no_mangle]
pub unsafe extern "C" fn madnet_model_generate(
    model: *const MadnetModel,
    corpus: *const MadnetCorpus,
    vocab: *const MadnetVocab,
    index: usize,
    out_text: *mut *mut c_char,
) -> MadnetStatus {
    check_null!(model, corpus, vocab, out_text);
    let model = &(*model).model;
    let vocab_ref = &(*vocab).vocab;
    let result = (|| {
        let inst = tokenized_instance(&*corpus, &*vocab, index, model.cfg.max_utt_len)?;
        let graph = build_graph(&inst, &Overrides::new())
            .map_err(|e| (MadnetValidationError, e.to_string()))?;
        let ids = model
            .generate(&inst, &graph)
            .map_err(|e| (MadnetRuntimeError, e.to_string()))?;
        CString::new(vocab_ref.decode(&ids))
            .map(CString::into_raw)
            .map_err(|_| (MadnetRuntimeError, "generated text had NUL".into()))
    })();
    status_of(result, |v| *out_text = v)
}

/// Deduces the addressee of utterance `utt_index` in instance `index` by
/// scoring every earlier utterance as the assumed reply target.
///
/// # Safety
/// All handles must be live; `out_target` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madnet_model_deduce(
    model: *const MadnetModel,
    corpus: *const MadnetCorpus,
    vocab: *const MadnetVocab,
    index: usize,
    utt_index: usize,
    out_target: *mut usize,
) -> MadnetStatus {
    check_null!(model, corpus, vocab, out_target);
    let model = &(*model).model;
    let result = (|| {
        let inst = tokenized_instance(&*corpus, &*vocab, index, model.cfg.max_utt_len)?;
        let dist = e_step_posterior(model, &inst, utt_index, &LabelMap::new())
            .map_err(|e| (MadnetRuntimeError, e.to_string()))?;
        Ok(hard_select(&dist))
    })();
    status_of(result, |v| *out_target = v)
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Scores one whitespace-tokenized hypothesis against one reference.
///
/// # Safety
/// `hyp` and `reference` must be NUL-terminated strings; `out` must point
/// to a writable `MadnetScores`.
#[no_mangle]
pub unsafe extern "C" fn madnet_eval_pair(
    hyp: *const c_char,
    reference: *const c_char,
    out: *mut MadnetScores,
) -> MadnetStatus {
    check_null!(out);
    let hyp = match cstr_arg(hyp) {
        Ok(h) => h,
        Err(s) => return s,
    };
    let reference = match cstr_arg(reference) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let split = |s: &str| -> Vec<String> {
        s.to_lowercase().split_whitespace().map(|t| t.to_string()).collect()
    };
    let (h, r) = (split(hyp), split(reference));
    if r.is_empty() {
        set_error("reference must be non-empty".into());
        return MadnetValidationError;
    }
    let hs = vec![h.clone()];
    let rs = vec![r.clone()];
    let result = (|| {
        Ok(MadnetScores {
            bleu_1: bleu(&hs, &rs, 1).map_err(stringify_metrics)?,
            bleu_2: bleu(&hs, &rs, 2).map_err(stringify_metrics)?,
            bleu_3: bleu(&hs, &rs, 3).map_err(stringify_metrics)?,
            bleu_4: bleu(&hs, &rs, 4).map_err(stringify_metrics)?,
            rouge_l: rouge_l_pair(&h, &r),
            meteor: meteor_lite_pair(&h, &r),
        })
    })();
    status_of(result, |v| *out = v)
}

fn stringify_metrics(e: madnet::metrics::MetricsError) -> (MadnetStatus, String) {
    (MadnetValidationError, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn version_is_non_null() {
        let v = madnet_version();
        assert!(!v.is_null());
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert_eq!(s, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn corpus_vocab_graph_round_trip() {
        let dir = std::env::temp_dir().join("madnet-ffi-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corpus.jsonl");
        let line = r#"{"id": "c1", "utterances": [
            {"speaker": "a", "reply_to": null, "text": "hello there"},
            {"speaker": "b", "reply_to": 0, "text": "hi"},
            {"speaker": "c", "reply_to": null, "text": "what now"}
        ], "response": {"speaker": "a", "reply_to": 2, "text": "nothing much"}}"#
            .replace('\n', " ");
        std::fs::write(&path, format!("{line}\n")).unwrap();

        unsafe {
            let mut corpus: *mut MadnetCorpus = ptr::null_mut();
            let st = madnet_corpus_parse_file(
                c(path.to_str().unwrap()).as_ptr(),
                &mut corpus,
            );
            assert_eq!(st, MadnetOk);
            assert_eq!(madnet_corpus_len(corpus), 1);

            let mut rate = -1.0;
            assert_eq!(madnet_corpus_missing_label_rate(corpus, &mut rate), MadnetOk);
            assert!((rate - 0.5).abs() < 1e-12);

            let mut vocab: *mut MadnetVocab = ptr::null_mut();
            assert_eq!(madnet_vocab_build(corpus, 1, &mut vocab), MadnetOk);
            assert!(madnet_vocab_size(vocab) >= 5);

            let mut ids = [0u32; 8];
            let mut written = 0usize;
            assert_eq!(
                madnet_vocab_tokenize(vocab, c("hello unknown").as_ptr(), 8, ids.as_mut_ptr(), 8, &mut written),
                MadnetOk
            );
            assert_eq!(written, 2);
            assert_eq!(ids[1], 3, "OOV maps to UNK");

            let mut graph: *mut MadnetGraph = ptr::null_mut();
            assert_eq!(madnet_graph_build(corpus, vocab, 0, &mut graph), MadnetOk);
            // M = 3 -> n_utt = 4, I = 3: 4*3 + 2*4*3 = 36
            assert_eq!(madnet_graph_edge_count(graph), 36);

            let mut code = u8::MAX;
            assert_eq!(madnet_graph_edge_type(graph, false, 1, false, 0, &mut code), MadnetOk);
            assert_eq!(code, 0, "reply edge");
            assert_eq!(
                madnet_graph_edge_type(graph, true, 0, true, 1, &mut code),
                MadnetValidationError
            );
            let err = madnet_last_error();
            assert!(!err.is_null());
            madnet_string_free(err);

            madnet_graph_free(graph);
            madnet_vocab_free(vocab);
            madnet_corpus_free(corpus);
        }
    }

    #[test]
    fn vocab_load_round_trip() {
        let dir = std::env::temp_dir().join("madnet-ffi-vocab-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vocab.json");
        let vocab = build_vocab(["alpha beta beta"], 1).unwrap();
        std::fs::write(&path, vocab.to_json()).unwrap();
        unsafe {
            let mut handle: *mut MadnetVocab = ptr::null_mut();
            assert_eq!(
                madnet_vocab_load(c(path.to_str().unwrap()).as_ptr(), &mut handle),
                MadnetOk
            );
            assert_eq!(madnet_vocab_size(handle), vocab.size());
            madnet_vocab_free(handle);

            // malformed files surface a validation error
            std::fs::write(&path, "{\"a\": 0}").unwrap();
            let mut bad: *mut MadnetVocab = ptr::null_mut();
            assert_eq!(
                madnet_vocab_load(c(path.to_str().unwrap()).as_ptr(), &mut bad),
                MadnetValidationError
            );
            let err = madnet_last_error();
            assert!(!err.is_null());
            madnet_string_free(err);
        }
    }

    #[test]
    fn eval_pair_scores_identity() {
        let mut scores = MadnetScores {
            bleu_1: 0.0,
            bleu_2: 0.0,
            bleu_3: 0.0,
            bleu_4: 0.0,
            rouge_l: 0.0,
            meteor: 0.0,
        };
        let st = unsafe {
            madnet_eval_pair(c("a b c d").as_ptr(), c("a b c d").as_ptr(), &mut scores)
        };
        assert_eq!(st, MadnetOk);
        assert!((scores.bleu_4 - 1.0).abs() < 1e-12);
        assert!((scores.rouge_l - 1.0).abs() < 1e-12);
        assert!(scores.meteor > 0.99);
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            let mut out: *mut MadnetCorpus = ptr::null_mut();
            assert_eq!(
                madnet_corpus_parse_file(ptr::null(), &mut out),
                MadnetNullPointer
            );
            let mut rate = 0.0;
            assert_eq!(
                madnet_corpus_missing_label_rate(ptr::null(), &mut rate),
                MadnetNullPointer
            );
            // frees tolerate NULL
            madnet_corpus_free(ptr::null_mut());
            madnet_vocab_free(ptr::null_mut());
            madnet_graph_free(ptr::null_mut());
            madnet_model_free(ptr::null_mut());
            madnet_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn model_load_and_score_through_ffi() {
        use madnet::numerics::{save_checkpoint, CheckpointMeta};

        let dir = std::env::temp_dir().join("madnet-ffi-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let corpus_path = dir.join("corpus.jsonl");
        let line = r#"{"id": "c1", "utterances": [
            {"speaker": "a", "reply_to": null, "text": "k01 w00"},
            {"speaker": "b", "reply_to": 0, "text": "k02 w01"}
        ], "response": {"speaker": "a", "reply_to": 1, "text": "re k02 echo k01"}}"#
            .replace('\n', " ");
        std::fs::write(&corpus_path, format!("{line}\n")).unwrap();

        unsafe {
            let mut corpus: *mut MadnetCorpus = ptr::null_mut();
            assert_eq!(
                madnet_corpus_parse_file(c(corpus_path.to_str().unwrap()).as_ptr(), &mut corpus),
                MadnetOk
            );
            let mut vocab: *mut MadnetVocab = ptr::null_mut();
            assert_eq!(madnet_vocab_build(corpus, 1, &mut vocab), MadnetOk);

            let cfg = ModelConfig {
                d_model: 8,
                n_heads: 2,
                n_init_layers: 1,
                n_graph_iters: 1,
                n_dec_layers: 1,
                ffn_mult: 2,
                vocab_size: madnet_vocab_size(vocab),
                max_utt_len: 8,
                max_gen_len: 8,
                max_interlocutors: 4,
                seed: 9,
                diagnostic: Default::default(),
            };
            let model = Model::new(cfg.clone()).unwrap();
            let ckpt = dir.join("model.ckpt");
            let meta = CheckpointMeta::new("test", 9, Some(serde_json::to_value(&cfg).unwrap()));
            save_checkpoint(&ckpt, &model.params, &meta).unwrap();

            let mut handle: *mut MadnetModel = ptr::null_mut();
            assert_eq!(
                madnet_model_load(c(ckpt.to_str().unwrap()).as_ptr(), &mut handle),
                MadnetOk
            );

            let mut nll = -1.0;
            assert_eq!(
                madnet_model_response_nll(handle, corpus, vocab, 0, &mut nll),
                MadnetOk
            );
            assert!(nll.is_finite() && nll > 0.0);

            let mut text: *mut c_char = ptr::null_mut();
            assert_eq!(
                madnet_model_generate(handle, corpus, vocab, 0, &mut text),
                MadnetOk
            );
            assert!(!text.is_null());
            madnet_string_free(text);

            let mut target = usize::MAX;
            assert_eq!(
                madnet_model_deduce(handle, corpus, vocab, 0, 1, &mut target),
                MadnetOk
            );
            assert_eq!(target, 0, "utterance 1 has a single candidate");

            madnet_model_free(handle);
            madnet_vocab_free(vocab);
            madnet_corpus_free(corpus);
        }
    }
}
