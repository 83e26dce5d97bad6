//! Run configuration, experiment orchestration, and report emission.
//!
//! Every command is a pure function of its config file, seed, and upstream
//! artifacts: outputs are written atomically (temp file + rename) and carry
//! the config hash and seed, so identical runs produce byte-identical files
//! and downstream commands can refuse mismatched checkpoints.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{
    self, build_vocab, missing_label_rate, parse_corpus, synthesize_corpus, to_jsonl, LabelMap,
    MpcInstance, ParsedInstance, SynthConfig, Vocab,
};
use crate::em::{self, EmError, TrainSchedule};
use crate::graph::{build_graph, fragments, Overrides};
use crate::metrics::{
    addressee_accuracy, expected_random_accuracy, preceding_baseline, random_baseline, EvalReport,
    MetricsError,
};
use crate::model::{Model, ModelConfig, ModelError};
use crate::numerics::{load_checkpoint, save_checkpoint, CheckpointMeta, NumericsError};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or inputs; maps to exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failures during execution; maps to exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<corpus::CorpusError> for CliError {
    fn from(e: corpus::CorpusError) -> Self {
        match e {
            corpus::CorpusError::Io(io) => CliError::Runtime(format!("io error: {io}")),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(n) => CliError::Runtime(n.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EmError> for CliError {
    fn from(e: EmError) -> Self {
        match e {
            EmError::Model(m) => m.into(),
            EmError::Diverged { .. } | EmError::Numerics(_) | EmError::NonFiniteLikelihood { .. } => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_runtime(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub gold: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus.jsonl".into(),
            vocab: "vocab.json".into(),
            gold: "gold.json".into(),
            checkpoint_dir: "checkpoints".into(),
            reports_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: TrainSchedule,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
    #[serde(default)]
    pub paths: Paths,
}

fn default_min_freq() -> usize {
    1
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Validation(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Applies the global `--seed` override to every seeded component.
    pub fn override_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.schedule.seed = seed;
        self.synth.seed = seed;
    }

    /// Hash over the semantically relevant sections (paths excluded, so the
    /// same experiment hashes identically on any machine).
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            version: u32,
            model: &'a ModelConfig,
            schedule: &'a TrainSchedule,
            synth: &'a SynthConfig,
            min_freq: usize,
        }
        let canonical = serde_json::to_string(&Hashed {
            version: self.version,
            model: &self.model,
            schedule: &self.schedule,
            synth: &self.synth,
            min_freq: self.min_freq,
        })
        .expect("config serialization");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A resolved run: config plus the output root every relative path hangs off.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub force: bool,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf, force: bool) -> Ctx {
        Ctx { cfg, out, force }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.corpus)
    }
    pub fn vocab_path(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.vocab)
    }
    pub fn gold_path(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.gold)
    }
    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.cfg.paths.checkpoint_dir).join(name)
    }
    pub fn report_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.cfg.paths.reports_dir).join(name)
    }

    fn meta(&self) -> serde_json::Value {
        json!({
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.synth.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
        })
    }
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_runtime("create output dir"))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_runtime("write temp file"))?;
    fs::rename(&tmp, path).map_err(io_runtime("rename into place"))?;
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "missing {what}: {} (run the upstream command first)",
            path.display()
        )))
    }
}

fn load_corpus_file(path: &Path) -> Result<Vec<ParsedInstance>, CliError> {
    require(path, "corpus file")?;
    let f = fs::File::open(path).map_err(io_runtime("open corpus"))?;
    Ok(parse_corpus(BufReader::new(f))?)
}

fn load_vocab_file(path: &Path) -> Result<Vocab, CliError> {
    require(path, "vocab file")?;
    let text = fs::read_to_string(path).map_err(io_runtime("read vocab"))?;
    Ok(Vocab::from_json(&text)?)
}

fn load_gold_file(path: &Path) -> Result<LabelMap, CliError> {
    require(path, "gold label file")?;
    let text = fs::read_to_string(path).map_err(io_runtime("read gold map"))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("gold map: {e}")))
}

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    #[serde(default)]
    meta: serde_json::Value,
    round: usize,
    labels: LabelMap,
}

fn write_labels(ctx: &Ctx, name: &str, round: usize, labels: &LabelMap) -> Result<PathBuf, CliError> {
    let path = ctx.report_path(name);
    let file = LabelsFile {
        meta: ctx.meta(),
        round,
        labels: labels.clone(),
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Runtime(format!("labels encode: {e}")))?;
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

fn load_labels(path: &Path) -> Result<(usize, LabelMap), CliError> {
    require(path, "silver label file")?;
    let text = fs::read_to_string(path).map_err(io_runtime("read labels"))?;
    let file: LabelsFile =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("labels: {e}")))?;
    Ok((file.round, file.labels))
}

fn tokenized(ctx: &Ctx) -> Result<(Vec<ParsedInstance>, Vocab, Vec<MpcInstance>), CliError> {
    let parsed = load_corpus_file(&ctx.corpus_path())?;
    let vocab = load_vocab_file(&ctx.vocab_path())?;
    let instances = parsed
        .iter()
        .map(|p| MpcInstance::from_parsed(p, &vocab, ctx.cfg.model.max_utt_len))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((parsed, vocab, instances))
}

fn effective_model_config(ctx: &Ctx, vocab: &Vocab) -> ModelConfig {
    let mut cfg = ctx.cfg.model.clone();
    if cfg.vocab_size == 0 {
        cfg.vocab_size = vocab.size();
    }
    cfg
}

fn save_model(ctx: &Ctx, name: &str, model: &Model) -> Result<PathBuf, CliError> {
    let path = ctx.checkpoint_path(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_runtime("create checkpoint dir"))?;
    }
    let meta = CheckpointMeta::new(
        &ctx.cfg.config_hash(),
        ctx.cfg.model.seed,
        Some(serde_json::to_value(&model.cfg).expect("model config serialization")),
    );
    save_checkpoint(&path, &model.params, &meta)?;
    Ok(path)
}

fn load_model(ctx: &Ctx, name: &str, vocab: &Vocab) -> Result<Model, CliError> {
    let path = ctx.checkpoint_path(name);
    require(&path, "checkpoint")?;
    let (params, meta) = load_checkpoint(&path)?;
    let hash = ctx.cfg.config_hash();
    if meta.config_hash != hash && !ctx.force {
        return Err(CliError::Validation(format!(
            "checkpoint {} was trained under config {} but the current config hashes to {hash}; \
             pass --force to use it anyway",
            path.display(),
            meta.config_hash
        )));
    }
    let cfg = match meta.model_config {
        Some(value) => serde_json::from_value(value)
            .map_err(|e| CliError::Validation(format!("checkpoint model config: {e}")))?,
        None => effective_model_config(ctx, vocab),
    };
    Ok(Model::from_params(cfg, params)?)
}

/// The checkpoint downstream analysis commands use: the EM checkpoint when
/// it exists, otherwise the adapted one.
fn latest_model(ctx: &Ctx, vocab: &Vocab) -> Result<Model, CliError> {
    if ctx.checkpoint_path(EM_CKPT).exists() {
        load_model(ctx, EM_CKPT, vocab)
    } else {
        load_model(ctx, ADAPT_CKPT, vocab)
    }
}

pub const ADAPT_CKPT: &str = "adapt.ckpt";
pub const EM_CKPT: &str = "em.ckpt";
pub const INIT_LABELS: &str = "labels_round_0.json";
pub const FINAL_LABELS: &str = "labels_final.json";

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Generates the synthetic corpus, its gold sidecar, and the vocabulary.
pub fn cmd_synth(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let synth = synthesize_corpus(&ctx.cfg.synth)?;
    let meta_line = serde_json::to_string(&json!({
        "_meta": {
            "config_hash": ctx.cfg.config_hash(),
            "seed": ctx.cfg.synth.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "heldout_start": synth.heldout_start,
        }
    }))
    .expect("meta serialization");
    let body = format!("{meta_line}\n{}", to_jsonl(&synth.instances));
    write_atomic(&ctx.corpus_path(), body.as_bytes())?;

    let gold =
        serde_json::to_string_pretty(&synth.gold).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&ctx.gold_path(), gold.as_bytes())?;

    let vocab = build_vocab(corpus::corpus_texts(&synth.instances), ctx.cfg.min_freq)?;
    write_atomic(&ctx.vocab_path(), vocab.to_json().as_bytes())?;

    let summary = json!({
        "meta": ctx.meta(),
        "instances": synth.instances.len(),
        "heldout_start": synth.heldout_start,
        "masked_entries": synth.gold.values().map(|g| g.len()).sum::<usize>(),
        "vocab_size": vocab.size(),
    });
    Ok(summary)
}

/// Missing-label rate and reply-fragment statistics for a corpus.
pub fn cmd_stats(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let (parsed, vocab, instances) = stats_inputs(ctx)?;
    let missing = missing_label_rate(&parsed)?;
    let mut fragment_hist: std::collections::BTreeMap<usize, usize> = Default::default();
    let mut total_fragments = 0usize;
    for inst in &instances {
        let frags = fragments(inst);
        total_fragments += frags.len();
        *fragment_hist.entry(frags.len()).or_insert(0) += 1;
    }
    let report = json!({
        "meta": ctx.meta(),
        "instances": parsed.len(),
        "vocab_size": vocab.size(),
        "missing_label_rate": missing,
        "mean_fragments": total_fragments as f64 / instances.len() as f64,
        "fragment_histogram": fragment_hist,
    });
    write_report(ctx, "stats.json", &report)?;
    Ok(report)
}

fn stats_inputs(ctx: &Ctx) -> Result<(Vec<ParsedInstance>, Vocab, Vec<MpcInstance>), CliError> {
    // stats may run before a vocab exists; build one on the fly if needed
    let parsed = load_corpus_file(&ctx.corpus_path())?;
    let vocab = if ctx.vocab_path().exists() {
        load_vocab_file(&ctx.vocab_path())?
    } else {
        build_vocab(corpus::corpus_texts(&parsed), ctx.cfg.min_freq)?
    };
    let instances = parsed
        .iter()
        .map(|p| MpcInstance::from_parsed(p, &vocab, ctx.cfg.model.max_utt_len))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((parsed, vocab, instances))
}

/// Domain adaptation from random initialization on fully-connected graphs.
pub fn cmd_train(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let (_, vocab, instances) = tokenized(ctx)?;
    let mut model = Model::new(effective_model_config(ctx, &vocab))?;
    let initial_nll = em::evaluate_mean_nll(&model, &instances, &LabelMap::new())?;
    let per_epoch = em::train_adapt(&mut model, &instances, &ctx.cfg.schedule)?;
    let final_nll = em::evaluate_mean_nll(&model, &instances, &LabelMap::new())?;
    let path = save_model(ctx, ADAPT_CKPT, &model)?;
    let report = json!({
        "meta": ctx.meta(),
        "initial_nll": initial_nll,
        "per_epoch_nll": per_epoch,
        "final_nll": final_nll,
        "checkpoint": path.display().to_string(),
    });
    write_report(ctx, "train_report.json", &report)?;
    Ok(report)
}

/// Scores every unlabeled utterance with the adapted model and writes the
/// round-0 silver labels.
pub fn cmd_init_addr(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let (_, vocab, instances) = tokenized(ctx)?;
    let model = load_model(ctx, ADAPT_CKPT, &vocab)?;
    let labels = em::initialize_addressees(&model, &instances)?;
    let path = write_labels(ctx, INIT_LABELS, 0, &labels)?;
    Ok(json!({
        "meta": ctx.meta(),
        "labels": path.display().to_string(),
        "deduced": labels.values().map(|g| g.len()).sum::<usize>(),
    }))
}

/// Alternating E/M rounds from the round-0 labels; writes per-round label
/// files, diagnostics, and the final checkpoint.
pub fn cmd_em(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let (_, vocab, instances) = tokenized(ctx)?;
    let mut model = load_model(ctx, ADAPT_CKPT, &vocab)?;
    let (round, init) = load_labels(&ctx.report_path(INIT_LABELS))?;
    if round != 0 {
        return Err(CliError::Validation(format!(
            "expected round-0 labels, found round {round}"
        )));
    }
    let outcome = em::em_train(&mut model, &instances, &ctx.cfg.schedule, init)?;

    for (k, labels) in outcome.history.iter().enumerate() {
        write_labels(ctx, &format!("labels_round_{k}.json"), k, labels)?;
    }
    write_labels(
        ctx,
        FINAL_LABELS,
        outcome.history.len() - 1,
        outcome.history.last().unwrap(),
    )?;

    let mut diag_lines = vec![serde_json::to_string(&json!({ "_meta": ctx.meta() })).unwrap()];
    for d in &outcome.diagnostics {
        diag_lines.push(serde_json::to_string(d).map_err(|e| CliError::Runtime(e.to_string()))?);
    }
    let diag_path = ctx.report_path("em_diagnostics.jsonl");
    write_atomic(&diag_path, (diag_lines.join("\n") + "\n").as_bytes())?;

    let ckpt = save_model(ctx, EM_CKPT, &model)?;
    let report = json!({
        "meta": ctx.meta(),
        "rounds": outcome.diagnostics.iter().map(|d| json!({
            "round": d.round,
            "label_changes": d.label_changes,
            "mean_expected_ll": d.mean_expected_ll,
            "m_epoch_nll": d.m_epoch_nll,
        })).collect::<Vec<_>>(),
        "checkpoint": ckpt.display().to_string(),
        "diagnostics": diag_path.display().to_string(),
    });
    write_report(ctx, "em_report.json", &report)?;
    Ok(report)
}

/// Deduces addressees for the corpus's unlabeled utterances with the latest
/// checkpoint and scores them against gold, next to the heuristic baselines.
pub fn cmd_deduce(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let (_, vocab, instances) = tokenized(ctx)?;
    let gold = load_gold_file(&ctx.gold_path())?;
    let model = latest_model(ctx, &vocab)?;
    let predicted = em::deduce_with_context(&model, &instances, &LabelMap::new())?;

    let acc = addressee_accuracy(&predicted, &gold)?;
    let prec = addressee_accuracy(&preceding_baseline(&gold)?, &gold)?;
    let rand_acc = addressee_accuracy(&random_baseline(&gold, ctx.cfg.schedule.seed)?, &gold)?;
    let expected = expected_random_accuracy(&gold)?;

    let labels_path = ctx.report_path("labels_deduced.json");
    let labels_body = serde_json::to_string_pretty(&json!({
        "meta": ctx.meta(),
        "labels": predicted,
    }))
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&labels_path, labels_body.as_bytes())?;
    let report = json!({
        "meta": ctx.meta(),
        "n_entries": gold.values().map(|g| g.len()).sum::<usize>(),
        "accuracy": acc,
        "accuracy_preceding": prec,
        "accuracy_random": rand_acc,
        "expected_random_accuracy": expected,
        "labels": labels_path.display().to_string(),
    });
    write_report(ctx, "deduce.json", &report)?;
    Ok(report)
}

#[derive(Serialize, Deserialize)]
struct HypothesesFile {
    #[serde(default)]
    meta: serde_json::Value,
    hypotheses: Vec<Hypothesis>,
}

#[derive(Serialize, Deserialize)]
struct Hypothesis {
    id: String,
    text: String,
}

/// Greedy generation for every instance in the corpus.
pub fn cmd_generate(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let (_, vocab, instances) = tokenized(ctx)?;
    let model = latest_model(ctx, &vocab)?;
    use rayon::prelude::*;
    let hypotheses: Vec<Hypothesis> = instances
        .par_iter()
        .map(|inst| -> Result<Hypothesis, CliError> {
            let graph = build_graph(inst, &Overrides::new()).map_err(ModelError::from)?;
            let ids = model.generate(inst, &graph)?;
            Ok(Hypothesis {
                id: inst.id.clone(),
                text: vocab.decode(&ids),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let file = HypothesesFile {
        meta: ctx.meta(),
        hypotheses,
    };
    let path = ctx.report_path("hypotheses.json");
    let body = serde_json::to_string_pretty(&file).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&path, body.as_bytes())?;
    Ok(json!({
        "meta": ctx.meta(),
        "hypotheses": path.display().to_string(),
        "count": file.hypotheses.len(),
    }))
}

/// Scores a hypotheses file against the corpus responses; adds addressee
/// accuracy when deduced labels and gold both exist.
pub fn cmd_eval(ctx: &Ctx) -> Result<serde_json::Value, CliError> {
    let parsed = load_corpus_file(&ctx.corpus_path())?;
    let hyp_path = ctx.report_path("hypotheses.json");
    require(&hyp_path, "hypotheses file")?;
    let text = fs::read_to_string(&hyp_path).map_err(io_runtime("read hypotheses"))?;
    let file: HypothesesFile =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("hypotheses: {e}")))?;

    let refs_by_id: std::collections::BTreeMap<&str, &str> = parsed
        .iter()
        .map(|i| (i.id.as_str(), i.response.text.as_str()))
        .collect();
    let split = |s: &str| -> Vec<String> {
        s.to_lowercase().split_whitespace().map(|t| t.to_string()).collect()
    };
    let mut hyps = Vec::with_capacity(file.hypotheses.len());
    let mut refs = Vec::with_capacity(file.hypotheses.len());
    for h in &file.hypotheses {
        let r = refs_by_id.get(h.id.as_str()).ok_or_else(|| {
            CliError::Validation(format!("hypothesis {} has no matching corpus instance", h.id))
        })?;
        hyps.push(split(&h.text));
        refs.push(split(r));
    }

    let mut report = EvalReport::compute(&hyps, &refs)?;
    let labels_path = ctx.report_path(FINAL_LABELS);
    if labels_path.exists() && ctx.gold_path().exists() {
        let (_, labels) = load_labels(&labels_path)?;
        let gold = load_gold_file(&ctx.gold_path())?;
        report.addressee_accuracy = Some(addressee_accuracy(&labels, &gold)?);
    }

    let value = json!({
        "meta": ctx.meta(),
        "report": report,
    });
    write_report(ctx, "eval.json", &value)?;
    println!("{}", report.table());
    Ok(value)
}

fn write_report(ctx: &Ctx, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    let body =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&ctx.report_path(name), body.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_config() -> RunConfig {
        RunConfig {
            version: CONFIG_VERSION,
            model: ModelConfig {
                d_model: 16,
                n_heads: 2,
                n_init_layers: 1,
                n_graph_iters: 1,
                n_dec_layers: 1,
                max_utt_len: 10,
                max_gen_len: 10,
                max_interlocutors: 4,
                seed: 5,
                ..ModelConfig::default()
            },
            schedule: TrainSchedule::default(),
            synth: SynthConfig::default(),
            min_freq: 1,
            paths: Paths::default(),
        }
    }

    #[test]
    fn config_round_trips_losslessly() {
        let cfg = demo_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
    }

    #[test]
    fn config_hash_ignores_paths_but_not_seeds() {
        let cfg = demo_config();
        let mut other_paths = cfg.clone();
        other_paths.paths.corpus = "/elsewhere/c.jsonl".into();
        assert_eq!(cfg.config_hash(), other_paths.config_hash());

        let mut other_seed = cfg.clone();
        other_seed.override_seed(99);
        assert_ne!(cfg.config_hash(), other_seed.config_hash());
    }

    #[test]
    fn version_is_checked() {
        let dir = std::env::temp_dir().join("madnet-cli-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad_version.json");
        let mut cfg = serde_json::to_value(demo_config()).unwrap();
        cfg["version"] = json!(42);
        fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let err = RunConfig::from_file(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        fs::remove_file(&path).ok();
    }
}
