//! The generation model: token-level utterance encoding, heterogeneous
//! edge-type-dependent graph iteration, and a Transformer decoder that
//! cross-attends over the graph's node states.

mod decoder;
mod encoder;
mod layers;

pub use decoder::ResponseNll;
pub use encoder::NodeStates;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeType, GraphError};
use crate::numerics::{Array, Gradients, NumericsError, ParamMap, Tape, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance has {found} interlocutors but the embedding table holds {capacity}")]
    Capacity { found: usize, capacity: usize },
    #[error("token id {id} out of vocabulary range {vocab}")]
    BadToken { id: u32, vocab: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Degenerate modes used by property tests (`--diagnostic` flag family).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    /// Skip positional embeddings during node initialization.
    #[serde(default)]
    pub no_positional: bool,
    /// Treat every pair class as its latent default during graph iteration,
    /// erasing reply/speaker structure.
    #[serde(default)]
    pub uniform_latent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_init_layers: usize,
    /// May be 0 in diagnostic runs, making encode degenerate to init_nodes.
    pub n_graph_iters: usize,
    pub n_dec_layers: usize,
    pub ffn_mult: usize,
    #[serde(default)]
    pub vocab_size: usize,
    pub max_utt_len: usize,
    pub max_gen_len: usize,
    pub max_interlocutors: usize,
    pub seed: u64,
    #[serde(default)]
    pub diagnostic: DiagnosticOptions,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 2,
            n_init_layers: 3,
            n_graph_iters: 3,
            n_dec_layers: 6,
            ffn_mult: 2,
            vocab_size: 0,
            max_utt_len: 50,
            max_gen_len: 50,
            max_interlocutors: 8,
            seed: 1,
            diagnostic: DiagnosticOptions::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_init_layers == 0 || self.n_dec_layers == 0 || self.ffn_mult == 0 {
            return Err(ModelError::Config("layer counts must be >= 1".into()));
        }
        if self.vocab_size < 5 {
            return Err(ModelError::Config("vocab_size must cover the reserved tokens".into()));
        }
        if self.max_utt_len == 0 || self.max_gen_len == 0 || self.max_interlocutors == 0 {
            return Err(ModelError::Config("length limits must be >= 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Positional table length: position 0 is the node slot, so the longest
    /// token sequence plus one.
    pub fn pos_rows(&self) -> usize {
        self.max_utt_len.max(self.max_gen_len) + 1
    }
}

pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamMap,
}

/// Per-tape bindings of every named parameter, so each parameter is a single
/// leaf per forward pass and gradients accumulate in one slot.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Var<'t> {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    /// Binds explicitly provided variables instead of fresh leaves. Lets a
    /// caller route parameters through existing tape nodes, e.g. slices of
    /// one flat array during whole-model gradient checking.
    pub fn from_vars(vars: BTreeMap<String, Var<'t>>) -> Bound<'t> {
        Bound { vars }
    }
}

const NODE_TYPES: [&str; 2] = ["utt", "int"];

impl Model {
    /// Fresh model with seed-controlled scaled-normal initialization.
    pub fn new(cfg: ModelConfig) -> Result<Model, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.d_model;
        let f = cfg.ffn_mult * d;
        let v = cfg.vocab_size;
        let dk = cfg.head_dim();

        let mut params = ParamMap::new();
        let emb = |params: &mut ParamMap, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            params.insert(name.to_string(), normal(rows, cols, 0.1, rng));
        };
        emb(&mut params, "emb.tok", v, d, &mut rng);
        emb(&mut params, "emb.pos", cfg.pos_rows(), d, &mut rng);
        emb(&mut params, "emb.int", cfg.max_interlocutors, d, &mut rng);
        emb(&mut params, "emb.node", 1, d, &mut rng);
        emb(&mut params, "emb.mask", 1, d, &mut rng);

        for l in 0..cfg.n_init_layers {
            insert_layer(&mut params, &format!("enc.init.{l}"), d, f, &mut rng);
        }
        for l in 0..cfg.n_graph_iters {
            insert_layer(&mut params, &format!("enc.iter.{l}"), d, f, &mut rng);
        }

        for ty in NODE_TYPES {
            params.insert(format!("het.q.{ty}"), linear(d, d, &mut rng));
            params.insert(format!("het.k.{ty}"), linear(d, d, &mut rng));
            params.insert(format!("het.v.{ty}"), linear(d, d, &mut rng));
            params.insert(format!("het.ffn.{ty}.w1"), linear(d, f, &mut rng));
            params.insert(format!("het.ffn.{ty}.b1"), Array::zeros(1, f));
            params.insert(format!("het.ffn.{ty}.w2"), linear(f, d, &mut rng));
            params.insert(format!("het.ffn.{ty}.b2"), Array::zeros(1, d));
            params.insert(format!("het.ln.{ty}.g"), Array::filled(1, d, 1.0));
            params.insert(format!("het.ln.{ty}.b"), Array::zeros(1, d));
        }
        for ty in EdgeType::ALL {
            let code = ty.code();
            params.insert(format!("het.a.{code}"), stacked_identity(cfg.n_heads, dk, &mut rng));
            params.insert(format!("het.b.{code}"), stacked_identity(cfg.n_heads, dk, &mut rng));
        }

        for l in 0..cfg.n_dec_layers {
            let p = format!("dec.{l}");
            insert_attention(&mut params, &format!("{p}.self"), d, &mut rng);
            insert_attention(&mut params, &format!("{p}.cross"), d, &mut rng);
            params.insert(format!("{p}.ln1.g"), Array::filled(1, d, 1.0));
            params.insert(format!("{p}.ln1.b"), Array::zeros(1, d));
            params.insert(format!("{p}.ln2.g"), Array::filled(1, d, 1.0));
            params.insert(format!("{p}.ln2.b"), Array::zeros(1, d));
            params.insert(format!("{p}.ln3.g"), Array::filled(1, d, 1.0));
            params.insert(format!("{p}.ln3.b"), Array::zeros(1, d));
            params.insert(format!("{p}.ffn.w1"), linear(d, f, &mut rng));
            params.insert(format!("{p}.ffn.b1"), Array::zeros(1, f));
            params.insert(format!("{p}.ffn.w2"), linear(f, d, &mut rng));
            params.insert(format!("{p}.ffn.b2"), Array::zeros(1, d));
        }

        // the output projection starts as the transposed token table (it
        // stays an independent parameter), so content routed into the
        // decoder state aligns with the matching token logits from step one
        let tok_t = params["emb.tok"].transpose();
        params.insert("out.w".to_string(), tok_t);
        params.insert("out.b".to_string(), Array::zeros(1, v));

        Ok(Model { cfg, params })
    }

    pub fn from_params(cfg: ModelConfig, params: ParamMap) -> Result<Model, ModelError> {
        cfg.validate()?;
        let expected = Model::new(cfg.clone())?;
        for (name, arr) in &expected.params {
            let found = params.get(name).ok_or_else(|| {
                ModelError::Config(format!("checkpoint is missing parameter {name:?}"))
            })?;
            if found.shape() != arr.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    found.shape(),
                    arr.shape()
                )));
            }
        }
        if params.len() != expected.params.len() {
            return Err(ModelError::Config(format!(
                "checkpoint holds {} parameters, expected {}",
                params.len(),
                expected.params.len()
            )));
        }
        Ok(Model { cfg, params })
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        let vars = self
            .params
            .iter()
            .map(|(name, arr)| (name.clone(), tape.leaf(arr.clone())))
            .collect();
        Bound { vars }
    }

    /// Extracts a gradient map aligned with the parameter map.
    pub fn grad_map(&self, bound: &Bound<'_>, grads: &Gradients) -> ParamMap {
        self.params
            .keys()
            .map(|name| (name.clone(), grads.get(bound.get(name))))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Array {
    let dist = Normal::new(0.0, std).expect("valid normal");
    Array::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

fn linear(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Array {
    normal(fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng)
}

/// Per-head `[dk, dk]` blocks stacked into `[heads*dk, dk]`, initialized
/// near the identity so untuned edge-type maps start as plain dot-product
/// attention with mild symmetry breaking.
fn stacked_identity(heads: usize, dk: usize, rng: &mut ChaCha8Rng) -> Array {
    let noise = Normal::new(0.0, 0.02).expect("valid normal");
    let mut data = vec![0.0; heads * dk * dk];
    for h in 0..heads {
        for i in 0..dk {
            for j in 0..dk {
                let base = if i == j { 1.0 } else { 0.0 };
                data[(h * dk + i) * dk + j] = base + noise.sample(rng);
            }
        }
    }
    Array::from_vec(heads * dk, dk, data)
}

// no key bias: softmax scores are invariant to a constant shift per query
// row, which would make it a dead parameter
fn insert_attention(params: &mut ParamMap, prefix: &str, d: usize, rng: &mut ChaCha8Rng) {
    params.insert(format!("{prefix}.wq"), linear(d, d, rng));
    params.insert(format!("{prefix}.bq"), Array::zeros(1, d));
    params.insert(format!("{prefix}.wk"), linear(d, d, rng));
    params.insert(format!("{prefix}.wv"), linear(d, d, rng));
    params.insert(format!("{prefix}.bv"), Array::zeros(1, d));
    params.insert(format!("{prefix}.wo"), linear(d, d, rng));
    params.insert(format!("{prefix}.bo"), Array::zeros(1, d));
}

fn insert_layer(params: &mut ParamMap, prefix: &str, d: usize, f: usize, rng: &mut ChaCha8Rng) {
    insert_attention(params, &format!("{prefix}.attn"), d, rng);
    params.insert(format!("{prefix}.ln1.g"), Array::filled(1, d, 1.0));
    params.insert(format!("{prefix}.ln1.b"), Array::zeros(1, d));
    params.insert(format!("{prefix}.ffn.w1"), linear(d, f, rng));
    params.insert(format!("{prefix}.ffn.b1"), Array::zeros(1, f));
    params.insert(format!("{prefix}.ffn.w2"), linear(f, d, rng));
    params.insert(format!("{prefix}.ffn.b2"), Array::zeros(1, d));
    params.insert(format!("{prefix}.ln2.g"), Array::filled(1, d, 1.0));
    params.insert(format!("{prefix}.ln2.b"), Array::zeros(1, d));
}
