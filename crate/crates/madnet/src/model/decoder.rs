//! Transformer decoder over graph node states: teacher-forced likelihood
//! scoring and greedy generation.

use crate::corpus::{MpcInstance, BOS, EOS};
use crate::graph::HeteroGraph;
use crate::numerics::{causal_mask, concat_rows, Tape, Var};

use super::layers::decoder_layer;
use super::{Bound, Model, ModelError, NodeStates};

/// Teacher-forced response likelihood.
#[derive(Debug, Clone)]
pub struct ResponseNll {
    /// `-sum(log_probs)` over the response tokens.
    pub nll: f64,
    /// Natural-log probability of each response token given its prefix.
    pub log_probs: Vec<f64>,
}

impl Model {
    /// Per-position target log-probabilities for teacher forcing: inputs are
    /// `BOS + tokens`, targets are `tokens + EOS`, so the result has
    /// `len(tokens) + 1` rows.
    pub fn decode_log_probs<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        states: &NodeStates<'t>,
        tokens: &[u32],
    ) -> Result<Var<'t>, ModelError> {
        let mut inputs = Vec::with_capacity(tokens.len() + 1);
        inputs.push(BOS);
        inputs.extend_from_slice(tokens);
        let mut targets = Vec::with_capacity(tokens.len() + 1);
        targets.extend_from_slice(tokens);
        targets.push(EOS);
        let logits = self.run_decoder(tape, b, states, &inputs)?;
        Ok(logits.log_softmax_rows().pick_per_row(&targets))
    }

    /// Negative log-likelihood of the instance's response under the graph,
    /// with the per-token terms. Responses longer than `max_gen_len` are
    /// scored on their truncated prefix.
    pub fn response_nll(
        &self,
        inst: &MpcInstance,
        graph: &HeteroGraph,
    ) -> Result<ResponseNll, ModelError> {
        let tape = Tape::no_grad();
        let b = self.bind(&tape);
        let states = self.encode(&tape, &b, inst, graph)?;
        let tokens = self.clamped_response(inst);
        let terms = self.decode_log_probs(&tape, &b, &states, tokens)?;
        let values = terms.value();
        values.ensure_finite("response log-probs")?;
        // the terminal EOS term is a training signal, not part of the
        // response likelihood
        let log_probs: Vec<f64> = values.data()[..tokens.len()].to_vec();
        Ok(ResponseNll {
            nll: -log_probs.iter().sum::<f64>(),
            log_probs,
        })
    }

    /// Mean per-token training loss (response tokens plus the end-of-sequence
    /// prediction, so greedy decoding learns to stop).
    pub fn loss<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        inst: &MpcInstance,
        graph: &HeteroGraph,
    ) -> Result<Var<'t>, ModelError> {
        let states = self.encode(tape, b, inst, graph)?;
        let tokens = self.clamped_response(inst);
        let terms = self.decode_log_probs(tape, b, &states, tokens)?;
        Ok(terms.mean_all().scale(-1.0))
    }

    /// Greedy decoding from BOS until EOS or `max_gen_len`; ties break toward
    /// the lowest token id.
    pub fn generate(&self, inst: &MpcInstance, graph: &HeteroGraph) -> Result<Vec<u32>, ModelError> {
        let tape = Tape::no_grad();
        let b = self.bind(&tape);
        let states = self.encode(&tape, &b, inst, graph)?;
        let mut out: Vec<u32> = Vec::new();
        while out.len() < self.cfg.max_gen_len {
            let mut inputs = Vec::with_capacity(out.len() + 1);
            inputs.push(BOS);
            inputs.extend_from_slice(&out);
            let logits = self.run_decoder(&tape, &b, &states, &inputs)?;
            let last = logits.value();
            let row = last.row_slice(last.rows() - 1);
            let mut best = 0usize;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            if best as u32 == EOS {
                break;
            }
            out.push(best as u32);
        }
        Ok(out)
    }

    fn run_decoder<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        states: &NodeStates<'t>,
        inputs: &[u32],
    ) -> Result<Var<'t>, ModelError> {
        let cfg = &self.cfg;
        for &id in inputs {
            if id as usize >= cfg.vocab_size {
                return Err(ModelError::BadToken {
                    id,
                    vocab: cfg.vocab_size,
                });
            }
        }
        let t_len = inputs.len();
        let memory = concat_rows(tape, &states.nodes);
        let mut x = b
            .get("emb.tok")
            .embed(inputs)
            .add(b.get("emb.pos").rows_range(0, t_len));
        let mask = causal_mask(t_len);
        for l in 0..cfg.n_dec_layers {
            x = decoder_layer(tape, b, &format!("dec.{l}"), x, memory, &mask, cfg.n_heads);
        }
        Ok(x.matmul(b.get("out.w")).add_row(b.get("out.b")))
    }

    fn clamped_response<'a>(&self, inst: &'a MpcInstance) -> &'a [u32] {
        let tokens = &inst.response.tokens;
        if tokens.len() > self.cfg.max_gen_len {
            log::warn!(
                "instance {}: response of {} tokens truncated to {}",
                inst.id,
                tokens.len(),
                self.cfg.max_gen_len
            );
            &tokens[..self.cfg.max_gen_len]
        } else {
            tokens
        }
    }
}
