//! Node initialization and heterogeneous graph iteration.

use crate::corpus::{MpcInstance, PAD};
use crate::graph::{EdgeType, HeteroGraph};
use crate::numerics::{attention_mask, concat_cols, concat_picked_rows, concat_rows, Array, Tape, Var};

use super::layers::{feed_forward, transformer_layer};
use super::{Bound, Model, ModelError, LN_EPS};

/// Encoder state: one vector per graph node (utterances first, response at
/// index `M`, then interlocutors) plus per-utterance token-level states.
pub struct NodeStates<'t> {
    pub nodes: Vec<Var<'t>>,
    /// Token states per utterance node, `[T_u, d]` each (the response node's
    /// content is its masked slot, a single row).
    pub tokens: Vec<Var<'t>>,
    /// Additive `[1+T, 1+T]` self-attention masks hiding PAD positions;
    /// `None` when the utterance has no padding.
    pad_masks: Vec<Option<Array>>,
}

fn cached<'t>(slot: &mut Option<Var<'t>>, make: impl FnOnce() -> Var<'t>) -> Var<'t> {
    if slot.is_none() {
        *slot = Some(make());
    }
    slot.unwrap()
}

impl Model {
    /// Encodes each utterance with the token-level Transformer stack and
    /// initializes node vectors: utterance nodes read out position 0 of
    /// `[NODE; tokens]`, the response node encodes a masked content slot,
    /// and interlocutor nodes come from the order-based embedding table.
    pub fn init_nodes<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        inst: &MpcInstance,
    ) -> Result<NodeStates<'t>, ModelError> {
        let cfg = &self.cfg;
        if inst.n_interlocutors > cfg.max_interlocutors {
            return Err(ModelError::Capacity {
                found: inst.n_interlocutors,
                capacity: cfg.max_interlocutors,
            });
        }
        for u in inst.utterances.iter().chain(std::iter::once(&inst.response)) {
            for &id in &u.tokens {
                if id as usize >= cfg.vocab_size {
                    return Err(ModelError::BadToken {
                        id,
                        vocab: cfg.vocab_size,
                    });
                }
            }
        }

        let m = inst.m();
        let mut nodes = Vec::with_capacity(m + 1 + inst.n_interlocutors);
        let mut tokens = Vec::with_capacity(m + 1);
        let mut pad_masks = Vec::with_capacity(m + 1);

        for u in 0..=m {
            let (content, pad_mask) = if u < m {
                let ids = &inst.utterances[u].tokens;
                let ids = &ids[..ids.len().min(cfg.max_utt_len)];
                let content = b.get("emb.tok").embed(ids);
                let mask = if ids.contains(&PAD) {
                    Some(attention_mask(
                        |_, k| k == 0 || ids[k - 1] != PAD,
                        ids.len() + 1,
                        ids.len() + 1,
                    ))
                } else {
                    None
                };
                (content, mask)
            } else {
                // response node: content is the learned masked-slot embedding
                (b.get("emb.mask"), None)
            };
            let rows = content.shape().0 + 1;
            let mut x = concat_rows(tape, &[b.get("emb.node"), content]);
            if !cfg.diagnostic.no_positional {
                x = x.add(b.get("emb.pos").rows_range(0, rows));
            }
            for l in 0..cfg.n_init_layers {
                x = transformer_layer(
                    tape,
                    b,
                    &format!("enc.init.{l}"),
                    x,
                    pad_mask.as_ref(),
                    cfg.n_heads,
                );
            }
            nodes.push(x.row(0));
            tokens.push(x.rows_range(1, rows - 1));
            pad_masks.push(pad_mask);
        }

        for i in 0..inst.n_interlocutors {
            nodes.push(b.get("emb.int").row(i));
        }

        Ok(NodeStates {
            nodes,
            tokens,
            pad_masks,
        })
    }

    /// One round of heterogeneous message passing. Every node attends over
    /// its incoming edges with node-type Q/K/V projections and edge-type
    /// attention/message maps, aggregates per head, and updates through its
    /// node-type feed-forward block with a residual and layer norm; utterance
    /// nodes then refresh their token states through the iteration's
    /// token-level Transformer layer.
    pub fn graph_iterate<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        states: &NodeStates<'t>,
        graph: &HeteroGraph,
        iter_index: usize,
    ) -> Result<NodeStates<'t>, ModelError> {
        let cfg = &self.cfg;
        let n_utt = graph.n_utt();
        let n_int = graph.n_int();
        let n = n_utt + n_int;
        assert_eq!(states.nodes.len(), n, "state/graph node count mismatch");
        let n_heads = cfg.n_heads;
        let dk = cfg.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();

        // node-type projections over stacked node states
        let utt_stack = concat_rows(tape, &states.nodes[..n_utt]);
        let int_stack = concat_rows(tape, &states.nodes[n_utt..]);
        let project = |which: &str| {
            let u = utt_stack.matmul(b.get(&format!("het.{which}.utt")));
            let i = int_stack.matmul(b.get(&format!("het.{which}.int")));
            concat_rows(tape, &[u, i])
        };
        let q_all = project("q");
        let k_all = project("k");
        let v_all = project("v");

        // per-(edge type, head) key/message transforms, built lazily so only
        // edge types present in the graph cost anything
        let mut ak: Vec<Option<Var<'t>>> = vec![None; EdgeType::COUNT * n_heads];
        let mut bv: Vec<Option<Var<'t>>> = vec![None; EdgeType::COUNT * n_heads];
        let mut k_heads: Vec<Option<Var<'t>>> = vec![None; n_heads];
        let mut v_heads: Vec<Option<Var<'t>>> = vec![None; n_heads];

        let effective = |ty: EdgeType, p: usize, q: usize| -> EdgeType {
            if !cfg.diagnostic.uniform_latent {
                return ty;
            }
            match (graph.is_utterance(p), graph.is_utterance(q)) {
                (true, true) => EdgeType::LatentReply,
                (true, false) => EdgeType::LatentAddress,
                (false, true) => EdgeType::LatentAddressedBy,
                (false, false) => unreachable!("interlocutor pairs carry no edges"),
            }
        };

        let mut updated = Vec::with_capacity(n);
        for q in 0..n {
            let sources: Vec<(usize, EdgeType)> = graph
                .sources_into(q)
                .map(|(p, ty)| (p, effective(ty, p, q)))
                .collect();
            assert!(!sources.is_empty(), "fully-connected graph has sources for every node");
            let mut head_outputs = Vec::with_capacity(n_heads);
            for h in 0..n_heads {
                let kh = cached(&mut k_heads[h], || k_all.cols_range(h * dk, dk));
                let vh = cached(&mut v_heads[h], || v_all.cols_range(h * dk, dk));
                let key_parts: Vec<(Var<'t>, usize)> = sources
                    .iter()
                    .map(|&(p, ty)| {
                        let var = cached(&mut ak[ty.code() as usize * n_heads + h], || {
                            let a_h = b
                                .get(&format!("het.a.{}", ty.code()))
                                .rows_range(h * dk, dk);
                            kh.matmul(a_h.transpose())
                        });
                        (var, p)
                    })
                    .collect();
                let msg_parts: Vec<(Var<'t>, usize)> = sources
                    .iter()
                    .map(|&(p, ty)| {
                        let var = cached(&mut bv[ty.code() as usize * n_heads + h], || {
                            let b_h = b
                                .get(&format!("het.b.{}", ty.code()))
                                .rows_range(h * dk, dk);
                            vh.matmul(b_h.transpose())
                        });
                        (var, p)
                    })
                    .collect();
                let keys = concat_picked_rows(tape, &key_parts);
                let msgs = concat_picked_rows(tape, &msg_parts);
                let q_row = q_all.row(q).cols_range(h * dk, dk);
                let weights = keys
                    .matmul(q_row.transpose())
                    .transpose()
                    .scale(scale)
                    .softmax_rows();
                head_outputs.push(weights.matmul(msgs));
            }
            let agg = concat_cols(tape, &head_outputs);
            let ty = if graph.is_utterance(q) { "utt" } else { "int" };
            let f = feed_forward(b, &format!("het.ffn.{ty}"), agg);
            let new_state = states.nodes[q].add(f).layer_norm(
                b.get(&format!("het.ln.{ty}.g")),
                b.get(&format!("het.ln.{ty}.b")),
                LN_EPS,
            );
            updated.push(new_state);
        }

        // token-level refresh for utterance nodes
        let mut tokens = Vec::with_capacity(n_utt);
        for (u, node) in updated.iter_mut().enumerate().take(n_utt) {
            let seq = concat_rows(tape, &[*node, states.tokens[u]]);
            let rows = seq.shape().0;
            let out = transformer_layer(
                tape,
                b,
                &format!("enc.iter.{iter_index}"),
                seq,
                states.pad_masks[u].as_ref(),
                n_heads,
            );
            *node = out.row(0);
            tokens.push(out.rows_range(1, rows - 1));
        }

        Ok(NodeStates {
            nodes: updated,
            tokens,
            pad_masks: states.pad_masks.clone(),
        })
    }

    /// Full encoder: node initialization followed by `n_graph_iters` rounds
    /// of graph iteration.
    pub fn encode<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        inst: &MpcInstance,
        graph: &HeteroGraph,
    ) -> Result<NodeStates<'t>, ModelError> {
        let mut states = self.init_nodes(tape, b, inst)?;
        for iter in 0..self.cfg.n_graph_iters {
            states = self.graph_iterate(tape, b, &states, graph, iter)?;
        }
        Ok(states)
    }
}
