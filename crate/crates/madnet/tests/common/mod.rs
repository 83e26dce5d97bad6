//! Shared helpers for integration tests: random instances, tiny model
//! configurations, graph invariant checks, and whole-model gradient checking.
#![allow(dead_code)]

use madnet::corpus::{MpcInstance, Utterance};
use madnet::model::{Bound, DiagnosticOptions, Model, ModelConfig};
use madnet::numerics::{concat_rows, grad_check, Array, ParamMap, Tape, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Vocabulary size used by the hand-built test instances.
pub const TEST_VOCAB: usize = 12;

/// A random instance with labeled/unlabeled mix; tokens in `5..TEST_VOCAB`.
pub fn random_instance(rng: &mut ChaCha8Rng, m_max: usize, i_max: usize) -> MpcInstance {
    let m = rng.random_range(2..=m_max.max(2));
    let n_int = rng.random_range(2..=i_max.max(2)).min(m);
    let utterances: Vec<Utterance> = (0..m)
        .map(|i| {
            let speaker = if i < n_int { i } else { rng.random_range(0..n_int) };
            let reply_to = if i >= 1 && rng.random::<f64>() < 0.6 {
                Some(rng.random_range(0..i))
            } else {
                None
            };
            let len = rng.random_range(1..=4);
            Utterance {
                speaker,
                reply_to,
                tokens: (0..len).map(|_| rng.random_range(5..TEST_VOCAB as u32)).collect(),
            }
        })
        .collect();
    let response = Utterance {
        speaker: rng.random_range(0..n_int),
        reply_to: Some(m - 1),
        tokens: (0..rng.random_range(1..=4))
            .map(|_| rng.random_range(5..TEST_VOCAB as u32))
            .collect(),
    };
    MpcInstance {
        id: format!("rand-{}", rng.random::<u32>()),
        utterances,
        response,
        n_interlocutors: n_int,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_init_layers: 1,
        n_graph_iters: 1,
        n_dec_layers: 1,
        ffn_mult: 2,
        vocab_size: TEST_VOCAB,
        max_utt_len: 6,
        max_gen_len: 6,
        max_interlocutors: 6,
        seed: 11,
        diagnostic: DiagnosticOptions::default(),
    }
}

pub fn tiny_model(seed: u64) -> Model {
    Model::new(ModelConfig {
        seed,
        ..tiny_config()
    })
    .expect("tiny model")
}

/// Exhaustive structural check of a built graph against its instance: the
/// edge-count formula, one-type-per-pair totality, inverse symmetry, the
/// explicit/latent partition, latent directionality, and the absence of
/// interlocutor-interlocutor edges.
pub fn check_graph_invariants(inst: &MpcInstance, g: &madnet::graph::HeteroGraph) {
    use madnet::graph::{EdgeType, NodeRef};

    let n_utt = inst.m() + 1;
    let n_int = inst.n_interlocutors;
    assert_eq!(
        g.directed_edge_count(),
        n_utt * (n_utt - 1) + 2 * n_utt * n_int,
        "edge count formula"
    );

    for a in 0..n_utt {
        for b in 0..n_utt {
            if a == b {
                assert!(g.edge_type(NodeRef::Utterance(a), NodeRef::Utterance(b)).is_err());
                continue;
            }
            let fwd = g.edge_type(NodeRef::Utterance(a), NodeRef::Utterance(b)).unwrap();
            let bwd = g.edge_type(NodeRef::Utterance(b), NodeRef::Utterance(a)).unwrap();
            assert_eq!(fwd.inverse(), bwd);
            assert!(matches!(
                fwd,
                EdgeType::Reply
                    | EdgeType::RepliedBy
                    | EdgeType::LatentReply
                    | EdgeType::LatentRepliedBy
            ));
            assert_eq!(fwd.is_latent(), bwd.is_latent(), "partition invariant");
            if fwd == EdgeType::LatentReply {
                assert!(a > b, "latent-reply direction");
            }
        }
    }
    for u in 0..n_utt {
        for i in 0..n_int {
            let fwd = g.edge_type(NodeRef::Utterance(u), NodeRef::Interlocutor(i)).unwrap();
            let bwd = g.edge_type(NodeRef::Interlocutor(i), NodeRef::Utterance(u)).unwrap();
            assert_eq!(fwd.inverse(), bwd);
            assert!(matches!(
                fwd,
                EdgeType::SpokenBy | EdgeType::Address | EdgeType::LatentAddress
            ));
        }
    }
    for a in 0..n_int {
        for b in 0..n_int {
            assert!(g
                .edge_type(NodeRef::Interlocutor(a), NodeRef::Interlocutor(b))
                .is_err());
        }
    }
}

/// Stacks a `[1, r*c]` row into `[r, c]` through the slicing ops.
pub fn reshape_rows(v: Var<'_>, rows: usize, cols: usize) -> Var<'_> {
    assert_eq!(v.shape(), (1, rows * cols));
    if rows == 1 {
        return v;
    }
    let parts: Vec<Var<'_>> = (0..rows).map(|r| v.cols_range(r * cols, cols)).collect();
    concat_rows(v.tape(), &parts)
}

/// Flattens all model parameters into one leaf, rebuilds the bindings inside
/// the probe closure, and gradient-checks `f` over every coordinate with
/// central differences (eps 1e-5). Returns the max relative error.
pub fn model_grad_check<F>(model: &Model, f: F) -> f64
where
    F: for<'t> Fn(&Model, &'t Tape, &Bound<'t>) -> Var<'t>,
{
    let total: usize = model.params.values().map(|a| a.len()).sum();
    let mut flat = Vec::with_capacity(total);
    for arr in model.params.values() {
        flat.extend_from_slice(arr.data());
    }
    let theta = Array::from_vec(1, total, flat);
    let cfg = model.cfg.clone();
    let names: Vec<(String, (usize, usize))> = model
        .params
        .iter()
        .map(|(n, a)| (n.clone(), a.shape()))
        .collect();

    grad_check(
        move |tape, leaf| {
            let mut params = ParamMap::new();
            let mut offset = 0usize;
            let mut vars = std::collections::BTreeMap::new();
            for (name, (r, c)) in &names {
                let v = reshape_rows(leaf.cols_range(offset, r * c), *r, *c);
                offset += r * c;
                vars.insert(name.clone(), v);
                params.insert(name.clone(), v.value());
            }
            // constructed directly: the forward pass reads parameters
            // through the Bound, and re-validating per probe would dominate
            // the runtime
            let rebuilt = Model { cfg: cfg.clone(), params };
            let bound = Bound::from_vars(vars);
            f(&rebuilt, tape, &bound)
        },
        &theta,
        1e-5,
    )
    .unwrap()
}
