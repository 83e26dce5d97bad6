//! Finite-difference verification of every differentiable operation and of
//! the full encoder+decoder likelihood.

mod common;

use common::{model_grad_check, random_instance, reshape_rows, seeded};
use madnet::corpus::{MpcInstance, Utterance};
use madnet::graph::{build_graph, Overrides};
use madnet::numerics::{concat_cols, concat_picked_rows, concat_rows, grad_check, Array, Var};
use rand::Rng;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn random_array(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Array {
    Array::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
}

/// Splits a flat leaf into two matrices so binary ops get checked against
/// both inputs at once.
fn split2<'t>(theta: Var<'t>, r1: usize, c1: usize, r2: usize, c2: usize) -> (Var<'t>, Var<'t>) {
    let a = reshape_rows(theta.cols_range(0, r1 * c1), r1, c1);
    let b = reshape_rows(theta.cols_range(r1 * c1, r2 * c2), r2, c2);
    (a, b)
}

#[test]
fn op_matmul_and_add() {
    let mut rng = seeded(1);
    let theta = random_array(&mut rng, 1, 3 * 4 + 4 * 2);
    let err = grad_check(
        |_, t| {
            let (a, b) = split2(t, 3, 4, 4, 2);
            a.matmul(b).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "matmul: {err}");

    let theta = random_array(&mut rng, 1, 2 * 3 * 2);
    let err = grad_check(
        |_, t| {
            let (a, b) = split2(t, 2, 3, 2, 3);
            a.add(b).mul(a).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "add/mul: {err}");
}

#[test]
fn op_scale_transpose_concat() {
    let mut rng = seeded(2);
    let theta = random_array(&mut rng, 1, 12);
    let err = grad_check(
        |t, v| {
            let m = reshape_rows(v, 3, 4);
            let halves = concat_cols(t, &[m.cols_range(0, 2), m.cols_range(2, 2).scale(-1.5)]);
            halves.transpose().matmul(m).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "scale/transpose/concat_cols: {err}");

    let theta = random_array(&mut rng, 1, 10);
    let err = grad_check(
        |t, v| {
            let m = reshape_rows(v, 5, 2);
            let picked = concat_picked_rows(t, &[(m, 3), (m, 0), (m, 3)]);
            picked.mul(picked).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "concat_picked_rows: {err}");
}

#[test]
fn op_relu_softmax_logsoftmax() {
    let mut rng = seeded(3);
    // keep relu inputs away from the kink
    let mut theta = random_array(&mut rng, 1, 12);
    for x in theta.make_mut() {
        if x.abs() < 0.05 {
            *x = 0.1_f64.copysign(*x);
        }
    }
    let err = grad_check(|_, v| reshape_rows(v, 3, 4).relu().mul(reshape_rows(v, 3, 4)).sum_all(), &theta, EPS).unwrap();
    assert!(err < TOL, "relu: {err}");

    let theta = random_array(&mut rng, 1, 12);
    let weights = random_array(&mut rng, 3, 4);
    let err = grad_check(
        |t, v| {
            let w = t.constant(weights.clone());
            reshape_rows(v, 3, 4).softmax_rows().mul(w).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "softmax: {err}");

    let theta = random_array(&mut rng, 1, 12);
    let err = grad_check(
        |_, v| reshape_rows(v, 3, 4).log_softmax_rows().pick_per_row(&[1, 0, 3]).sum_all(),
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "log_softmax/pick_per_row: {err}");
}

#[test]
fn op_layer_norm_add_row_mean() {
    let mut rng = seeded(4);
    let theta = random_array(&mut rng, 1, 3 * 4 + 4 + 4 + 4);
    let err = grad_check(
        |_, t| {
            let x = reshape_rows(t.cols_range(0, 12), 3, 4);
            let gain = t.cols_range(12, 4);
            let bias = t.cols_range(16, 4);
            let row = t.cols_range(20, 4);
            x.add_row(row).layer_norm(gain, bias, 1e-5).mul(x).mean_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "layer_norm/add_row/mean: {err}");
}

#[test]
fn op_embed_and_cross_entropy() {
    let mut rng = seeded(5);
    let theta = random_array(&mut rng, 1, 6 * 3);
    let err = grad_check(
        |_, t| {
            let table = reshape_rows(t, 6, 3);
            // repeated ids exercise scatter accumulation
            table.embed(&[0, 2, 2, 5]).mul(table.embed(&[1, 2, 3, 2])).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "embed: {err}");

    let theta = random_array(&mut rng, 1, 4 * 5);
    let err = grad_check(
        |_, t| reshape_rows(t, 4, 5).cross_entropy(&[0, 3, 1, 1]),
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "cross_entropy: {err}");
}

#[test]
fn op_rows_range_and_row() {
    let mut rng = seeded(6);
    let theta = random_array(&mut rng, 1, 5 * 3);
    let err = grad_check(
        |t, v| {
            let m = reshape_rows(v, 5, 3);
            let mid = m.rows_range(1, 3);
            let last = m.row(4);
            concat_rows(t, &[mid, last]).mul(concat_rows(t, &[mid, last])).sum_all()
        },
        &theta,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "rows_range/row: {err}");
}

/// One heterogeneous graph-attention iteration at d = 8, differentiated
/// against every model parameter. The readout is a fixed random projection:
/// a plain square readout is nearly invariant under the closing layer norm
/// and would leave only eps-scale gradients to compare.
#[test]
fn hetero_iteration_grad_matches_finite_differences() {
    let mut rng = seeded(7);
    let inst = random_instance(&mut rng, 3, 2);
    let graph = build_graph(&inst, &Overrides::new()).unwrap();
    let model = common::tiny_model(21);
    let n_nodes = inst.m() + 1 + inst.n_interlocutors;
    let readout = random_array(&mut rng, n_nodes, model.cfg.d_model);
    let err = model_grad_check(&model, |m, tape, b| {
        let states = m.init_nodes(tape, b, &inst).unwrap();
        let iterated = m.graph_iterate(tape, b, &states, &graph, 0).unwrap();
        let stacked = concat_rows(tape, &iterated.nodes);
        let weights = tape.constant(readout.clone());
        stacked.mul(weights).mean_all().scale(1e-3)
    });
    assert!(err < TOL, "hetero iteration: {err}");
}

/// Full encoder + decoder NLL on a two-utterance instance at d_model = 8.
#[test]
fn full_model_nll_grad_matches_finite_differences() {
    let start = std::time::Instant::now();
    let inst = MpcInstance {
        id: "grad".into(),
        utterances: vec![
            Utterance { speaker: 0, reply_to: None, tokens: vec![5, 7] },
            Utterance { speaker: 1, reply_to: None, tokens: vec![8] },
        ],
        response: Utterance { speaker: 0, reply_to: Some(1), tokens: vec![9, 6] },
        n_interlocutors: 2,
    };
    let graph = build_graph(&inst, &Overrides::new()).unwrap();
    let model = common::tiny_model(22);
    let err = model_grad_check(&model, |m, tape, b| {
        m.loss(tape, b, &inst, &graph).unwrap()
    });
    assert!(err < TOL, "full model NLL: {err}");
    assert!(
        start.elapsed().as_secs() < 120,
        "full-model gradient check exceeded its runtime budget"
    );
}
