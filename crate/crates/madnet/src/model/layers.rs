//! Transformer building blocks assembled from tape primitives.

use crate::numerics::{concat_cols, Array, Tape, Var};

use super::{Bound, LN_EPS};

/// Multi-head attention. `x_q` provides the queries, `x_kv` the keys and
/// values (equal to `x_q` for self-attention). `mask` is an additive
/// `[q_len, kv_len]` array.
pub fn multi_head_attention<'t>(
    tape: &'t Tape,
    b: &Bound<'t>,
    prefix: &str,
    x_q: Var<'t>,
    x_kv: Var<'t>,
    mask: Option<&Array>,
    n_heads: usize,
) -> Var<'t> {
    let q = x_q
        .matmul(b.get(&format!("{prefix}.wq")))
        .add_row(b.get(&format!("{prefix}.bq")));
    let k = x_kv.matmul(b.get(&format!("{prefix}.wk")));
    let v = x_kv
        .matmul(b.get(&format!("{prefix}.wv")))
        .add_row(b.get(&format!("{prefix}.bv")));
    let d = q.shape().1;
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = q.cols_range(h * dk, dk);
        let kh = k.cols_range(h * dk, dk);
        let vh = v.cols_range(h * dk, dk);
        let mut scores = qh.matmul(kh.transpose()).scale(scale);
        if let Some(m) = mask {
            scores = scores.add_const(m);
        }
        heads.push(scores.softmax_rows().matmul(vh));
    }
    concat_cols(tape, &heads)
        .matmul(b.get(&format!("{prefix}.wo")))
        .add_row(b.get(&format!("{prefix}.bo")))
}

pub fn feed_forward<'t>(b: &Bound<'t>, prefix: &str, x: Var<'t>) -> Var<'t> {
    x.matmul(b.get(&format!("{prefix}.w1")))
        .add_row(b.get(&format!("{prefix}.b1")))
        .relu()
        .matmul(b.get(&format!("{prefix}.w2")))
        .add_row(b.get(&format!("{prefix}.b2")))
}

fn layer_norm<'t>(b: &Bound<'t>, prefix: &str, x: Var<'t>) -> Var<'t> {
    x.layer_norm(
        b.get(&format!("{prefix}.g")),
        b.get(&format!("{prefix}.b")),
        LN_EPS,
    )
}

/// Post-norm Transformer layer: self-attention and feed-forward sublayers,
/// each with a residual connection and layer norm.
pub fn transformer_layer<'t>(
    tape: &'t Tape,
    b: &Bound<'t>,
    prefix: &str,
    x: Var<'t>,
    mask: Option<&Array>,
    n_heads: usize,
) -> Var<'t> {
    let attended = multi_head_attention(tape, b, &format!("{prefix}.attn"), x, x, mask, n_heads);
    let x1 = layer_norm(b, &format!("{prefix}.ln1"), x.add(attended));
    let f = feed_forward(b, &format!("{prefix}.ffn"), x1);
    layer_norm(b, &format!("{prefix}.ln2"), x1.add(f))
}

/// Decoder layer: masked self-attention, cross-attention over `memory`,
/// then the feed-forward sublayer; post-norm throughout.
pub fn decoder_layer<'t>(
    tape: &'t Tape,
    b: &Bound<'t>,
    prefix: &str,
    x: Var<'t>,
    memory: Var<'t>,
    self_mask: &Array,
    n_heads: usize,
) -> Var<'t> {
    let selfed = multi_head_attention(
        tape,
        b,
        &format!("{prefix}.self"),
        x,
        x,
        Some(self_mask),
        n_heads,
    );
    let x1 = layer_norm(b, &format!("{prefix}.ln1"), x.add(selfed));
    let crossed = multi_head_attention(tape, b, &format!("{prefix}.cross"), x1, memory, None, n_heads);
    let x2 = layer_norm(b, &format!("{prefix}.ln2"), x1.add(crossed));
    let f = feed_forward(b, &format!("{prefix}.ffn"), x2);
    layer_norm(b, &format!("{prefix}.ln3"), x2.add(f))
}
