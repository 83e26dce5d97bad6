//! Tape-based reverse-mode automatic differentiation over [`Array`] values.
//!
//! A [`Tape`] records every operation of a forward pass. [`Tape::backward`]
//! walks the recorded nodes in reverse, accumulating exact gradients for
//! every leaf reachable from a scalar loss. Gradient accumulation order is
//! fixed (reverse creation order, parents in declaration order), so repeated
//! runs over identical inputs produce bit-identical gradients.
//!
//! Tapes are single-threaded; independent tapes over shared (read-only)
//! parameter arrays may run concurrently, which is how batch training and
//! E-step fan-out parallelize.

use std::cell::RefCell;

use super::array::{self, Array};
use super::NumericsError;

const MASK_NEG: f64 = -1.0e30;

struct Node {
    value: Array,
    back: Option<BackStep>,
}

type BackFn = Box<dyn FnOnce(&Array, &mut GradBuf)>;

struct BackStep {
    run: BackFn,
}

/// Per-node gradient accumulator used during the backward sweep.
pub struct GradBuf {
    slots: Vec<Option<Array>>,
}

impl GradBuf {
    fn acc(&mut self, idx: usize, rows: usize, cols: usize) -> &mut [f64] {
        let slot = &mut self.slots[idx];
        if slot.is_none() {
            *slot = Some(Array::zeros(rows, cols));
        }
        slot.as_mut().unwrap().make_mut()
    }

    fn add(&mut self, idx: usize, g: &Array) {
        let buf = self.acc(idx, g.rows(), g.cols());
        for (d, s) in buf.iter_mut().zip(g.data()) {
            *d += s;
        }
    }
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// A value recorded on a tape. Cheap to copy; all arithmetic goes through
/// methods that record the corresponding backward step.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

/// Gradients produced by [`Tape::backward`]. Leaves that the loss does not
/// reach report zero gradients.
pub struct Gradients {
    slots: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Array {
        match &self.slots[v.idx] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Array::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
        }
    }

    /// A tape that skips recording backward steps; forward-only evaluation.
    pub fn no_grad() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    fn push(&self, value: Array, back: Option<BackStep>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node { value, back });
        Var { tape: self, idx }
    }

    fn node(&self, value: Array, back: impl FnOnce() -> BackFn) -> Var<'_> {
        let step = if self.grad_enabled {
            Some(BackStep { run: back() })
        } else {
            None
        };
        self.push(value, step)
    }

    /// Registers a differentiable leaf (a parameter).
    pub fn leaf(&self, value: Array) -> Var<'_> {
        self.push(value, None)
    }

    /// Registers a non-differentiated input.
    pub fn constant(&self, value: Array) -> Var<'_> {
        self.push(value, None)
    }

    /// Reverse-mode sweep from a scalar loss. Consumes the recorded backward
    /// steps; a tape can only be differentiated once.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, NumericsError> {
        let loss_shape = loss.shape();
        if loss_shape != (1, 1) {
            return Err(NumericsError::NonScalarLoss {
                rows: loss_shape.0,
                cols: loss_shape.1,
            });
        }
        let mut nodes = self.nodes.borrow_mut();
        let mut buf = GradBuf {
            slots: vec![None; nodes.len()],
        };
        buf.slots[loss.idx] = Some(Array::scalar(1.0));
        for i in (0..=loss.idx).rev() {
            if buf.slots[i].is_none() {
                continue;
            }
            if let Some(step) = nodes[i].back.take() {
                let g = buf.slots[i].clone().unwrap();
                (step.run)(&g, &mut buf);
            }
        }
        Ok(Gradients { slots: buf.slots })
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Array {
        self.tape.nodes.borrow()[self.idx].value.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.idx].value.shape()
    }

    pub fn scalar_value(&self) -> f64 {
        self.value().scalar_value()
    }

    fn val(&self) -> Array {
        self.value()
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        let a = self.val();
        let b = rhs.val();
        let out = array::matmul(&a, &b);
        let (ai, bi) = (self.idx, rhs.idx);
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, &array::matmul_nt(g, &b));
                buf.add(bi, &array::matmul_tn(&a, g));
            })
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Var<'t>) -> Var<'t> {
        let a = self.val();
        let b = rhs.val();
        let out = array::add(&a, &b);
        let (ai, bi) = (self.idx, rhs.idx);
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, g);
                buf.add(bi, g);
            })
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let a = self.val();
        let b = rhs.val();
        let out = array::hadamard(&a, &b);
        let (ai, bi) = (self.idx, rhs.idx);
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, &array::hadamard(g, &b));
                buf.add(bi, &array::hadamard(g, &a));
            })
        })
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let a = self.val();
        let out = array::scale(&a, c);
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, &array::scale(g, c));
            })
        })
    }

    /// Adds a `[1, c]` bias row to every row of `self`.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        let a = self.val();
        let b = bias.val();
        assert_eq!(b.rows(), 1, "add_row bias must be a row vector");
        assert_eq!(a.cols(), b.cols(), "add_row width mismatch");
        let (rows, cols) = a.shape();
        let mut out = Vec::with_capacity(a.len());
        for r in 0..rows {
            for c in 0..cols {
                out.push(a.get(r, c) + b.get(0, c));
            }
        }
        let out = Array::from_vec(rows, cols, out);
        let (ai, bi) = (self.idx, bias.idx);
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, g);
                let (rows, cols) = g.shape();
                let db = buf.acc(bi, 1, cols);
                for r in 0..rows {
                    for (c, d) in db.iter_mut().enumerate() {
                        *d += g.get(r, c);
                    }
                }
            })
        })
    }

    /// Adds a constant array (e.g. an attention mask); no gradient flows to it.
    pub fn add_const(self, mask: &Array) -> Var<'t> {
        let a = self.val();
        let out = array::add(&a, mask);
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, g);
            })
        })
    }

    pub fn relu(self) -> Var<'t> {
        let a = self.val();
        let out = a.map(|x| if x > 0.0 { x } else { 0.0 });
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let (rows, cols) = g.shape();
                let da = buf.acc(ai, rows, cols);
                for ((d, &gv), &av) in da.iter_mut().zip(g.data()).zip(a.data()) {
                    if av > 0.0 {
                        *d += gv;
                    }
                }
            })
        })
    }

    /// Row-wise softmax (max-subtracted for stability).
    pub fn softmax_rows(self) -> Var<'t> {
        let a = self.val();
        assert!(a.cols() > 0, "softmax over empty axis");
        let out = softmax_rows_forward(&a);
        let y = out.clone();
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let (rows, cols) = g.shape();
                let da = buf.acc(ai, rows, cols);
                for r in 0..rows {
                    let grow = &g.data()[r * cols..(r + 1) * cols];
                    let yrow = &y.data()[r * cols..(r + 1) * cols];
                    let dot: f64 = grow.iter().zip(yrow).map(|(gv, yv)| gv * yv).sum();
                    let drow = &mut da[r * cols..(r + 1) * cols];
                    for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += (gv - dot) * yv;
                    }
                }
            })
        })
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(self) -> Var<'t> {
        let a = self.val();
        assert!(a.cols() > 0, "log_softmax over empty axis");
        let (rows, cols) = a.shape();
        let mut out = Vec::with_capacity(a.len());
        for r in 0..rows {
            let row = a.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|x| x - lse));
        }
        let out = Array::from_vec(rows, cols, out);
        let logp = out.clone();
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let (rows, cols) = g.shape();
                let da = buf.acc(ai, rows, cols);
                for r in 0..rows {
                    let grow = &g.data()[r * cols..(r + 1) * cols];
                    let prow = &logp.data()[r * cols..(r + 1) * cols];
                    let gsum: f64 = grow.iter().sum();
                    let drow = &mut da[r * cols..(r + 1) * cols];
                    for ((d, &gv), &lp) in drow.iter_mut().zip(grow).zip(prow) {
                        *d += gv - lp.exp() * gsum;
                    }
                }
            })
        })
    }

    /// Per-row layer normalization with learned gain/bias rows.
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Var<'t> {
        let x = self.val();
        let g = gain.val();
        let b = bias.val();
        let (rows, cols) = x.shape();
        assert_eq!(g.shape(), (1, cols), "layer_norm gain shape");
        assert_eq!(b.shape(), (1, cols), "layer_norm bias shape");
        let mut out = Vec::with_capacity(x.len());
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row_slice(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std.push(istd);
            for (c, &v) in row.iter().enumerate() {
                let xh = (v - mean) * istd;
                xhat.push(xh);
                out.push(xh * g.get(0, c) + b.get(0, c));
            }
        }
        let out = Array::from_vec(rows, cols, out);
        let xhat = Array::from_vec(rows, cols, xhat);
        let (xi, gi, bi) = (self.idx, gain.idx, bias.idx);
        self.tape.node(out, move || {
            Box::new(move |gr, buf| {
                let (rows, cols) = gr.shape();
                {
                    let dg = buf.acc(gi, 1, cols);
                    for r in 0..rows {
                        for (c, d) in dg.iter_mut().enumerate() {
                            *d += gr.get(r, c) * xhat.get(r, c);
                        }
                    }
                }
                {
                    let db = buf.acc(bi, 1, cols);
                    for r in 0..rows {
                        for (c, d) in db.iter_mut().enumerate() {
                            *d += gr.get(r, c);
                        }
                    }
                }
                let dx = buf.acc(xi, rows, cols);
                let n = cols as f64;
                for r in 0..rows {
                    // d xhat
                    let dxh: Vec<f64> = (0..cols).map(|c| gr.get(r, c) * g.get(0, c)).collect();
                    let mean_dxh = dxh.iter().sum::<f64>() / n;
                    let mean_dxh_xh: f64 =
                        (0..cols).map(|c| dxh[c] * xhat.get(r, c)).sum::<f64>() / n;
                    let istd = inv_std[r];
                    let drow = &mut dx[r * cols..(r + 1) * cols];
                    for (c, d) in drow.iter_mut().enumerate() {
                        *d += istd * (dxh[c] - mean_dxh - xhat.get(r, c) * mean_dxh_xh);
                    }
                }
            })
        })
    }

    pub fn transpose(self) -> Var<'t> {
        let a = self.val();
        let out = a.transpose();
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                buf.add(ai, &g.transpose());
            })
        })
    }

    pub fn sum_all(self) -> Var<'t> {
        let a = self.val();
        let out = Array::scalar(a.data().iter().sum());
        let ai = self.idx;
        let (rows, cols) = a.shape();
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let gv = g.scalar_value();
                let da = buf.acc(ai, rows, cols);
                for d in da.iter_mut() {
                    *d += gv;
                }
            })
        })
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = {
            let (r, c) = self.shape();
            (r * c) as f64
        };
        self.sum_all().scale(1.0 / n)
    }

    /// Embedding lookup: gathers `ids` rows of `self` (`[V, d]`).
    pub fn embed(self, ids: &[u32]) -> Var<'t> {
        let table = self.val();
        let (v, d) = table.shape();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!((id as usize) < v, "embedding id {id} out of range {v}");
            out.extend_from_slice(table.row_slice(id as usize));
        }
        let out = Array::from_vec(ids.len(), d, out);
        let ai = self.idx;
        let ids = ids.to_vec();
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let dt = buf.acc(ai, v, d);
                for (r, &id) in ids.iter().enumerate() {
                    let grow = &g.data()[r * d..(r + 1) * d];
                    let trow = &mut dt[id as usize * d..(id as usize + 1) * d];
                    for (t, &gv) in trow.iter_mut().zip(grow) {
                        *t += gv;
                    }
                }
            })
        })
    }

    /// Selects one row as a `[1, c]` array.
    pub fn row(self, r: usize) -> Var<'t> {
        self.rows_range(r, 1)
    }

    /// Selects `len` contiguous rows starting at `start`.
    pub fn rows_range(self, start: usize, len: usize) -> Var<'t> {
        let a = self.val();
        let (rows, cols) = a.shape();
        assert!(start + len <= rows, "rows_range out of bounds");
        let out = Array::from_vec(
            len,
            cols,
            a.data()[start * cols..(start + len) * cols].to_vec(),
        );
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let da = buf.acc(ai, rows, cols);
                let block = &mut da[start * cols..(start + len) * cols];
                for (d, s) in block.iter_mut().zip(g.data()) {
                    *d += s;
                }
            })
        })
    }

    /// Selects `len` contiguous columns starting at `start`.
    pub fn cols_range(self, start: usize, len: usize) -> Var<'t> {
        let a = self.val();
        let (rows, cols) = a.shape();
        assert!(start + len <= cols, "cols_range out of bounds");
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&a.row_slice(r)[start..start + len]);
        }
        let out = Array::from_vec(rows, len, out);
        let ai = self.idx;
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let da = buf.acc(ai, rows, cols);
                for r in 0..rows {
                    let grow = &g.data()[r * len..(r + 1) * len];
                    let drow = &mut da[r * cols + start..r * cols + start + len];
                    for (d, &gv) in drow.iter_mut().zip(grow) {
                        *d += gv;
                    }
                }
            })
        })
    }

    /// Picks `out[r, 0] = self[r, ids[r]]`; the gather behind cross-entropy.
    pub fn pick_per_row(self, ids: &[u32]) -> Var<'t> {
        let a = self.val();
        let (rows, cols) = a.shape();
        assert_eq!(ids.len(), rows, "pick_per_row needs one id per row");
        let out: Vec<f64> = ids
            .iter()
            .enumerate()
            .map(|(r, &id)| {
                assert!((id as usize) < cols, "pick id out of range");
                a.get(r, id as usize)
            })
            .collect();
        let out = Array::from_vec(rows, 1, out);
        let ai = self.idx;
        let ids = ids.to_vec();
        self.tape.node(out, move || {
            Box::new(move |g, buf| {
                let da = buf.acc(ai, rows, cols);
                for (r, &id) in ids.iter().enumerate() {
                    da[r * cols + id as usize] += g.get(r, 0);
                }
            })
        })
    }

    /// Mean negative log-likelihood of `targets` under row-wise logits.
    pub fn cross_entropy(self, targets: &[u32]) -> Var<'t> {
        assert!(!targets.is_empty(), "cross_entropy needs targets");
        self.log_softmax_rows()
            .pick_per_row(targets)
            .mean_all()
            .scale(-1.0)
    }
}

/// Stacks parts vertically; all parts must share a column count.
pub fn concat_rows<'t>(tape: &'t Tape, parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat_rows of nothing");
    let vals: Vec<Array> = parts.iter().map(|p| p.value()).collect();
    let cols = vals[0].cols();
    let total: usize = vals.iter().map(|v| v.rows()).sum();
    let mut out = Vec::with_capacity(total * cols);
    for v in &vals {
        assert_eq!(v.cols(), cols, "concat_rows width mismatch");
        out.extend_from_slice(v.data());
    }
    let out = Array::from_vec(total, cols, out);
    let idxs: Vec<usize> = parts.iter().map(|p| p.idx).collect();
    let shapes: Vec<(usize, usize)> = vals.iter().map(|v| v.shape()).collect();
    tape.node(out, move || {
        Box::new(move |g, buf| {
            let mut row = 0;
            for (&idx, &(r, c)) in idxs.iter().zip(&shapes) {
                let da = buf.acc(idx, r, c);
                let block = &g.data()[row * c..(row + r) * c];
                for (d, &s) in da.iter_mut().zip(block) {
                    *d += s;
                }
                row += r;
            }
        })
    })
}

/// Stacks parts horizontally; all parts must share a row count.
pub fn concat_cols<'t>(tape: &'t Tape, parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat_cols of nothing");
    let vals: Vec<Array> = parts.iter().map(|p| p.value()).collect();
    let rows = vals[0].rows();
    let total: usize = vals.iter().map(|v| v.cols()).sum();
    let mut out = vec![0.0; rows * total];
    let mut col = 0;
    for v in &vals {
        assert_eq!(v.rows(), rows, "concat_cols height mismatch");
        for r in 0..rows {
            out[r * total + col..r * total + col + v.cols()].copy_from_slice(v.row_slice(r));
        }
        col += v.cols();
    }
    let out = Array::from_vec(rows, total, out);
    let idxs: Vec<usize> = parts.iter().map(|p| p.idx).collect();
    let shapes: Vec<(usize, usize)> = vals.iter().map(|v| v.shape()).collect();
    tape.node(out, move || {
        Box::new(move |g, buf| {
            let total = g.cols();
            let mut col = 0;
            for (&idx, &(r, c)) in idxs.iter().zip(&shapes) {
                let da = buf.acc(idx, r, c);
                for row in 0..r {
                    let grow = &g.data()[row * total + col..row * total + col + c];
                    let drow = &mut da[row * c..(row + 1) * c];
                    for (d, &s) in drow.iter_mut().zip(grow) {
                        *d += s;
                    }
                }
                col += c;
            }
        })
    })
}

/// Gathers single rows `(source, row_index)` from several matrices into one
/// stacked matrix. Used by the heterogeneous attention to assemble, per
/// target node, the per-source key/message rows that live in per-edge-type
/// projections.
pub fn concat_picked_rows<'t>(tape: &'t Tape, parts: &[(Var<'t>, usize)]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat_picked_rows of nothing");
    let vals: Vec<Array> = parts.iter().map(|(p, _)| p.value()).collect();
    let cols = vals[0].cols();
    let mut out = Vec::with_capacity(parts.len() * cols);
    for (v, &(_, r)) in vals.iter().zip(parts) {
        assert_eq!(v.cols(), cols, "concat_picked_rows width mismatch");
        out.extend_from_slice(v.row_slice(r));
    }
    let out = Array::from_vec(parts.len(), cols, out);
    let picks: Vec<(usize, usize)> = parts.iter().map(|(p, r)| (p.idx, *r)).collect();
    let shapes: Vec<(usize, usize)> = vals.iter().map(|v| v.shape()).collect();
    tape.node(out, move || {
        Box::new(move |g, buf| {
            let cols = g.cols();
            for (k, (&(idx, r), &(sr, sc))) in picks.iter().zip(&shapes).enumerate() {
                let da = buf.acc(idx, sr, sc);
                let grow = &g.data()[k * cols..(k + 1) * cols];
                let drow = &mut da[r * sc..(r + 1) * sc];
                for (d, &s) in drow.iter_mut().zip(grow) {
                    *d += s;
                }
            }
        })
    })
}

/// Additive attention mask: 0.0 where allowed, a large negative value where
/// key positions are disallowed. `allowed[q][k]`.
pub fn attention_mask(allowed: impl Fn(usize, usize) -> bool, q_len: usize, k_len: usize) -> Array {
    let mut m = Vec::with_capacity(q_len * k_len);
    for q in 0..q_len {
        for k in 0..k_len {
            m.push(if allowed(q, k) { 0.0 } else { MASK_NEG });
        }
    }
    Array::from_vec(q_len, k_len, m)
}

pub fn causal_mask(len: usize) -> Array {
    attention_mask(|q, k| k <= q, len, len)
}

fn softmax_rows_forward(a: &Array) -> Array {
    let (rows, cols) = a.shape();
    let mut out = Vec::with_capacity(a.len());
    for r in 0..rows {
        let row = a.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for e in exps.iter_mut() {
            *e /= sum;
        }
        out.extend_from_slice(&exps);
    }
    Array::from_vec(rows, cols, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_grad_is_ones() {
        let t = Tape::new();
        let x = t.leaf(Array::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let loss = x.sum_all();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x), Array::from_vec(1, 3, vec![1.0, 1.0, 1.0]));
    }

    #[test]
    fn elementwise_square_grad() {
        let t = Tape::new();
        let x = t.leaf(Array::from_vec(1, 2, vec![1.0, 2.0]));
        let loss = x.mul(x).sum_all();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x), Array::from_vec(1, 2, vec![2.0, 4.0]));
    }

    #[test]
    fn softmax_symmetry() {
        let t = Tape::no_grad();
        let x = t.constant(Array::from_vec(1, 2, vec![0.0, 0.0]));
        let y = x.softmax_rows().value();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = Tape::no_grad();
        let x = t.constant(Array::from_vec(2, 3, vec![1.0, -2.0, 0.5, 100.0, 100.0, -50.0]));
        let y = x.softmax_rows().value();
        for r in 0..2 {
            let s: f64 = y.row_slice(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row_slice(r).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_confident_correct_class_near_zero() {
        let t = Tape::no_grad();
        let logits = t.constant(Array::from_vec(1, 3, vec![1000.0, 0.0, 0.0]));
        let nll = logits.cross_entropy(&[0]).scalar_value();
        assert!(nll.abs() < 1e-12, "nll = {nll}");
    }

    #[test]
    fn unreachable_leaf_gets_zero_grad() {
        let t = Tape::new();
        let x = t.leaf(Array::scalar(3.0));
        let y = t.leaf(Array::scalar(5.0));
        let loss = x.mul(x);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(y), Array::scalar(0.0));
        assert_eq!(g.get(x), Array::scalar(6.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let t = Tape::new();
        let x = t.leaf(Array::from_vec(1, 2, vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }
}
