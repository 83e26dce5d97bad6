//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use std::collections::BTreeMap;

use super::array::Array;
use super::NumericsError;

/// Named parameter (or gradient) collection. A `BTreeMap` keeps iteration
/// order stable, which checkpointing and bit-reproducible training rely on.
pub type ParamMap = BTreeMap<String, Array>;

#[derive(Debug, Clone)]
pub struct OptState {
    m: ParamMap,
    v: ParamMap,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptState {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            m: ParamMap::new(),
            v: ParamMap::new(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW step with bias correction and decoupled weight decay.
///
/// Non-finite gradients are an error: clipping never hides them.
pub fn adamw_step(
    params: &mut ParamMap,
    grads: &ParamMap,
    state: &mut OptState,
) -> Result<(), NumericsError> {
    for (name, g) in grads {
        g.ensure_finite(&format!("gradient for {name}"))?;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        if g.shape() != p.shape() {
            return Err(NumericsError::ShapeMismatch {
                context: format!("adamw_step for {name}"),
                left: p.shape(),
                right: g.shape(),
            });
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Array::zeros(p.rows(), p.cols()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Array::zeros(p.rows(), p.cols()));
        let (b1, b2) = (state.beta1, state.beta2);
        let md = m.make_mut();
        let vd = v.make_mut();
        let pd = p.make_mut();
        for ((pv, (mv, vv)), &gv) in pd
            .iter_mut()
            .zip(md.iter_mut().zip(vd.iter_mut()))
            .zip(g.data())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            // decoupled decay, then the Adam update
            *pv -= state.lr * state.weight_decay * *pv;
            *pv -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

pub fn global_norm(grads: &ParamMap) -> f64 {
    grads
        .values()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients by `max_norm / norm` when the global L2 norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut ParamMap, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = max_norm / norm;
        for g in grads.values_mut() {
            for x in g.make_mut() {
                *x *= factor;
            }
        }
    }
    norm
}
