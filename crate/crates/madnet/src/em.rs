//! Hard expectation-maximization for addressee deduction.
//!
//! An unlabeled utterance's addressee is a discrete latent variable. The E
//! step scores every candidate reply target by the likelihood of the
//! observed response under the correspondingly assumed graph; with a uniform
//! prior over candidates the posterior is the softmax of those
//! log-likelihoods. Hard selection commits to the argmax ("silver label"),
//! and the M step trains on the silver-labeled graphs by ordinary
//! teacher-forced NLL minimization. Adaptation, label initialization, and
//! the alternating EM driver live here too.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelMap, MpcInstance};
use crate::graph::{build_graph, with_assumed_addressee_over, Overrides};
use crate::model::{Model, ModelError};
use crate::numerics::{adamw_step, clip_global_norm, NumericsError, OptState, ParamMap, Tape};

#[derive(Debug, Error)]
pub enum EmError {
    #[error("utterance 0 has no reply candidates")]
    FirstUtterance,
    #[error("utterance index {index} out of range for instance {id} (M = {m})")]
    BadUtterance { id: String, index: usize, m: usize },
    #[error("posterior has no mass")]
    ZeroMass,
    #[error("non-finite log-likelihood for instance {id}, utterance {index}, candidate {candidate}")]
    NonFiniteLikelihood {
        id: String,
        index: usize,
        candidate: usize,
    },
    #[error("training diverged: non-finite loss on instance {id}")]
    Diverged { id: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Posterior over candidate reply targets `j < i` for one utterance.
#[derive(Debug, Clone, Serialize)]
pub struct AddresseeDistribution {
    pub instance_id: String,
    pub utterance: usize,
    /// `log P(r | G_{U_i -> U_j}, c)` for each candidate `j = 0..i-1`.
    pub log_likelihood: Vec<f64>,
    pub posterior: Vec<f64>,
}

/// Training schedule. Adaptation decays its learning rate linearly to zero;
/// M steps run at a small fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub adapt_epochs: usize,
    pub adapt_lr: f64,
    pub em_iterations: usize,
    pub m_epochs: usize,
    pub m_lr: f64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub seed: u64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            adapt_epochs: 10,
            adapt_lr: 6.25e-5,
            em_iterations: 2,
            m_epochs: 4,
            m_lr: 5e-7,
            batch_size: 16,
            grad_accum: 1,
            seed: 1,
            weight_decay: 0.0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), EmError> {
        if self.batch_size == 0 || self.grad_accum == 0 {
            return Err(EmError::Model(ModelError::Config(
                "batch_size and grad_accum must be >= 1".into(),
            )));
        }
        if self.adapt_lr <= 0.0 || self.m_lr <= 0.0 {
            return Err(EmError::Model(ModelError::Config(
                "learning rates must be positive".into(),
            )));
        }
        Ok(())
    }
}

const MAX_GRAD_NORM: f64 = 1.0;

// ---------------------------------------------------------------------------
// E step
// ---------------------------------------------------------------------------

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-likelihoods into a posterior in log space: the uniform
/// prior over candidates cancels, so this is the whole simplified E step.
/// Stable for log-likelihoods as low as -1e4 and beyond.
pub fn posterior_from_log_likelihoods(log_likelihood: &[f64]) -> Result<Vec<f64>, EmError> {
    let lse = logsumexp(log_likelihood);
    if !lse.is_finite() {
        return Err(EmError::ZeroMass);
    }
    Ok(log_likelihood.iter().map(|x| (x - lse).exp()).collect())
}

fn normalize_log_space(log_weights: &[f64]) -> Result<Vec<f64>, EmError> {
    posterior_from_log_likelihoods(log_weights)
}

/// Posterior over a latent addressee by Bayes' rule with an explicit prior:
/// `p_j ∝ exp(l_j) * prior_j`. With a uniform prior this equals the plain
/// softmax normalization of the log-likelihoods.
pub fn bayes_posterior(log_likelihood: &[f64], prior: &[f64]) -> Result<Vec<f64>, EmError> {
    assert_eq!(
        log_likelihood.len(),
        prior.len(),
        "likelihood/prior length mismatch"
    );
    let joint: Vec<f64> = log_likelihood
        .iter()
        .zip(prior)
        .map(|(&l, &p)| if p > 0.0 { l + p.ln() } else { f64::NEG_INFINITY })
        .collect();
    normalize_log_space(&joint)
}

/// E-step posterior for one unlabeled utterance: every candidate `j < i`
/// yields an assumed graph (other unlabeled utterances held at their current
/// silver assignments), scored by the response likelihood. The uniform prior
/// over candidates cancels in the normalization.
pub fn e_step_posterior(
    model: &Model,
    inst: &MpcInstance,
    i: usize,
    current_silver: &LabelMap,
) -> Result<AddresseeDistribution, EmError> {
    if i == 0 {
        return Err(EmError::FirstUtterance);
    }
    if i >= inst.m() {
        return Err(EmError::BadUtterance {
            id: inst.id.clone(),
            index: i,
            m: inst.m(),
        });
    }
    let mut others = silver_overrides(inst, current_silver);
    others.remove(&i);

    let mut log_likelihood = Vec::with_capacity(i);
    for j in 0..i {
        let assumed = with_assumed_addressee_over(inst, i, j, &others).map_err(ModelError::from)?;
        let scored = model.response_nll(inst, &assumed.graph)?;
        let l = -scored.nll;
        if !l.is_finite() {
            return Err(EmError::NonFiniteLikelihood {
                id: inst.id.clone(),
                index: i,
                candidate: j,
            });
        }
        log_likelihood.push(l);
    }
    let posterior = normalize_log_space(&log_likelihood)?;
    Ok(AddresseeDistribution {
        instance_id: inst.id.clone(),
        utterance: i,
        log_likelihood,
        posterior,
    })
}

/// Hard selection: the highest-posterior candidate, ties to the smallest
/// index.
pub fn hard_select(dist: &AddresseeDistribution) -> usize {
    let mut best = 0usize;
    for (j, &p) in dist.posterior.iter().enumerate() {
        if p > dist.posterior[best] {
            best = j;
        }
    }
    best
}

/// Expected joint log-likelihood under the posterior (diagnostic; the M step
/// optimizes the hard-selected graph instead): `sum_j p_j (l_j + log(1/(i-1)))`
/// with the prior constant clamped at `log 1` for the single-candidate case.
pub fn expected_log_likelihood(dist: &AddresseeDistribution) -> f64 {
    let prior_count = dist.utterance.saturating_sub(1).max(1) as f64;
    let log_prior = (1.0 / prior_count).ln();
    dist.posterior
        .iter()
        .zip(&dist.log_likelihood)
        .map(|(&p, &l)| p * (l + log_prior))
        .sum()
}

fn silver_overrides(inst: &MpcInstance, silver: &LabelMap) -> Overrides {
    silver
        .get(&inst.id)
        .map(|per_utt| per_utt.iter().map(|(&i, &j)| (i, j)).collect())
        .unwrap_or_default()
}

fn unlabeled_indices(inst: &MpcInstance) -> Vec<usize> {
    inst.utterances
        .iter()
        .enumerate()
        .filter(|(i, u)| *i >= 1 && u.reply_to.is_none())
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------------
// Training (adaptation and M step share one loop)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum LrPlan {
    /// Linear decay from the base rate to exactly zero at the final step.
    LinearToZero { base: f64 },
    Fixed(f64),
}

impl LrPlan {
    fn at(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrPlan::LinearToZero { base } => {
                if total <= 1 {
                    base
                } else {
                    base * (1.0 - step as f64 / (total - 1) as f64)
                }
            }
            LrPlan::Fixed(lr) => lr,
        }
    }
}

/// Mean per-token NLL of the corpus under fixed parameters.
pub fn evaluate_mean_nll(
    model: &Model,
    corpus: &[MpcInstance],
    silver: &LabelMap,
) -> Result<f64, EmError> {
    let losses = corpus
        .par_iter()
        .map(|inst| -> Result<f64, EmError> {
            let graph =
                build_graph(inst, &silver_overrides(inst, silver)).map_err(ModelError::from)?;
            let tape = Tape::no_grad();
            let b = model.bind(&tape);
            Ok(model.loss(&tape, &b, inst, &graph)?.scalar_value())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

fn train_epochs(
    model: &mut Model,
    corpus: &[MpcInstance],
    silver: &LabelMap,
    epochs: usize,
    plan: LrPlan,
    schedule: &TrainSchedule,
    phase_seed: u64,
) -> Result<Vec<f64>, EmError> {
    schedule.validate()?;
    if epochs == 0 || corpus.is_empty() {
        return Ok(Vec::new());
    }
    let graphs: Vec<_> = corpus
        .iter()
        .map(|inst| build_graph(inst, &silver_overrides(inst, silver)).map_err(ModelError::from))
        .collect::<Result<Vec<_>, _>>()?;

    let group = schedule.batch_size * schedule.grad_accum;
    let steps_per_epoch = corpus.len().div_ceil(group);
    let total_steps = epochs * steps_per_epoch;
    let mut state = OptState::new(plan.at(0, total_steps), schedule.weight_decay);
    let mut per_epoch = Vec::with_capacity(epochs);
    let mut step = 0usize;

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(phase_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for group_ids in order.chunks(group) {
            // one forward/backward per instance, in parallel; gradients are
            // reduced in index order so results do not depend on thread
            // timing
            let results: Vec<(f64, ParamMap)> = group_ids
                .par_iter()
                .map(|&idx| -> Result<(f64, ParamMap), EmError> {
                    let inst = &corpus[idx];
                    let tape = Tape::new();
                    let b = model.bind(&tape);
                    let loss = model.loss(&tape, &b, inst, &graphs[idx])?;
                    let value = loss.scalar_value();
                    if !value.is_finite() {
                        return Err(EmError::Diverged { id: inst.id.clone() });
                    }
                    let grads = tape.backward(loss)?;
                    Ok((value, model.grad_map(&b, &grads)))
                })
                .collect::<Result<Vec<_>, _>>()?;

            let mut summed: ParamMap = ParamMap::new();
            for (value, grads) in &results {
                epoch_loss += value;
                for (name, g) in grads {
                    match summed.get_mut(name) {
                        Some(acc) => crate::numerics::array::add_assign(acc, g),
                        None => {
                            summed.insert(name.clone(), g.clone());
                        }
                    }
                }
            }
            let scale = 1.0 / results.len() as f64;
            for g in summed.values_mut() {
                for x in g.make_mut() {
                    *x *= scale;
                }
            }
            clip_global_norm(&mut summed, MAX_GRAD_NORM);
            state.lr = plan.at(step, total_steps);
            adamw_step(&mut model.params, &summed, &mut state)?;
            step += 1;
        }
        per_epoch.push(epoch_loss / corpus.len() as f64);
    }
    Ok(per_epoch)
}

/// Domain adaptation: NLL training on graphs where unlabeled utterances keep
/// only latent edges. Returns the mean training NLL per epoch.
pub fn train_adapt(
    model: &mut Model,
    corpus: &[MpcInstance],
    schedule: &TrainSchedule,
) -> Result<Vec<f64>, EmError> {
    train_epochs(
        model,
        corpus,
        &LabelMap::new(),
        schedule.adapt_epochs,
        LrPlan::LinearToZero {
            base: schedule.adapt_lr,
        },
        schedule,
        schedule.seed,
    )
}

/// M step: teacher-forced training on silver-labeled graphs at the fixed
/// M-step learning rate. Returns the mean training NLL per epoch.
pub fn m_step(
    model: &mut Model,
    corpus: &[MpcInstance],
    silver: &LabelMap,
    schedule: &TrainSchedule,
    round: usize,
) -> Result<Vec<f64>, EmError> {
    train_epochs(
        model,
        corpus,
        silver,
        schedule.m_epochs,
        LrPlan::Fixed(schedule.m_lr),
        schedule,
        schedule.seed ^ (round as u64).wrapping_mul(0xD1B5_4A32_D192_ED03),
    )
}

// ---------------------------------------------------------------------------
// Initialization, deduction, and the EM driver
// ---------------------------------------------------------------------------

/// Scores and hard-selects every unlabeled utterance. During this phase
/// candidate graphs keep the *other* unlabeled utterances on latent edges.
pub fn initialize_addressees(model: &Model, corpus: &[MpcInstance]) -> Result<LabelMap, EmError> {
    deduce_with_context(model, corpus, &LabelMap::new())
}

type PerInstanceLabels = (String, BTreeMap<usize, usize>);

/// Deduces labels for all unlabeled utterances, holding other unlabeled
/// utterances at `context` assignments where provided. Utterances within one
/// instance are processed in order, each seeing the freshest choices for its
/// instance; instances are independent.
pub fn deduce_with_context(
    model: &Model,
    corpus: &[MpcInstance],
    context: &LabelMap,
) -> Result<LabelMap, EmError> {
    let per_instance = corpus
        .par_iter()
        .map(|inst| -> Result<Option<PerInstanceLabels>, EmError> {
            let targets = unlabeled_indices(inst);
            if targets.is_empty() {
                return Ok(None);
            }
            let mut local = context.clone();
            let mut chosen = BTreeMap::new();
            for i in targets {
                let dist = e_step_posterior(model, inst, i, &local)?;
                let j = hard_select(&dist);
                chosen.insert(i, j);
                local
                    .entry(inst.id.clone())
                    .or_default()
                    .insert(i, j);
            }
            Ok(Some((inst.id.clone(), chosen)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_instance.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub label_changes: usize,
    pub mean_expected_ll: f64,
    pub mean_train_nll: f64,
    /// Mean training NLL of each M-step epoch (the last one equals
    /// `mean_train_nll`); not part of the per-round JSONL row.
    #[serde(skip)]
    pub m_epoch_nll: Vec<f64>,
}

#[derive(Debug)]
pub struct EmOutcome {
    /// Silver labels per round; index 0 is the initialization.
    pub history: Vec<LabelMap>,
    pub diagnostics: Vec<RoundDiagnostics>,
}

pub fn label_changes(before: &LabelMap, after: &LabelMap) -> usize {
    let mut changes = 0;
    for (id, per_utt) in after {
        let prev = before.get(id);
        for (utt, j) in per_utt {
            if prev.and_then(|p| p.get(utt)) != Some(j) {
                changes += 1;
            }
        }
    }
    changes
}

/// Alternating hard-EM driver. Each round re-deduces every unlabeled
/// utterance under the current parameters (E), then trains on the selected
/// graphs (M).
pub fn em_train(
    model: &mut Model,
    corpus: &[MpcInstance],
    schedule: &TrainSchedule,
    init: LabelMap,
) -> Result<EmOutcome, EmError> {
    let mut history = vec![init];
    let mut diagnostics = Vec::new();
    for round in 1..=schedule.em_iterations {
        let current = history.last().unwrap().clone();

        // E: coordinate-wise re-deduction of all unlabeled utterances
        let dists = corpus
            .par_iter()
            .map(|inst| -> Result<Vec<AddresseeDistribution>, EmError> {
                let targets = unlabeled_indices(inst);
                let mut local = current.clone();
                let mut out = Vec::with_capacity(targets.len());
                for i in targets {
                    let dist = e_step_posterior(model, inst, i, &local)?;
                    let j = hard_select(&dist);
                    local.entry(inst.id.clone()).or_default().insert(i, j);
                    out.push(dist);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut silver = LabelMap::new();
        let mut expected_sum = 0.0;
        let mut n_latent = 0usize;
        for dist in dists.iter().flatten() {
            silver
                .entry(dist.instance_id.clone())
                .or_default()
                .insert(dist.utterance, hard_select(dist));
            expected_sum += expected_log_likelihood(dist);
            n_latent += 1;
        }

        let changes = label_changes(history.last().unwrap(), &silver);

        // M: regular training on the silver graphs
        let per_epoch = m_step(model, corpus, &silver, schedule, round)?;
        diagnostics.push(RoundDiagnostics {
            round,
            label_changes: changes,
            mean_expected_ll: if n_latent > 0 {
                expected_sum / n_latent as f64
            } else {
                0.0
            },
            mean_train_nll: per_epoch.last().copied().unwrap_or(f64::NAN),
            m_epoch_nll: per_epoch,
        });
        history.push(silver);
    }
    Ok(EmOutcome {
        history,
        diagnostics,
    })
}
