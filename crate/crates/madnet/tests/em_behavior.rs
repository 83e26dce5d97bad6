//! E-step, M-step, and EM-driver behavior against a real (tiny) model.

mod common;

use common::{tiny_config, tiny_model};
use madnet::corpus::{LabelMap, MpcInstance, Utterance};
use madnet::em::{
    self, e_step_posterior, em_train, hard_select, initialize_addressees, m_step, train_adapt,
    TrainSchedule,
};
use madnet::model::{DiagnosticOptions, Model, ModelConfig};

fn unlabeled_instance(id: &str) -> MpcInstance {
    MpcInstance {
        id: id.into(),
        utterances: vec![
            Utterance { speaker: 0, reply_to: None, tokens: vec![5, 6] },
            Utterance { speaker: 1, reply_to: Some(0), tokens: vec![7] },
            Utterance { speaker: 2, reply_to: None, tokens: vec![8, 9] },
            Utterance { speaker: 0, reply_to: None, tokens: vec![10] },
        ],
        response: Utterance { speaker: 1, reply_to: Some(3), tokens: vec![6, 7] },
        n_interlocutors: 3,
    }
}

fn quick_schedule() -> TrainSchedule {
    TrainSchedule {
        adapt_epochs: 1,
        adapt_lr: 1e-3,
        em_iterations: 1,
        m_epochs: 1,
        m_lr: 1e-3,
        batch_size: 4,
        grad_accum: 1,
        seed: 3,
        weight_decay: 0.0,
    }
}

#[test]
fn single_candidate_posterior_is_certain() {
    let model = tiny_model(31);
    let inst = unlabeled_instance("a");
    let dist = e_step_posterior(&model, &inst, 1, &LabelMap::new()).unwrap();
    assert_eq!(dist.posterior, vec![1.0]);
    assert_eq!(hard_select(&dist), 0);
}

#[test]
fn first_utterance_has_no_posterior() {
    let model = tiny_model(32);
    let inst = unlabeled_instance("a");
    assert!(e_step_posterior(&model, &inst, 0, &LabelMap::new()).is_err());
}

#[test]
fn uniform_latent_diagnostic_yields_uniform_posterior() {
    // with every edge forced latent, candidate graphs are indistinguishable
    let model = Model::new(ModelConfig {
        diagnostic: DiagnosticOptions {
            no_positional: false,
            uniform_latent: true,
        },
        ..tiny_config()
    })
    .unwrap();
    let inst = unlabeled_instance("a");
    let dist = e_step_posterior(&model, &inst, 3, &LabelMap::new()).unwrap();
    assert_eq!(dist.posterior.len(), 3);
    for &p in &dist.posterior {
        assert!((p - 1.0 / 3.0).abs() < 1e-9, "posterior {:?}", dist.posterior);
    }
    // exact tie resolves to the smallest candidate
    assert_eq!(hard_select(&dist), 0);
}

#[test]
fn posteriors_are_normalized_on_real_models() {
    let model = tiny_model(33);
    let inst = unlabeled_instance("a");
    for i in [2usize, 3] {
        let dist = e_step_posterior(&model, &inst, i, &LabelMap::new()).unwrap();
        assert_eq!(dist.posterior.len(), i);
        assert!((dist.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn e_step_does_not_mutate_params() {
    let model = tiny_model(34);
    let before = model.params.clone();
    let inst = unlabeled_instance("a");
    let _ = e_step_posterior(&model, &inst, 3, &LabelMap::new()).unwrap();
    assert_eq!(model.params, before);
}

#[test]
fn initialization_skips_fully_labeled_instances() {
    let model = tiny_model(35);
    let mut labeled = unlabeled_instance("full");
    labeled.utterances[2].reply_to = Some(1);
    labeled.utterances[3].reply_to = Some(2);
    let silver = initialize_addressees(&model, &[labeled]).unwrap();
    assert!(silver.is_empty());
}

#[test]
fn initialization_is_deterministic_and_in_range() {
    let model = tiny_model(36);
    let corpus: Vec<MpcInstance> = (0..4).map(|k| unlabeled_instance(&format!("i{k}"))).collect();
    let a = initialize_addressees(&model, &corpus).unwrap();
    let b = initialize_addressees(&model, &corpus).unwrap();
    assert_eq!(a, b);
    for (id, per_utt) in &a {
        for (&utt, &j) in per_utt {
            assert!(j < utt, "{id}: {utt} -> {j}");
        }
    }
    // both unlabeled utterances of each instance were deduced
    assert!(a.values().all(|g| g.len() == 2));
}

#[test]
fn zero_epoch_phases_are_identities() {
    let mut model = tiny_model(37);
    let before = model.params.clone();
    let corpus = vec![unlabeled_instance("a")];
    let schedule = TrainSchedule {
        adapt_epochs: 0,
        m_epochs: 0,
        em_iterations: 0,
        ..quick_schedule()
    };
    assert!(train_adapt(&mut model, &corpus, &schedule).unwrap().is_empty());
    assert_eq!(model.params, before);
    assert!(m_step(&mut model, &corpus, &LabelMap::new(), &schedule, 1).unwrap().is_empty());
    assert_eq!(model.params, before);

    let mut init = LabelMap::new();
    init.entry("a".into()).or_default().insert(3, 1);
    let outcome = em_train(&mut model, &corpus, &schedule, init.clone()).unwrap();
    assert_eq!(outcome.history, vec![init]);
    assert!(outcome.diagnostics.is_empty());
    assert_eq!(model.params, before);
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let corpus: Vec<MpcInstance> = (0..6).map(|k| unlabeled_instance(&format!("i{k}"))).collect();
    let schedule = quick_schedule();
    let mut m1 = tiny_model(38);
    let mut m2 = tiny_model(38);
    let r1 = train_adapt(&mut m1, &corpus, &schedule).unwrap();
    let r2 = train_adapt(&mut m2, &corpus, &schedule).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(m1.params, m2.params);

    let silver = initialize_addressees(&m1, &corpus).unwrap();
    let mut m1b = Model { cfg: m1.cfg.clone(), params: m1.params.clone() };
    let s1 = m_step(&mut m1, &corpus, &silver, &schedule, 1).unwrap();
    let s2 = m_step(&mut m1b, &corpus, &silver, &schedule, 1).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(m1.params, m1b.params);
}

#[test]
fn m_step_changes_params_and_em_records_diagnostics() {
    let corpus: Vec<MpcInstance> = (0..6).map(|k| unlabeled_instance(&format!("i{k}"))).collect();
    let schedule = TrainSchedule {
        em_iterations: 2,
        ..quick_schedule()
    };
    let mut model = tiny_model(39);
    train_adapt(&mut model, &corpus, &schedule).unwrap();
    let before = model.params.clone();
    let init = initialize_addressees(&model, &corpus).unwrap();
    let outcome = em_train(&mut model, &corpus, &schedule, init).unwrap();
    assert_ne!(model.params, before);
    assert_eq!(outcome.history.len(), 3);
    assert_eq!(outcome.diagnostics.len(), 2);
    for d in &outcome.diagnostics {
        assert!(d.mean_expected_ll.is_finite());
        assert!(d.mean_train_nll.is_finite());
    }
}

#[test]
fn em_module_error_types_map_to_exit_codes() {
    // spot check: divergence is a runtime error, bad utterance a validation one
    use madnet::cli::CliError;
    let diverged: CliError = em::EmError::Diverged { id: "x".into() }.into();
    assert_eq!(diverged.exit_code(), 2);
    let bad: CliError = em::EmError::FirstUtterance.into();
    assert_eq!(bad.exit_code(), 1);
}
