mod common;

use discalign::evaluation::evaluate_model;
use discalign::ingest::synthetic_splits;
use discalign::model::ModelKind;
use discalign::training::{
    best_leq_artifact, run_multi_seed, train, train_baseline_classifier, train_baseline_labelemb, train_with_spec,
    EpochOutcome, RunSpec, TrainState,
};
use discalign::{DatasetSplits, Error, ExperimentConfig, LossToggles, RelationTaxonomy, SplitName};

fn small() -> (DatasetSplits, RelationTaxonomy) {
    synthetic_splits(3, (12, 4, 4), 11).unwrap()
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        learning_rate: 3e-3,
        baseline_learning_rate: 1.5e-2,
        max_epochs: 3,
        batch_size: 8,
        ..ExperimentConfig::default()
    }
}

#[test]
fn same_seed_same_model() {
    let (splits, tax) = small();
    let a = train(&config(), &splits, &tax).unwrap();
    let b = train(&config(), &splits, &tax).unwrap();
    assert_eq!(a.label_table.matrix, b.label_table.matrix);
    assert_eq!(a.model, b.model);
    assert_eq!(a.log, b.log);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn seeds_change_the_model() {
    let (splits, tax) = small();
    let cfg = config();
    let a = train_with_spec(&cfg, RunSpec::from_config(&cfg), &splits, &tax, 1).unwrap();
    let b = train_with_spec(&cfg, RunSpec::from_config(&cfg), &splits, &tax, 2).unwrap();
    assert_ne!(a.model.head_w, b.model.head_w);
}

#[test]
fn clipped_norms_stay_bounded() {
    let (splits, tax) = small();
    let cfg = ExperimentConfig {
        learning_rate: 5e-2,
        ..config()
    };
    let a = train(&cfg, &splits, &tax).unwrap();
    assert!(!a.log.steps.is_empty());
    for s in &a.log.steps {
        assert!(s.clipped_norm <= cfg.grad_clip_norm + 1e-6, "step {}: {}", s.step, s.clipped_norm);
        assert!(s.clipped_norm <= s.grad_norm + 1e-12);
    }
    assert!(a.metrics.max_clipped_norm <= cfg.grad_clip_norm + 1e-6);
}

#[test]
fn stored_metrics_match_reevaluation() {
    let (splits, tax) = small();
    let a = train(&config(), &splits, &tax).unwrap();
    let (m, _) = evaluate_model(&a.model, &splits, SplitName::Test, a.config.proxy_split).unwrap();
    assert!((m.accuracy - a.metrics.eval.accuracy).abs() < 1e-6);
    assert!((m.macro_f1 - a.metrics.eval.macro_f1).abs() < 1e-6);
    assert!((m.leq - a.metrics.eval.leq).abs() < 1e-6);
}

#[test]
fn best_epoch_has_lowest_dev_loss() {
    let (splits, tax) = small();
    let a = train(&config(), &splits, &tax).unwrap();
    let min = a.log.epochs.iter().map(|e| e.dev_loss).fold(f64::INFINITY, f64::min);
    let best = &a.log.epochs[a.metrics.best_epoch - 1];
    assert_eq!(best.dev_loss, min);
    assert_eq!(a.metrics.best_dev_loss, min);
    assert!(a.metrics.epochs_run <= 3);
}

#[test]
fn ice_only_config_is_the_classifier_baseline() {
    let (splits, tax) = small();
    let cfg = ExperimentConfig {
        loss_toggles: LossToggles::ICE_ONLY,
        ..config()
    };
    let via_toggles = train(&cfg, &splits, &tax).unwrap();
    let baseline = train_baseline_classifier(&config(), &splits, &tax).unwrap();
    assert_eq!(via_toggles.model.kind, ModelKind::ClassifierBaseline);
    assert_eq!(via_toggles.log, baseline.log);
    assert_eq!(via_toggles.model.head_w, baseline.model.head_w);
}

#[test]
fn labelemb_baseline_uses_only_the_instance_term() {
    let (splits, tax) = small();
    let a = train_baseline_labelemb(&config(), &splits, &tax).unwrap();
    assert_eq!(a.model.kind, ModelKind::LabelEmbBaseline);
    assert!(a.log.steps.iter().all(|s| s.icl.is_some() && s.lcl.is_none() && s.lec.is_none() && s.ice.is_none()));
}

#[test]
fn patience_one_stops_after_first_worse_epoch() {
    let mut state = TrainState::new(1, 0);
    assert_eq!(state.observe(1.0), EpochOutcome::Improved);
    assert_eq!(state.observe(1.5), EpochOutcome::Stop);
    assert_eq!(state.epoch, 2);
    assert_eq!(state.best_epoch, 1);
}

#[test]
fn equal_dev_loss_is_not_an_improvement() {
    let mut state = TrainState::new(2, 0);
    state.observe(1.0);
    assert_eq!(state.observe(1.0), EpochOutcome::NoImprovement);
    assert_eq!(state.observe(1.0), EpochOutcome::Stop);
}

#[test]
fn frozen_encoder_is_left_untouched() {
    let (splits, tax) = small();
    let cfg = ExperimentConfig {
        freeze_input_encoder: true,
        ..config()
    };
    let a = train(&cfg, &splits, &tax).unwrap();
    let untouched = discalign::encoders::EncoderState::pretrained(&cfg.encoder_checkpoint, cfg.vocab_size, cfg.dim).unwrap();
    assert_eq!(a.model.encoder, untouched);
}

#[test]
fn empty_dev_is_rejected() {
    let (mut splits, tax) = small();
    splits.dev.clear();
    let err = train(&config(), &splits, &tax).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn out_of_range_label_is_rejected() {
    let (mut splits, tax) = small();
    splits.train[0].label = 9;
    assert!(matches!(train(&config(), &splits, &tax), Err(Error::LabelOutOfRange { label: 9, .. }) | Err(Error::InvalidInstance(_))));
}

#[test]
fn overflowing_loss_reports_divergence() {
    let (splits, tax) = small();
    let cfg = ExperimentConfig {
        temperature: 1e-310,
        ..config()
    };
    match train(&cfg, &splits, &tax) {
        Err(Error::Diverged(_)) => {}
        other => panic!("expected divergence, got {:?}", other.map(|a| a.metrics)),
    }
}

#[test]
fn multi_seed_aggregates_every_seed() {
    let (splits, tax) = small();
    let cfg = ExperimentConfig {
        seeds: vec![1, 2, 3],
        max_epochs: 2,
        ..config()
    };
    let run = run_multi_seed(&cfg, RunSpec::from_config(&cfg), &splits, &tax).unwrap();
    assert_eq!(run.artifacts.len(), 3);
    assert!(!run.report.single_run && run.report.failed_seeds.is_empty());
    let accs: Vec<f64> = run.report.runs.iter().map(|r| r.metrics.as_ref().unwrap().eval.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / 3.0;
    assert!((run.report.accuracy.unwrap().mean - mean).abs() < 1e-12);
    let best = best_leq_artifact(&run.artifacts).unwrap();
    assert!(run.artifacts.iter().all(|a| a.metrics.eval.leq <= best.metrics.eval.leq));
}
