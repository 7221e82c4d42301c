use std::ops::ControlFlow;

use super::*;
use crate::dataio::{toy_corpus, CheckIn, Poi, ToySpec, TrajectorySession};
use crate::evaluation::{evaluate, Subset};
use crate::model::{Model, ModelConfig};

fn toy(spec: &ToySpec, seed: u64) -> (Vec<TrajectorySession>, Vec<Poi>) {
    let (checkins, pois, _) = toy_corpus(spec, seed).unwrap();
    (crate::dataio::sessionize(&checkins, crate::dataio::DEFAULT_SESSION_GAP_SECS), pois)
}

fn small_config(pois: usize, cats: usize) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        max_seq: 16,
        train_seq_len: 16,
        tf_layers: 1,
        tf_heads: 2,
        tf_ff: 16,
        lstm_layers: 1,
        lstm_hidden: 8,
        ..ModelConfig::new(pois, cats)
    }
}

struct Injected(Vec<f64>);

impl TrainObserver for Injected {
    fn val_loss(&mut self, epoch: usize, _measured: f64) -> f64 {
        self.0[epoch - 1]
    }
}

fn tiny_windows() -> (Vec<TrainingWindow>, ModelConfig) {
    let spec = ToySpec { users: 3, poi_count: 10, sessions_per_user: 2, session_len: 6, categories: 2 };
    let (sessions, pois) = toy(&spec, 1);
    (make_windows(&sessions, &pois, 8).unwrap(), ModelConfig::miniature(10, 2))
}

#[test]
fn patience_stops_on_third_rise() {
    let (windows, cfg) = tiny_windows();
    let model = Model::new(cfg, 0).unwrap();
    let tc = TrainConfig { max_epochs: 10, ..Default::default() };
    let mut obs = Injected(vec![1.0, 1.1, 1.2, 1.3, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0]);
    let before = model.params.snapshot();
    let out = train(model, &windows, &windows, &tc, &mut obs).unwrap();
    assert_eq!(out.log.len(), 4);
    assert!(out.stopped_early);
    assert_eq!(out.best_epoch, 1);

    // the returned weights are those after epoch 1: rerun one epoch
    let model = Model::new(ModelConfig::miniature(10, 2), 0).unwrap();
    let one = train(model, &windows, &windows, &TrainConfig { max_epochs: 1, ..tc }, &mut NoObserver).unwrap();
    assert_eq!(out.model.params.snapshot(), one.model.params.snapshot());
    assert_ne!(out.model.params.snapshot(), before);
}

#[test]
fn a_dip_resets_the_rise_count() {
    let (windows, cfg) = tiny_windows();
    let tc = TrainConfig { max_epochs: 7, ..Default::default() };
    let mut obs = Injected(vec![1.0, 1.1, 1.2, 1.15, 1.3, 1.4, 1.5]);
    let out = train(Model::new(cfg, 0).unwrap(), &windows, &[], &tc, &mut obs).unwrap();
    assert_eq!(out.log.len(), 7);
    assert!(out.stopped_early);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn best_epoch_is_never_worse_than_observed() {
    let (windows, cfg) = tiny_windows();
    let tc = TrainConfig { max_epochs: 6, patience: 2, ..Default::default() };
    let mut obs = Injected(vec![3.0, 2.0, 2.5, 1.5, 1.6, 1.7]);
    let out = train(Model::new(cfg, 0).unwrap(), &windows, &windows, &tc, &mut obs).unwrap();
    assert_eq!(out.best_epoch, 4);
    let best = out.log.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.log[out.best_epoch - 1].val_loss, best);
}

#[test]
fn observer_can_stop_training() {
    struct StopAt(usize);
    impl TrainObserver for StopAt {
        fn on_epoch_end(&mut self, _m: &Model, r: &EpochRecord) -> ControlFlow<()> {
            if r.epoch == self.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
        }
    }
    let (windows, cfg) = tiny_windows();
    let out = train(Model::new(cfg, 0).unwrap(), &windows, &[], &TrainConfig::default(), &mut StopAt(2)).unwrap();
    assert_eq!(out.log.len(), 2);
    assert!(!out.stopped_early);
}

#[test]
fn same_seed_same_run() {
    let (windows, cfg) = tiny_windows();
    let tc = TrainConfig { max_epochs: 3, seed: 9, batch_size: 8, ..Default::default() };
    let run = || train(Model::new(cfg.clone(), 5).unwrap(), &windows, &windows, &tc, &mut NoObserver).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(format_loss_log(&a.log), format_loss_log(&b.log));
    let bits = |m: &Model| crate::numerics::checkpoint::encode(&m.params);
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(parse_loss_log(&format_loss_log(&a.log)).unwrap(), a.log);
}

#[test]
fn checkpoint_round_trip_keeps_validation_loss() {
    let (windows, cfg) = tiny_windows();
    let tc = TrainConfig { max_epochs: 2, ..Default::default() };
    let out = train(Model::new(cfg, 5).unwrap(), &windows, &windows, &tc, &mut NoObserver).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.model.save(dir.path()).unwrap();
    let back = Model::load(dir.path()).unwrap();
    let a = mean_loss(&out.model, &windows, BatchMode::Prefix, 64).unwrap();
    let b = mean_loss(&back, &windows, BatchMode::Prefix, 64).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(a.to_bits(), out.log[out.best_epoch - 1].val_loss.to_bits());
}

#[test]
fn nan_loss_is_reported() {
    let (windows, cfg) = tiny_windows();
    let mut model = Model::new(cfg, 0).unwrap();
    for p in model.params.iter_mut().filter(|p| p.name.starts_with("head.poi.1")) {
        p.value.fill(f64::NAN);
    }
    let err = train(model, &windows, &[], &TrainConfig::default(), &mut NoObserver).unwrap_err();
    assert!(matches!(err, crate::Error::Diverged { epoch: 1, batch: 1, .. }), "{err}");
}

#[test]
fn rejects_bad_config() {
    let (windows, cfg) = tiny_windows();
    for tc in [
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { patience: 0, ..Default::default() },
        TrainConfig { lr: -1.0, ..Default::default() },
    ] {
        assert!(train(Model::new(cfg.clone(), 0).unwrap(), &windows, &[], &tc, &mut NoObserver).is_err());
    }
    assert!(train(Model::new(cfg, 0).unwrap(), &[], &[], &TrainConfig::default(), &mut NoObserver).is_err());
}

#[test]
fn toy_rule_is_learned() {
    let spec = ToySpec { users: 10, poi_count: 20, sessions_per_user: 10, session_len: 10, categories: 4 };
    let (sessions, pois) = toy(&spec, 3);
    let windows = make_windows(&sessions, &pois, 16).unwrap();
    let model = Model::new(small_config(20, 4), 1).unwrap();
    let tc = TrainConfig { max_epochs: 50, ..Default::default() };
    let out = train(model, &windows, &[], &tc, &mut NoObserver).unwrap();
    let total = evaluate(&out.model, &windows).unwrap().into_iter().find(|r| r.subset == Subset::Total).unwrap();
    assert!(total.top1 >= 0.95, "top1 {} after {} epochs", total.top1, out.log.len());
}

#[test]
fn toy_sessions_have_expected_shape() {
    let spec = ToySpec::default();
    let (checkins, _, _): (Vec<CheckIn>, _, _) = toy_corpus(&spec, 0).unwrap();
    let sessions = crate::dataio::sessionize(&checkins, crate::dataio::DEFAULT_SESSION_GAP_SECS);
    assert_eq!(sessions.len(), spec.users * spec.sessions_per_user);
}
