use typegaze_autodiff::{Checkpoint, Tensor};
use typegaze_core::metrics::multimatch;
use typegaze_core::simulator::SimConfig;
use typegaze_model::amortizer::{Amortizer, AmortizerConfig};
use typegaze_model::infer::{infer_scanpath, DecodeMode};
use typegaze_model::train::{evaluate_loss, history_csv, prepare_all, simulate_samples, train, Prepared, TrainConfig};
use typegaze_model::{EyeModel, LossSwitches, ModelConfig, ModelError};

fn small_cfg() -> ModelConfig {
    ModelConfig { d_model: 16, n_heads: 2, n_encoder_layers: 1, n_decoder_layers: 1, max_fixations: 32, max_taps: 48, d_ff: 24, ..Default::default() }
}

fn sim() -> SimConfig {
    SimConfig { sample_theta: true, seed: 21, ..Default::default() }
}

fn data(n: usize, cfg: &ModelConfig) -> Vec<Prepared> {
    let s = sim();
    let samples = simulate_samples(&s, n, cfg).unwrap();
    let (d, skipped) = prepare_all(&samples, cfg, &s.layout.screen).unwrap();
    assert_eq!(skipped, 0);
    d
}

fn quick(steps: u64) -> TrainConfig {
    TrainConfig { steps, batch: 3, seed: 5, checkpoint_every: 0, ..Default::default() }
}

#[test]
fn simulated_samples_fit_the_model_limits() {
    let cfg = small_cfg();
    let samples = simulate_samples(&sim(), 12, &cfg).unwrap();
    assert_eq!(samples.len(), 12);
    for s in &samples {
        assert!(s.log.taps.len() <= cfg.max_taps && s.scanpath.len() <= cfg.max_fixations);
        assert_eq!(s.log.trial_id, s.scanpath.trial_id);
    }
}

#[test]
fn training_is_reproducible() {
    let cfg = small_cfg();
    let d = data(6, &cfg);
    let a = train(cfg.clone(), &d, &quick(12)).unwrap();
    let b = train(cfg.clone(), &d, &quick(12)).unwrap();
    assert_eq!(history_csv(&a.history), history_csv(&b.history));
    let ca = a.model.to_checkpoint(12, Some(a.optimizer.clone())).unwrap().to_bytes();
    let cb = b.model.to_checkpoint(12, Some(b.optimizer.clone())).unwrap().to_bytes();
    assert_eq!(ca, cb);
    let other = train(cfg, &d, &TrainConfig { seed: 6, ..quick(12) }).unwrap();
    assert_ne!(history_csv(&a.history), history_csv(&other.history));
}

#[test]
fn history_rows_follow_the_schedule() {
    let cfg = small_cfg();
    let d = data(4, &cfg);
    let out = train(cfg, &d, &TrainConfig { schedule: typegaze_autodiff::StepDecay { initial: 1e-3, factor: 0.5, every: 2 }, ..quick(5) }).unwrap();
    let lrs: Vec<f64> = out.history.iter().map(|r| r.lr).collect();
    assert_eq!(lrs, [1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4]);
    let csv = history_csv(&out.history);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,lr,total,sim,len,f,v"));
    assert_eq!(lines.count(), 5);
    for r in &out.history {
        let l = r.loss;
        assert!((l.total - (l.sim + l.len + l.f + l.v)).abs() < 1e-12);
    }
}

#[test]
fn checkpoints_restore_the_model() {
    let cfg = small_cfg();
    let d = data(4, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let tc = TrainConfig { checkpoint_every: 3, out_dir: Some(dir.path().to_path_buf()), ..quick(6) };
    let out = train(cfg, &d, &tc).unwrap();
    assert!(dir.path().join("step_000003.ckpt").exists());
    let last = Checkpoint::load(dir.path().join("step_000006.ckpt")).unwrap();
    assert_eq!(last.step, 6);
    assert_eq!(last.optimizer.as_ref().unwrap().step, 6);
    let restored = EyeModel::from_checkpoint(&last).unwrap();
    let (a, b) = (evaluate_loss(&out.model, &d).unwrap(), evaluate_loss(&restored, &d).unwrap());
    assert_eq!(a, b);
}

#[test]
fn amortizer_checkpoints_are_refused() {
    let am = Amortizer::new(AmortizerConfig::default()).unwrap();
    let ck = am.to_checkpoint().unwrap();
    match EyeModel::from_checkpoint(&ck) {
        Err(ModelError::WrongCheckpoint { found, .. }) => assert_eq!(found, "amortizer"),
        other => panic!("expected a kind mismatch, got {other:?}"),
    }
}

#[test]
fn non_finite_loss_aborts_with_the_last_good_checkpoint() {
    let cfg = small_cfg();
    let mut d = data(3, &cfg);
    let shape = d[0].features.shape().to_vec();
    d[0].features = Tensor::full(&shape, f64::NAN);
    let dir = tempfile::tempdir().unwrap();
    let tc = TrainConfig { batch: 3, out_dir: Some(dir.path().to_path_buf()), ..quick(4) };
    match train(cfg, &d, &tc) {
        Err(e @ ModelError::Diverged { step: 0, checkpoint: Some(_) }) => {
            assert!(e.is_numerical());
            if let ModelError::Diverged { checkpoint: Some(p), .. } = e {
                assert!(Checkpoint::load(p).is_ok());
            }
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training on NaN features succeeded"),
    }
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(train(small_cfg(), &[], &quick(1)).is_err());
    let cfg = small_cfg();
    let d = data(2, &cfg);
    assert!(train(cfg, &d, &TrainConfig { batch: 0, ..quick(1) }).is_err());
}

#[test]
fn one_trial_is_overfit_in_position() {
    // the guidance term pulls gaze toward the taps, away from the recorded positions
    let cfg = ModelConfig { loss_switches: LossSwitches { f: false, v: false, ..Default::default() }, ..Default::default() };
    let s = sim();
    let samples = simulate_samples(&s, 1, &cfg).unwrap();
    let (d, _) = prepare_all(&samples, &cfg, &s.layout.screen).unwrap();
    let mut tc = TrainConfig { batch: 1, ..quick(500) };
    tc.schedule.initial = 1e-3;
    let out = train(cfg, &d, &tc).unwrap();
    let geom = s.layout.screen;
    let pred = infer_scanpath(&out.model, &samples[0].log, &samples[0].theta, &geom, DecodeMode::Mean).unwrap();
    let mm = multimatch(&pred.scanpath, &samples[0].scanpath, &geom).unwrap();
    assert!(mm.position > 0.95, "position similarity {}", mm.position);
}
