//! Synthetic data through files, training, checkpointing, and evaluation.

use kuda::data::{
    generate_synthetic, load_source, load_target, save_features, save_source, save_target_truth, SyntheticConfig,
};
use kuda::model::{load_checkpoint, save_checkpoint};
use kuda::train::{format_log, Trainer};
use kuda::{evaluate, fit, resume, Averaging, TrainConfig, TrainState};

fn small() -> SyntheticConfig {
    SyntheticConfig {
        n_common: 3,
        n_src_private: 2,
        n_tgt_private: 2,
        dim: 8,
        per_class: 15,
        seed: 11,
        ..SyntheticConfig::default()
    }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        batch: 12,
        k: 5,
        max_steps: 20,
        hidden: Some(16),
        ..TrainConfig::default()
    }
}

#[test]
fn files_round_trip_into_training() {
    let dir = tempfile::tempdir().unwrap();
    let (s, t) = generate_synthetic(&small()).unwrap();
    let (sp, tp, truth) = (dir.path().join("s.udaf"), dir.path().join("t.udaf"), dir.path().join("truth.udaf"));
    save_source(&sp, &s).unwrap();
    save_features(&tp, t.features(), None).unwrap();
    save_target_truth(&truth, &t).unwrap();
    let s2 = load_source(&sp).unwrap();
    let t2 = load_target(&tp, Some(truth.as_path())).unwrap();
    assert_eq!(s2.features(), s.features());
    assert_eq!(t2.truth(), t.truth());

    let a = fit(&s, &t, &small_train()).unwrap();
    let b = fit(&s2, &t2, &small_train()).unwrap();
    assert_eq!(format_log(&a.log), format_log(&b.log));
    let report = evaluate(&t2, &b.state.model, Averaging::Macro).unwrap();
    assert_eq!(report.confusion.iter().flatten().sum::<usize>(), t.len());
    assert!((0.0..=1.0).contains(&report.h));
}

#[test]
fn resume_through_checkpoint_file() {
    let dir = tempfile::tempdir().unwrap();
    let (s, t) = generate_synthetic(&small()).unwrap();
    let cfg = small_train();
    let full = fit(&s, &t, &cfg).unwrap();

    let trainer = Trainer::new(&s, &t, cfg.clone()).unwrap();
    let mut state = TrainState::init(&s, &cfg).unwrap();
    trainer.run_until(&mut state, 7).unwrap();
    let path = dir.path().join("mid.udac");
    save_checkpoint(&path, &state.to_checkpoint()).unwrap();
    let restored = TrainState::from_checkpoint(load_checkpoint(&path).unwrap(), cfg.alpha).unwrap();
    let rest = resume(restored, &s, &t, &cfg).unwrap();
    assert_eq!(rest.log[..], full.log[7..]);
    assert_eq!(rest.state, full.state);
}

#[test]
fn evaluation_needs_truth() {
    let (s, t) = generate_synthetic(&small()).unwrap();
    let r = fit(&s, &t, &TrainConfig { max_steps: 1, ..small_train() }).unwrap();
    assert!(evaluate(&t.without_truth(), &r.state.model, Averaging::Macro).is_err());
}

#[test]
fn source_accuracy_baseline() {
    let (s, t) = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let cfg = TrainConfig { max_steps: 500, ..TrainConfig::default() };
    let r = fit(&s, &t, &cfg).unwrap();
    let tail = &r.log[450..];
    let acc = tail.iter().map(|x| x.source_acc).sum::<f64>() / tail.len() as f64;
    assert!(acc > 0.95, "source batch accuracy {acc}");
}
