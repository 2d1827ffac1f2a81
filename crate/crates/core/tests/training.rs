use pcdeid::gradcheck::{random_grids, small_config};
use pcdeid::loss::LossWeights;
use pcdeid::model::{load_params, save_params, ModelKind, ModelParams};
use pcdeid::objective::Task;
use pcdeid::optim::{lr_at, TrainConfig};
use pcdeid::train::{train_autoencoder, train_classifier};

#[test]
fn schedule_is_exact_step_decay() {
    let cfg = TrainConfig::default();
    assert_eq!((cfg.eta0, cfg.lambda, cfg.decay_period), (0.001, 0.5, 20));
    for e in 0..200 {
        let expected = 0.001 * 0.5f64.powi((e / 20) as i32);
        assert_eq!(lr_at(e, &cfg).to_bits(), expected.to_bits(), "epoch {e}");
    }
    assert_eq!(lr_at(19, &cfg), 0.001);
    assert_eq!(lr_at(20, &cfg), 0.0005);
    assert_eq!(lr_at(199, &cfg), 0.001 / 512.0);
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
}

fn tiny(max_epochs: usize) -> TrainConfig {
    TrainConfig { batch_size: 3, max_epochs, seed: 5, ..TrainConfig::default() }
}

#[test]
fn interrupted_classifier_training_resumes_bit_identically() {
    let train = random_grids(8, 2, 4, 2, 3, 1);
    let val = random_grids(4, 2, 4, 2, 3, 2);
    let cfg = small_config(3);
    let straight = train_classifier(&train, &val, Task::Gesture, &cfg, &tiny(4), None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    train_classifier(&train, &val, Task::Gesture, &cfg, &tiny(2), Some(dir.path())).unwrap();
    let resumed = train_classifier(&train, &val, Task::Gesture, &cfg, &tiny(4), Some(dir.path())).unwrap();
    assert_eq!(bits(&straight.last), bits(&resumed.last));
    assert_eq!(bits(&straight.params), bits(&resumed.params));
    assert_eq!(straight.history, resumed.history);
    assert!(dir.path().join("history.csv").exists());
}

#[test]
fn autoencoder_training_is_finite_and_reproducible() {
    let train = random_grids(8, 2, 4, 2, 3, 11);
    let val = random_grids(4, 2, 4, 2, 3, 12);
    let cfg = small_config(4);
    let tc = tiny(3);
    let g = train_classifier(&train, &val, Task::Gesture, &cfg, &tc, None).unwrap().params;
    let u = train_classifier(&train, &val, Task::Identity, &cfg, &tc, None).unwrap().params;
    let w = LossWeights::for_subjects(3);
    let ae_cfg = pcdeid::model::ModelConfig { d_h: 6, ..cfg };
    let a = train_autoencoder(&train, &val, &g, &u, &w, &ae_cfg, &tc, None).unwrap();
    let b = train_autoencoder(&train, &val, &g, &u, &w, &ae_cfg, &tc, None).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert!(a.history.iter().all(|r| r.l_point.is_finite() && r.l_ges.is_finite() && r.val_loss.is_finite()));
    assert!(a.params.all_finite());
}

#[test]
fn parameter_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (i, kind) in [ModelKind::Autoencoder, ModelKind::Classifier { classes: 5 }].into_iter().enumerate() {
        let p = ModelParams::init(&small_config(i as u64), kind).unwrap();
        let path = dir.path().join(format!("{i}.params"));
        save_params(&path, &p, None).unwrap();
        let (back, opt) = load_params(&path).unwrap();
        assert!(opt.is_none());
        assert_eq!(back.config, p.config);
        assert_eq!(back.kind, p.kind);
        assert_eq!(bits(&back), bits(&p));
    }
}
