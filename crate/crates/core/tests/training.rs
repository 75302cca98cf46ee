use augablate::arch::{build_allcnn, ArchName, WidthScale};
use augablate::augment::{Scheme, SchemeKind};
use augablate::data::{synthetic_blobs, Dataset};
use augablate::harness::{
    accuracy, evaluate, evaluate_tta, posteriors, train, train_network, tta_posteriors_with, ArchConfig,
    DataConfig, ExperimentConfig, RuntimeConfig, TrainOptions,
};
use augablate::optim::TrainConfig;
use rand::rngs::mock::StepRng;

fn eighth() -> WidthScale {
    WidthScale::new(1, 8).unwrap()
}

fn sgd(epochs: usize, weight_decay: f64) -> TrainConfig {
    TrainConfig {
        base_lr: 0.05,
        schedule: vec![],
        momentum: 0.9,
        nesterov: false,
        weight_decay,
        batch_size: 32,
        epochs,
        seed: 1,
    }
}

fn blobs() -> Dataset {
    synthetic_blobs(4, 256, 32, 9).unwrap()
}

fn inline() -> TrainOptions {
    TrainOptions::from(RuntimeConfig::default())
}

#[test]
fn tiny_net_fits_separable_blobs_within_five_epochs() {
    let ds = blobs();
    let mut net = build_allcnn::<f32>(false, 4, eighth(), false, 1).unwrap();
    let hist = train_network(&mut net, &sgd(5, 0.0), &Scheme::new(SchemeKind::None), &ds, &inline()).unwrap();
    let best = hist.epochs.iter().map(|e| e.train_acc).fold(0.0, f64::max);
    assert!(best >= 0.9, "train accuracy {best}");
    assert_eq!(hist.epochs.len(), 5);
}

#[test]
fn identical_seed_gives_bitwise_identical_history() {
    let ds = blobs();
    let run = || {
        let mut net = build_allcnn::<f32>(false, 4, eighth(), true, 1).unwrap();
        let h = train_network(&mut net, &sgd(2, 0.001), &Scheme::new(SchemeKind::Heavier), &ds, &inline()).unwrap();
        let weights: Vec<Vec<f32>> = net.params().iter().map(|p| p.value.data().to_vec()).collect();
        (h.metric_log(), weights, h.dropout_mask_draws)
    };
    assert_eq!(run(), run());
}

#[test]
fn weight_decay_shrinks_conv_kernels() {
    let ds = blobs();
    let norm = |wd: f64| {
        let mut net = build_allcnn::<f32>(false, 4, eighth(), false, 1).unwrap();
        train_network(&mut net, &sgd(3, wd), &Scheme::new(SchemeKind::Light), &ds, &inline()).unwrap();
        net.conv_kernel_sq_norm()
    };
    let with = norm(0.001);
    let without = norm(0.0);
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn unregularized_leg_never_touches_decay_or_dropout() {
    let data = DataConfig::synthetic(4, 96, 16, 32);
    let (ds, _) = data.load().unwrap();
    let mut cfg = ExperimentConfig {
        arch: ArchConfig::new(ArchName::AllCnnCifar, eighth()),
        data,
        train: sgd(1, 0.0),
        scheme: SchemeKind::Light,
        crop: None,
        regularized: false,
        tta_views: 2,
        runtime: RuntimeConfig::default(),
    };
    let (net, off) = train(&cfg, &ds, &inline()).unwrap();
    assert_eq!(net.dropout_layer_count(), 0);
    assert_eq!((off.decay_applications, off.dropout_mask_draws), (0, 0));

    cfg.regularized = true;
    cfg.train.weight_decay = 0.001;
    let (net, on) = train(&cfg, &ds, &inline()).unwrap();
    assert_eq!(net.dropout_layer_count(), 3);
    // Nine kernels decayed per step; three dropout masks per step.
    assert_eq!(on.decay_applications, 9 * on.steps);
    assert_eq!(on.dropout_mask_draws, 3 * on.steps);
}

fn trained() -> (augablate::arch::Network<f32>, Dataset) {
    let ds = blobs();
    let mut net = build_allcnn::<f32>(false, 4, eighth(), false, 2).unwrap();
    train_network(&mut net, &sgd(2, 0.0), &Scheme::new(SchemeKind::None), &ds, &inline()).unwrap();
    (net, ds)
}

#[test]
fn single_identity_view_equals_plain_evaluation() {
    let (mut net, ds) = trained();
    let plain = posteriors(&mut net, &ds, None).unwrap();
    let tta = tta_posteriors_with(&mut net, &ds, 1, None, |_, _| StepRng::new(1 << 63, 0)).unwrap();
    assert_eq!(plain, tta);
    assert_eq!(accuracy(&tta, &ds.labels), evaluate(&mut net, &ds, None).unwrap());
}

#[test]
fn averaged_posteriors_are_distributions() {
    let (mut net, ds) = trained();
    let post = tta_posteriors_with(&mut net, &ds, 10, None, |v, i| {
        augablate::rng::keyed(4, augablate::rng::Domain::Tta, v as u64, i as u64)
    })
    .unwrap();
    for row in &post {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn tta_is_deterministic_and_in_range() {
    let (mut net, ds) = trained();
    let a = evaluate_tta(&mut net, &ds, 10, 7, None).unwrap();
    let b = evaluate_tta(&mut net, &ds, 10, 7, None).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a));
    assert!(evaluate_tta(&mut net, &ds, 0, 7, None).is_err());
}

#[test]
fn checkpoint_restores_predictions() {
    let (mut net, ds) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.augb");
    net.save(&path).unwrap();
    let mut back = augablate::arch::Network::<f32>::load(&path).unwrap();
    assert_eq!(posteriors(&mut net, &ds, None).unwrap(), posteriors(&mut back, &ds, None).unwrap());
}
