use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varenn_lenet::*;

fn small_arch() -> Architecture {
    Architecture::lenet_narrow(4, 6, 16)
}

#[test]
fn zero_parameters_give_uniform_softmax() {
    let params = Params::<f32>::zeros(&Architecture::lenet()).unwrap();
    let images = vec![0.7f32; 60 * 60 * 3];
    let (logits, _) = forward(&params, &images, 1).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
    let probs = softmax(&logits);
    assert!(probs.data().iter().all(|&p| (p - 0.2).abs() < 1e-7));
}

#[test]
fn identical_images_give_identical_rows() {
    let arch = small_arch();
    let params = Params::<f32>::init(&arch, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img: Vec<f32> = (0..arch.input_len()).map(|_| rng.random()).collect();
    let two: Vec<f32> = img.iter().chain(img.iter()).copied().collect();
    let (logits, _) = forward(&params, &two, 2).unwrap();
    assert_eq!(logits.row(0), logits.row(1));
}

#[test]
fn wrong_input_length_names_input_layer() {
    let params = Params::<f32>::zeros(&small_arch()).unwrap();
    match forward(&params, &[0.0; 10], 1) {
        Err(LeNetError::Shape { layer, .. }) => assert_eq!(layer, "input"),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn predict_breaks_ties_toward_lower_class_and_normalizes() {
    let params = Params::<f64>::zeros(&small_arch()).unwrap();
    let preds = predict(&params, &vec![0.5f32; small_arch().input_len() * 3]).unwrap();
    assert_eq!(preds.len(), 3);
    for p in preds {
        assert_eq!(p.label, 0);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
}

#[test]
fn lr_schedule_values() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_schedule(0, &cfg), 0.01);
    assert!((lr_schedule(10, &cfg) - 0.005987369392383789).abs() < 1e-15);
    assert!((lr_schedule(10, &cfg) - 0.005987).abs() < 1e-6);
    let flat = TrainConfig {
        decay_gamma: 1.0,
        ..cfg
    };
    assert!((0..30).all(|e| lr_schedule(e, &flat) == 0.01));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = TrainConfig::default();
    for cfg in [
        TrainConfig { epochs: 0, ..base },
        TrainConfig {
            decay_gamma: 0.0,
            ..base
        },
        TrainConfig {
            decay_gamma: 1.5,
            ..base
        },
        TrainConfig {
            batch_size: 0,
            ..base
        },
    ] {
        assert!(matches!(cfg.validate(), Err(LeNetError::Config(_))));
    }
}

/// Two classes of 60×60×3 images: a bright blob in the upper-left quadrant
/// versus the lower-right, over uniform noise.
fn blobs(n: usize, seed: u64) -> (Vec<f32>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * 10800);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let (cy, cx) = if class == 0 {
            (15.0, 15.0)
        } else {
            (45.0, 45.0)
        };
        for y in 0..60 {
            for x in 0..60 {
                let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                let blob = (-d2 / 60.0).exp();
                for _ in 0..3 {
                    images.push((0.3 * rng.random::<f32>() + 0.7 * blob).min(1.0));
                }
            }
        }
        labels.push(class);
    }
    (images, labels)
}

/// Plain logistic regression on raw pixels, as an independent separability check.
fn logistic_baseline(train: (&[f32], &[usize]), test: (&[f32], &[usize])) -> f64 {
    let d = 10800;
    let mut w = vec![0.0f64; d];
    let mut b = 0.0;
    for _ in 0..20 {
        for (x, &y) in train.0.chunks(d).zip(train.1) {
            let z: f64 = b + x
                .iter()
                .zip(&w)
                .map(|(&xi, wi)| xi as f64 * wi)
                .sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let g = p - y as f64;
            for (wi, &xi) in w.iter_mut().zip(x) {
                *wi -= 0.001 * g * xi as f64;
            }
            b -= 0.001 * g;
        }
    }
    let correct = test
        .0
        .chunks(d)
        .zip(test.1)
        .filter(|(x, &y)| {
            let z: f64 = b + x
                .iter()
                .zip(&w)
                .map(|(&xi, wi)| xi as f64 * wi)
                .sum::<f64>();
            (z > 0.0) as usize == y
        })
        .count();
    correct as f64 / test.1.len() as f64
}

#[test]
fn separable_blobs_are_learned_within_five_epochs() {
    let (tx, ty) = blobs(160, 1);
    let (vx, vy) = blobs(60, 2);
    let baseline = logistic_baseline((&tx, &ty), (&vx, &vy));
    assert!(baseline >= 0.95, "baseline {baseline}");

    let arch = small_arch();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 16,
        seed: 4,
        ..Default::default()
    };
    let train = LabeledImages::new(&tx, &ty, arch.input_len()).unwrap();
    let val = LabeledImages::new(&vx, &vy, arch.input_len()).unwrap();
    let (params, log) = train::train::<f32>(&arch, &train, &val, &cfg).unwrap();
    assert_eq!(log.records.len(), 5);
    assert!(
        log.records.last().unwrap().val_accuracy >= 0.95,
        "{}",
        log.to_tsv()
    );

    let preds = predict(&params, &tx).unwrap();
    let acc = preds.iter().zip(&ty).filter(|(p, &y)| p.label == y).count() as f64 / ty.len() as f64;
    assert!(acc >= 0.95);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (tx, ty) = blobs(8, 3);
    let arch = small_arch();
    let cfg = TrainConfig {
        epochs: 2,
        base_lr: 0.0,
        batch_size: 4,
        seed: 9,
        ..Default::default()
    };
    let train = LabeledImages::new(&tx, &ty, arch.input_len()).unwrap();
    let init = Params::<f32>::init(&arch, 9).unwrap();
    let (params, _) = train_from(init.clone(), &train, &train, &cfg).unwrap();
    assert!(init.values().eq(params.values()));
}

#[test]
fn training_is_bitwise_deterministic_across_thread_counts() {
    let (tx, ty) = blobs(24, 5);
    let arch = small_arch();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        seed: 2,
        precision: Precision::F64,
        momentum: 0.9,
        ..Default::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let train = LabeledImages::new(&tx, &ty, arch.input_len()).unwrap();
            let (m, log) = Model::train(&arch, &train, &train, &cfg).unwrap();
            (m.to_bytes(), log)
        })
    };
    let (a, log_a) = run(1);
    let (b, log_b) = run(1);
    let (c, log_c) = run(3);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(log_a, log_b);
    assert_eq!(log_a, log_c);
}

#[test]
fn empty_splits_are_dataset_errors() {
    let arch = small_arch();
    let (tx, ty) = blobs(2, 3);
    let full = LabeledImages::new(&tx, &ty, arch.input_len()).unwrap();
    let empty = LabeledImages::new(&[], &[], arch.input_len()).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    assert!(matches!(
        train::train::<f32>(&arch, &empty, &full, &cfg),
        Err(LeNetError::Dataset(_))
    ));
    assert!(matches!(
        train::train::<f32>(&arch, &full, &empty, &cfg),
        Err(LeNetError::Dataset(_))
    ));
}

#[test]
fn overfits_one_small_batch() {
    let arch = small_arch();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let images: Vec<f32> = (0..16 * arch.input_len()).map(|_| rng.random()).collect();
    let labels: Vec<usize> = (0..16).map(|i| i % 5).collect();
    let mut params = Params::<f32>::init(&arch, 1).unwrap();
    let mut velocity = None;
    let mut last = f32::INFINITY;
    for _ in 0..200 {
        let (loss, grads) = batch_gradients(&params, &images, &labels).unwrap();
        last = loss;
        if loss < 0.01 {
            break;
        }
        sgd_step(&mut params, &grads, 0.05, 0.0, &mut velocity);
    }
    assert!(last < 0.01, "final loss {last}");
}
