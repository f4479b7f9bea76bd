use active_texture_core::classifier::{softmax, GradCheckOptions, LayerKind};
use active_texture_core::rng::{self, StreamRng};
use active_texture_core::{
    generate_synthetic, predict_reference, ClassifierConfig, ClassifierError, ConvClassifier, ImageSource,
    ProbabilisticClassifier, ReferenceSet, SyntheticClassParams, TextureImage,
};

fn small_config(classes: usize) -> ClassifierConfig {
    ClassifierConfig {
        input_shape: (12, 12, 1),
        conv_channels: vec![3, 4],
        dense_hidden_units: 8,
        num_classes: classes,
        ..Default::default()
    }
}

fn noise_image(h: usize, w: usize, seed: u64, fabric: &str) -> TextureImage {
    use rand::Rng;
    let mut r = rng::stream(seed, &[rng::tag("noise-image")]);
    let pixels = (0..h * w).map(|_| r.random::<f64>()).collect();
    TextureImage::new(pixels, h, w, 1, fabric, format!("{fabric}/{seed}"), ImageSource::File { path: String::new() })
}

fn train_rng(seed: u64) -> StreamRng {
    rng::stream(seed, &[rng::tag("test-train")])
}

#[test]
fn same_seed_gives_identical_parameters() {
    let a = ConvClassifier::new(ClassifierConfig::default(), 3).unwrap();
    let b = ConvClassifier::new(ClassifierConfig::default(), 3).unwrap();
    let c = ConvClassifier::new(ClassifierConfig::default(), 4).unwrap();
    assert_eq!(a.parameters(), b.parameters());
    assert_ne!(a.parameters(), c.parameters());
    // 8*9+8 + 16*72+16 + 64*576+64 + 4*64+4
    assert_eq!(a.parameter_count(), 80 + 1168 + 36928 + 260);
}

#[test]
fn fresh_networks_are_uniform_on_average() {
    let img = noise_image(32, 32, 1, "f");
    let mut mean = [0.0; 4];
    for seed in 0..100 {
        let c = ConvClassifier::new(ClassifierConfig::default(), seed).unwrap();
        for (m, p) in mean.iter_mut().zip(c.predict_deterministic(&img).unwrap().probs()) {
            *m += p / 100.0;
        }
    }
    for m in mean {
        assert!((m - 0.25).abs() < 0.1, "{mean:?}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        ClassifierConfig { dropout_rate: 1.0, ..Default::default() },
        ClassifierConfig { num_classes: 1, ..Default::default() },
        ClassifierConfig { conv_channels: vec![8, 0], ..Default::default() },
        ClassifierConfig { input_shape: (6, 6, 1), ..Default::default() },
    ] {
        assert!(matches!(ConvClassifier::new(cfg, 0), Err(ClassifierError::Param(_))));
    }
}

#[test]
fn single_class_is_fit() {
    let cfg = small_config(2);
    let mut c = ConvClassifier::new(cfg, 1).unwrap();
    let samples: Vec<_> = (0..20).map(|i| (noise_image(12, 12, i, "a"), 0)).collect();
    let stats = c.train_epochs(&samples, 10, &mut train_rng(1)).unwrap();
    assert_eq!(stats.final_train_accuracy, 1.0);
    assert!(stats.final_loss < 0.1, "{}", stats.final_loss);
    assert_eq!(stats.epoch_losses.len(), 10);
}

fn nearest_mean_accuracy(samples: &[(TextureImage, usize)]) -> f64 {
    let n = samples[0].0.pixels.len();
    let mut means = [vec![0.0; n], vec![0.0; n]];
    let mut counts = [0.0; 2];
    for (img, l) in samples {
        counts[*l] += 1.0;
        for (m, p) in means[*l].iter_mut().zip(&img.pixels) {
            *m += p;
        }
    }
    for l in 0..2 {
        means[l].iter_mut().for_each(|m| *m /= counts[l]);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let hits = samples
        .iter()
        .filter(|(img, l)| {
            let d0 = dist(&img.pixels, &means[0]);
            let d1 = dist(&img.pixels, &means[1]);
            (if d0 <= d1 { 0 } else { 1 }) == *l
        })
        .count();
    hits as f64 / samples.len() as f64
}

#[test]
fn separable_classes_reach_full_train_accuracy() {
    let classes = [
        SyntheticClassParams::grating(0.0, 3.0).with_noise(0.05),
        SyntheticClassParams::grating(90.0, 3.0).with_noise(0.05),
    ];
    let ds = generate_synthetic(&classes, 10, (12, 12), 4).unwrap();
    let samples: Vec<_> =
        ds.fabrics().iter().enumerate().flat_map(|(l, f)| f.images.iter().map(move |i| (i.clone(), l))).collect();
    assert_eq!(nearest_mean_accuracy(&samples), 1.0, "oracle says the classes are not separable");
    let mut c = ConvClassifier::new(small_config(2), 2).unwrap();
    let stats = c.train_epochs(&samples, 50, &mut train_rng(2)).unwrap();
    assert_eq!(stats.final_train_accuracy, 1.0);
}

#[test]
fn full_batch_descent_is_monotone() {
    let cfg =
        ClassifierConfig { dropout_rate: 0.0, momentum: 0.0, batch_size: 8, learning_rate: 0.005, ..small_config(2) };
    let mut c = ConvClassifier::new(cfg, 5).unwrap();
    c.set_shuffle(false);
    let samples: Vec<_> = (0..8).map(|i| (noise_image(12, 12, 100 + i, "a"), (i % 2) as usize)).collect();
    let mut r = train_rng(5);
    let mut losses = vec![c.evaluate(&samples).unwrap().0];
    for _ in 0..5 {
        losses.push(c.train_epochs(&samples, 1, &mut r).unwrap().final_loss);
    }
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{losses:?}");
    }
}

#[test]
fn training_is_bit_reproducible() {
    let samples: Vec<_> = (0..12).map(|i| (noise_image(12, 12, i, "a"), (i % 3) as usize)).collect();
    let run = || {
        let mut c = ConvClassifier::new(small_config(3), 9).unwrap();
        c.train_epochs(&samples, 3, &mut train_rng(9)).unwrap();
        c
    };
    assert_eq!(run().parameters(), run().parameters());
}

#[test]
fn deterministic_prediction_contracts() {
    let c = ConvClassifier::new(ClassifierConfig::default(), 11).unwrap();
    let img = noise_image(32, 32, 2, "f");
    let a = c.predict_deterministic(&img).unwrap();
    let b = c.predict_deterministic(&img).unwrap();
    assert_eq!(a, b);
    assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let logits = c.logits(&img).unwrap();
    let shifted: Vec<f64> = logits.iter().map(|z| z + 64.0).collect();
    let (p, q) = (softmax(&logits), softmax(&shifted));
    for (x, y) in p.iter().zip(&q) {
        assert!((x - y).abs() < 1e-15, "{p:?} vs {q:?}");
    }

    let wrong = noise_image(16, 16, 2, "f");
    assert!(matches!(c.predict_deterministic(&wrong), Err(ClassifierError::InputShape { .. })));
}

#[test]
fn zero_dropout_mc_equals_deterministic() {
    let cfg = ClassifierConfig { dropout_rate: 0.0, ..Default::default() };
    let c = ConvClassifier::new(cfg, 12).unwrap();
    let img = noise_image(32, 32, 3, "f");
    let det = c.predict_deterministic(&img).unwrap();
    let mc = c.predict_mc(&img, 5, &mut train_rng(12)).unwrap();
    assert_eq!(mc.len(), 5);
    assert!(mc.iter().all(|s| *s == det));
}

#[test]
fn half_dropout_mc_has_spread_and_replays() {
    let cfg = ClassifierConfig { dropout_rate: 0.5, ..small_config(2) };
    let mut c = ConvClassifier::new(cfg, 13).unwrap();
    let samples: Vec<_> = (0..10).map(|i| (noise_image(12, 12, i, "a"), (i % 2) as usize)).collect();
    c.train_epochs(&samples, 5, &mut train_rng(13)).unwrap();
    let img = noise_image(12, 12, 99, "a");
    let mc = c.predict_mc(&img, 100, &mut train_rng(14)).unwrap();
    let mean: f64 = mc.iter().map(|s| s.probs()[0]).sum::<f64>() / 100.0;
    let var: f64 = mc.iter().map(|s| (s.probs()[0] - mean).powi(2)).sum::<f64>() / 100.0;
    assert!(var > 0.0);
    assert_eq!(mc, c.predict_mc(&img, 100, &mut train_rng(14)).unwrap());
}

#[test]
fn reference_prediction_averages_deterministic_outputs() {
    let c = ConvClassifier::new(ClassifierConfig::default(), 15).unwrap();
    let imgs: Vec<_> = (0..3).map(|i| noise_image(32, 32, i, "r")).collect();
    let (label, mean) = predict_reference(&c, &ReferenceSet::new(imgs.clone()).unwrap()).unwrap();
    let mut want = [0.0; 4];
    for img in &imgs {
        for (w, p) in want.iter_mut().zip(c.predict_deterministic(img).unwrap().probs()) {
            *w += p;
        }
    }
    for (m, w) in mean.iter().zip(want) {
        assert!((m - w / 3.0).abs() < 1e-15);
    }
    assert_eq!(label, active_texture_core::argmax_first(&mean));
    assert_eq!(ReferenceSet::new(vec![]), Err(ClassifierError::EmptyReference));
}

fn gradcheck_batch(shape: (usize, usize)) -> Vec<(TextureImage, usize)> {
    (0..3).map(|i| (noise_image(shape.0, shape.1, 40 + i, "g"), i as usize % 4)).collect()
}

#[test]
fn gradients_match_finite_differences_for_every_layer_kind() {
    for dropout_rate in [0.0, 0.25] {
        let cfg = ClassifierConfig { dropout_rate, ..Default::default() };
        let c = ConvClassifier::new(cfg, 21).unwrap();
        let report = c.gradient_check(&gradcheck_batch((32, 32)), &GradCheckOptions::default()).unwrap();
        assert!(report.checked >= 200, "{}", report.checked);
        for kind in [LayerKind::Conv, LayerKind::Dense, LayerKind::Output] {
            assert!(report.tensors.iter().any(|t| t.kind == kind && t.checked > 0));
            assert!(report.max_for(kind) < 1e-4, "{kind:?}: {}", report.max_for(kind));
        }
    }
}

#[test]
fn corrupted_gradients_are_detected() {
    let c = ConvClassifier::new(ClassifierConfig::default(), 22).unwrap();
    for t in 0..c.tensors().len() {
        let opts = GradCheckOptions { corrupt_tensor: Some(t), ..Default::default() };
        let report = c.gradient_check(&gradcheck_batch((32, 32)), &opts).unwrap();
        assert!(report.max_relative_error > 0.5, "{}: {}", c.tensors()[t].name, report.max_relative_error);
    }
}

#[test]
fn saturated_softmax_does_not_blow_up_the_check() {
    let cfg = ClassifierConfig { dropout_rate: 0.0, learning_rate: 0.05, ..small_config(2) };
    let mut c = ConvClassifier::new(cfg, 23).unwrap();
    let batch = vec![(noise_image(12, 12, 7, "s"), 1)];
    c.train_epochs(&batch, 200, &mut train_rng(23)).unwrap();
    let loss = c.evaluate(&batch).unwrap().0;
    assert!(loss < 1e-6, "{loss}");
    let report = c.gradient_check(&batch, &GradCheckOptions::default()).unwrap();
    assert!(report.max_relative_error.is_finite());
    assert!(report.max_relative_error < 1e-2, "{}", report.max_relative_error);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut c = ConvClassifier::new(small_config(3), 31).unwrap();
    let samples: Vec<_> = (0..6).map(|i| (noise_image(12, 12, i, "a"), (i % 3) as usize)).collect();
    c.train_epochs(&samples, 2, &mut train_rng(31)).unwrap();
    let blob = c.to_checkpoint();
    let d = ConvClassifier::from_checkpoint(&blob).unwrap();
    assert_eq!(c.parameters(), d.parameters());
    assert_eq!(c.velocity(), d.velocity());
    assert_eq!(c.config(), d.config());
    assert_eq!((c.steps(), c.init_seed()), (d.steps(), d.init_seed()));
    assert_eq!(d.to_checkpoint(), blob);

    assert!(matches!(ConvClassifier::from_checkpoint(&blob[..blob.len() - 1]), Err(ClassifierError::Checkpoint(_))));
    assert!(matches!(ConvClassifier::from_checkpoint(b"nope"), Err(ClassifierError::Checkpoint(_))));
}

#[test]
fn divergence_invalidates_the_classifier() {
    let mut c = ConvClassifier::new(small_config(2), 41).unwrap();
    let samples: Vec<_> = (0..8).map(|i| (noise_image(12, 12, i, "a"), (i % 2) as usize)).collect();
    let last = c.parameter_count() - 1;
    c.parameters_mut()[last] = f64::NAN;
    let err = c.train_epochs(&samples, 2, &mut train_rng(41)).unwrap_err();
    assert!(matches!(err, ClassifierError::NumericalDivergence { .. }), "{err:?}");
    assert!(!c.is_valid());
    assert_eq!(c.predict_deterministic(&samples[0].0), Err(ClassifierError::Invalidated));
    c.reinitialize();
    assert!(c.is_valid());
}
