use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wingbeat::dataset::{AudioClip, SpeciesLabel, NUM_CLASSES};
use wingbeat::features::{extract_features, FeatureConfig, FeaturePatch};
use wingbeat::models::*;
use wingbeat::nn::{InitScheme, ModelMetadata, TrainConfig, TrainedModel};

fn metadata(architecture: &str) -> ModelMetadata {
    ModelMetadata {
        architecture: architecture.into(),
        feature_config: None,
        seed: 0,
        epochs: 0,
        batch_size: 0,
        dropout_rate: 0.5,
        classes: vec![],
        loss_curve: vec![],
    }
}

fn patch(cfg: &FeatureConfig, values: Vec<f32>) -> FeaturePatch {
    FeaturePatch {
        values,
        n_bands: cfg.n_bands,
        n_frames: cfg.n_frames,
        label: SpeciesLabel::TARGET,
        source_id: "p".into(),
        patch_index: 0,
    }
}

fn multiclass_model(cfg: &FeatureConfig, scheme: InitScheme, seed: u64) -> TrainedModel {
    let mut network = build_multiclass(cfg, &ArchitectureOptions::default()).unwrap();
    network.init(scheme, &mut ChaCha8Rng::seed_from_u64(seed));
    TrainedModel { network, metadata: metadata(MULTICLASS_ARCHITECTURE) }
}

#[test]
fn equal_logits_give_uniform_probabilities() {
    let cfg = FeatureConfig::custom(30, 12, 128, 512).unwrap();
    let model = multiclass_model(&cfg, InitScheme::Zeros, 0);
    let (label, p) = predict_multiclass(&model, &patch(&cfg, vec![0.5; 360])).unwrap();
    assert_eq!(label.index(), 0);
    for v in p {
        assert!((v - 1.0 / 23.0).abs() < 1e-6);
    }
}

#[test]
fn a_dominant_logit_wins() {
    let cfg = FeatureConfig::custom(30, 12, 128, 512).unwrap();
    let mut model = multiclass_model(&cfg, InitScheme::Zeros, 0);
    let last = model.network.params_mut().last_mut().unwrap();
    last.data_mut()[7] = 10.0;
    let (label, p) = predict_multiclass(&model, &patch(&cfg, vec![0.3; 360])).unwrap();
    assert_eq!(label.index(), 7);
    assert!(p[7] > 0.99);
    let expected = 10f64.exp() / (10f64.exp() + 22.0);
    assert!((p[7] as f64 - expected).abs() < 1e-6);
}

#[test]
fn probabilities_sum_to_one_and_predictions_are_pure() {
    let cfg = FeatureConfig::custom(30, 12, 128, 512).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..5 {
        let model = multiclass_model(&cfg, InitScheme::GlorotUniform, seed);
        let p = patch(&cfg, (0..360).map(|_| rng.random()).collect());
        let (a, probs) = predict_multiclass(&model, &p).unwrap();
        assert_eq!(probs.len(), NUM_CLASSES);
        assert!((probs.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-5);
        assert_eq!(predict_multiclass(&model, &p).unwrap(), (a, probs));
    }
}

fn tone(hz: f64, seconds: f64, species: SpeciesLabel, id: &str, phase: f64) -> AudioClip {
    let n = (seconds * 8000.0) as usize;
    AudioClip {
        samples: (0..n).map(|t| (0.7 * (2.0 * std::f64::consts::PI * hz * t as f64 / 8000.0 + phase).sin()) as f32).collect(),
        sample_rate: 8000,
        species,
        source_id: id.into(),
    }
}

#[test]
fn held_out_positive_has_a_clear_margin() {
    let cfg = FeatureConfig::custom(20, 12, 128, 512).unwrap();
    let neg = SpeciesLabel::from_name("Culex_tarsalis").unwrap();
    let train_clips = [tone(500.0, 6.0, SpeciesLabel::TARGET, "pos_a", 0.0), tone(1500.0, 6.0, neg, "neg_a", 0.0)];
    let train = extract_features(&train_clips, &cfg).unwrap().patches;
    let refs: Vec<&FeaturePatch> = train.iter().collect();
    let model = train_binary(&refs, &cfg, &TrainConfig { seed: 1, ..TrainConfig::default() }, &ArchitectureOptions::default()).unwrap();

    let held = extract_features(&[tone(500.0, 2.0, SpeciesLabel::TARGET, "pos_b", 1.3)], &cfg).unwrap().patches;
    for p in &held {
        let (label, s) = predict_binary(&model, p).unwrap();
        assert_eq!(label, BinaryLabel::Positive);
        assert!(s[0] - s[1] > 0.2, "{s:?}");
    }
}

fn binary_model(cfg: &FeatureConfig, seed: u64) -> TrainedModel {
    let mut network = build_binary(cfg, &ArchitectureOptions::default()).unwrap();
    network.init(InitScheme::GlorotUniform, &mut ChaCha8Rng::seed_from_u64(seed));
    TrainedModel { network, metadata: metadata(BINARY_ARCHITECTURE) }
}

#[test]
fn ensemble_manifest_round_trip() {
    let cfg = FeatureConfig::custom(10, 10, 128, 256).unwrap();
    let base: Vec<(SpeciesLabel, TrainedModel)> =
        (1..4).map(|i| (SpeciesLabel::from_index(i * 4).unwrap(), binary_model(&cfg, i as u64))).collect();
    let ensemble = EnsembleModel::new(base, 0.6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ensemble.txt");
    write_ensemble_manifest(&ensemble, &path).unwrap();
    let back = read_ensemble_manifest(&path).unwrap();
    assert_eq!(back.vote_threshold, 0.6);
    assert_eq!(back.base_models, ensemble.base_models);
    assert_eq!(back.min_votes(), 2);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let patches: Vec<FeaturePatch> = (0..6).map(|_| patch(&cfg, (0..100).map(|_| rng.random()).collect())).collect();
    let refs: Vec<&FeaturePatch> = patches.iter().collect();
    assert_eq!(predict_ensemble_batch(&back, &refs).unwrap(), predict_ensemble_batch(&ensemble, &refs).unwrap());

    std::fs::write(&path, "version = 2\nthreshold = 0.6\n").unwrap();
    assert!(read_ensemble_manifest(&path).is_err());
}

#[test]
fn ensemble_rejects_bad_voters() {
    let cfg = FeatureConfig::custom(10, 10, 128, 256).unwrap();
    let m = binary_model(&cfg, 0);
    assert!(EnsembleModel::new(vec![(SpeciesLabel::TARGET, m.clone())], 0.9).is_err());
    let neg = SpeciesLabel::from_index(2).unwrap();
    assert!(EnsembleModel::new(vec![(neg, m.clone()), (neg, m.clone())], 0.9).is_err());
    assert!(EnsembleModel::new(vec![(neg, m)], 0.4).is_err());
}

fn oracle(votes: &[bool], threshold: f64) -> bool {
    let yes = votes.iter().filter(|&&v| v).count() as f64;
    yes + 1e-9 >= threshold * votes.len() as f64
}

proptest! {
    #[test]
    fn decision_matches_enumeration(votes in prop::collection::vec(any::<bool>(), 1..=22), t in 0.5f64..=1.0) {
        let n = votes.len();
        let yes = votes.iter().filter(|&&v| v).count();
        let positive = ensemble_decision(yes, t, n).is_positive();
        prop_assert_eq!(positive, oracle(&votes, t));
    }

    #[test]
    fn thresholds_are_monotone(n in 1usize..=22, yes in 0usize..=22, a in 0.5f64..=1.0, b in 0.5f64..=1.0) {
        let yes = yes.min(n);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(vote_threshold_to_min_votes(lo, n) <= vote_threshold_to_min_votes(hi, n));
        if !ensemble_decision(yes, lo, n).is_positive() {
            prop_assert!(!ensemble_decision(yes, hi, n).is_positive());
        }
    }
}
