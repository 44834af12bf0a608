use std::path::Path;

use wingbeat::dataset::{load_clips, load_manifest, SpeciesLabel, STANDARD_RATE};
use wingbeat::evaluation::Strategy;
use wingbeat::experiment::*;
use wingbeat::features::{build_mel_filterbank, extract_features, stft_power, FeatureConfig, FeatureError};
use wingbeat::nn::seeded_rng;

fn pair(dir: &Path, files: usize, seconds: f64, seed: u64) -> std::path::PathBuf {
    let mut spec = SynthSpec::new(vec![
        SynthClass { species: SpeciesLabel::TARGET, fundamental_hz: 500.0 },
        SynthClass { species: SpeciesLabel::from_name("Anopheles_freeborni").unwrap(), fundamental_hz: 700.0 },
    ]);
    spec.files_per_class = files;
    spec.seconds_per_file = seconds;
    spec.seed = seed;
    generate_synthetic(&spec, dir).unwrap()
}

fn argmax(v: impl Iterator<Item = f64>) -> usize {
    v.enumerate().fold((0, f64::MIN), |b, (i, x)| if x > b.1 { (i, x) } else { b }).0
}

#[test]
fn synthetic_classes_peak_in_different_bands() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pair(dir.path(), 1, 2.0, 1);
    let cfg = FeatureConfig::from_id(8).unwrap();
    let fb = build_mel_filterbank(&cfg).unwrap();
    let clips = load_clips(&load_manifest(&manifest).unwrap(), STANDARD_RATE, false).unwrap();
    let set = extract_features(&clips, &cfg).unwrap();
    let band_of = |hz: f64| argmax(fb.band_centers_hz.iter().map(|c| -(c - hz).abs()));
    for p in &set.patches {
        let energy = (0..cfg.n_bands).map(|b| (0..cfg.n_frames).map(|t| p.get(b, t) as f64).sum::<f64>());
        let band = argmax(energy);
        let hz = if p.label.is_target() { 500.0 } else { 700.0 };
        assert!(band.abs_diff(band_of(hz)) <= 1, "{} peaks in band {band}", p.label);
    }
    let bands: std::collections::BTreeSet<usize> = set
        .patches
        .iter()
        .map(|p| argmax((0..cfg.n_bands).map(|b| (0..cfg.n_frames).map(|t| p.get(b, t) as f64).sum::<f64>())))
        .collect();
    assert!(bands.len() >= 2);
}

#[test]
fn clean_synthesis_peaks_on_a_harmonic() {
    let mut spec = SynthSpec::new(vec![]);
    spec.snr_db = None;
    spec.seconds_per_file = 1.0;
    let cfg = FeatureConfig::from_id(8).unwrap();
    for f0 in [250.0, 437.5, 625.0] {
        let x: Vec<f32> = synth_signal(f0, &spec, &mut seeded_rng(5, 0)).iter().map(|&v| v as f32).collect();
        let power = stft_power(&x, 8000, &cfg).unwrap();
        let bin_hz = 8000.0 / cfg.window_size as f64;
        for t in 0..power.cols {
            let k = argmax((0..power.rows).map(|r| power.get(r, t)));
            let hz = k as f64 * bin_hz;
            let harmonic = (hz / f0).round();
            assert!((1.0..=4.0).contains(&harmonic) && (hz - harmonic * f0).abs() <= bin_hz / 2.0, "{f0}: frame {t} peaks at {hz}");
        }
    }
}

#[test]
fn one_window_of_audio_is_one_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FeatureConfig::from_id(8).unwrap();
    let mut spec = SynthSpec::new(vec![SynthClass { species: SpeciesLabel::TARGET, fundamental_hz: 400.0 }]);
    spec.seconds_per_file = cfg.window_size as f64 / 8000.0;
    spec.files_per_class = 2;
    let manifest = generate_synthetic(&spec, dir.path()).unwrap();
    for clip in load_clips(&load_manifest(&manifest).unwrap(), STANDARD_RATE, false).unwrap() {
        assert_eq!(clip.samples.len(), cfg.window_size);
        assert_eq!(stft_power(&clip.samples, 8000, &cfg).unwrap().cols, 1);
    }
}

#[test]
fn synthesis_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pair(a.path(), 1, 0.5, 9);
    pair(b.path(), 1, 0.5, 9);
    let name = "Aedes_aegypti_000.wav";
    assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
}

fn quick_config(manifest: &Path, out: &Path) -> RunConfig {
    RunConfig {
        manifest: manifest.to_path_buf(),
        out: out.to_path_buf(),
        folds: 2,
        epochs: 1,
        seed: 3,
        ..RunConfig::default()
    }
}

#[test]
fn sweep_covers_the_grid_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pair(&dir.path().join("data"), 2, 3.0, 2);
    let cfg = quick_config(&manifest, &dir.path().join("a"));
    let (rows, paths) = run_fft_sweep(&cfg, &all_config_ids()).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(paths.len(), 2);
    let csv = std::fs::read_to_string(cfg.out.join(SWEEP_FILE)).unwrap();
    let table: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table.len(), 12);
    assert_eq!(table[0].split(',').count(), 5 + 8);
    assert!(table[1..].iter().all(|r| r.split(',').count() == 13));

    let again = RunConfig { out: dir.path().join("b"), ..cfg.clone() };
    run_fft_sweep(&again, &all_config_ids()).unwrap();
    assert_eq!(std::fs::read(again.out.join(SWEEP_FILE)).unwrap(), csv.into_bytes());
    assert_eq!(std::fs::read(again.out.join(SWEEP_SUMMARY_FILE)).unwrap(), std::fs::read(cfg.out.join(SWEEP_SUMMARY_FILE)).unwrap());

    let err = run_fft_sweep(&cfg, &[8, 12]).unwrap_err();
    assert!(matches!(err, ExperimentError::Feature(FeatureError::UnknownConfig(12))), "{err}");
}

#[test]
fn outputs_carry_the_full_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pair(&dir.path().join("data"), 2, 3.0, 4);
    let cfg = quick_config(&manifest, &dir.path().join("out"));
    run_experiment(&cfg).unwrap();
    let report = std::fs::read_to_string(cfg.out.join(REPORT_FILE)).unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(cfg.out.join(SUMMARY_FILE)).unwrap()).unwrap();
    for (k, v) in cfg.entries().into_iter().filter(|(k, _)| *k != "out") {
        assert!(report.contains(&format!("# {k} = {v}\n")), "{k}");
        assert_eq!(summary["run_config"][k], v, "{k}");
    }
    for key in ["mel_scale", "stft_window", "dropout_rate", "optimizer"] {
        assert!(report.contains(&format!("# design.{key} = ")));
        assert!(summary["design"][key].is_string());
    }
    let rows = report.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + cfg.folds);
}

#[test]
fn failed_runs_leave_no_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pair(&dir.path().join("data"), 1, 3.0, 4);
    let cfg = RunConfig { folds: 50, ..quick_config(&manifest, &dir.path().join("out")) };
    assert!(run_experiment(&cfg).is_err());
    assert!(!cfg.out.join(REPORT_FILE).exists());
    assert!(!cfg.out.join(SUMMARY_FILE).exists());
}

#[test]
fn train_then_reload() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pair(&dir.path().join("data"), 1, 3.0, 6);
    let cfg = quick_config(&manifest, &dir.path().join("model"));
    let paths = run_train(&cfg).unwrap();
    let model = wingbeat::nn::TrainedModel::load(&paths[0]).unwrap();
    assert_eq!(model.metadata.epochs, 1);
    assert_eq!(model.metadata.feature_config.unwrap().id, Some(8));

    let ens = RunConfig { strategy: Strategy::Ensemble, out: dir.path().join("ens"), ..cfg };
    let paths = run_train(&ens).unwrap();
    let e = wingbeat::models::read_ensemble_manifest(paths.last().unwrap()).unwrap();
    assert_eq!(e.n_voters(), 1);
}
