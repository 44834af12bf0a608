//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run a subset with `cargo test --test acceptance -- 4 7`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wingbeat::dataset::{self, SpeciesLabel};
use wingbeat::evaluation::{metrics_from_confusion, ConfusionMatrix, Scope, Strategy};
use wingbeat::experiment::{self, generate_synthetic, RunConfig, SynthClass, SynthSpec};
use wingbeat::features::{self, db_to_unit, FeatureConfig};
use wingbeat::models::{self, ensemble_decision, vote_threshold_to_min_votes, BinaryLabel};
use wingbeat::nn::{batch_loss_and_grad, Activation, ForwardPass, LayerSpec, Mode, Network, Shape};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

fn random_architecture(rng: &mut ChaCha8Rng) -> (Shape, Vec<LayerSpec>) {
    let acts = [Activation::Relu, Activation::Sigmoid, Activation::None];
    loop {
        let input = Shape::Spatial {
            h: rng.random_range(5..=9),
            w: rng.random_range(5..=9),
            c: rng.random_range(1..=2),
        };
        let mut layers = vec![LayerSpec::conv(rng.random_range(2..=4), rng.random_range(2..=3), rng.random_range(2..=3), acts[rng.random_range(0..3)])];
        layers.push(LayerSpec::maxpool(2, 2, rng.random_range(1..=2)));
        if rng.random_bool(0.5) {
            layers.push(LayerSpec::conv(rng.random_range(2..=3), 2, 2, Activation::Relu));
        }
        layers.push(LayerSpec::Flatten);
        if rng.random_bool(0.7) {
            layers.push(LayerSpec::dense(rng.random_range(3..=8), acts[rng.random_range(0..3)]));
        }
        if rng.random_bool(0.8) {
            layers.push(LayerSpec::Dropout { rate: 0.3 });
        }
        let head = if rng.random_bool(0.5) { Activation::Softmax } else { Activation::Sigmoid };
        layers.push(LayerSpec::dense(rng.random_range(2..=4), head));
        if let Ok(net) = Network::<f64>::new(input, &layers) {
            let n = net.param_count();
            if (100..=1000).contains(&n) {
                return (input, layers);
            }
        }
    }
}

fn loss_at(net: &Network<f64>, x: &[f64], y: &[f64], dropout_seed: u64) -> (f64, ForwardPass<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let pass = net.forward(x, Mode::Train(&mut rng)).unwrap();
    let (l, _) = batch_loss_and_grad(pass.output(), y, net.output_size(), net.output_activation());
    (l, pass)
}

/// Same ReLU on/off pattern and pooling routes in both passes.
fn same_kinks(net: &Network<f64>, a: &ForwardPass<f64>, b: &ForwardPass<f64>) -> bool {
    if a.pool_argmax != b.pool_argmax {
        return false;
    }
    for (i, spec) in net.specs().iter().enumerate() {
        if spec.activation() == Activation::Relu {
            let (u, v) = (&a.activations[i + 1], &b.activations[i + 1]);
            if u.iter().zip(v).any(|(p, q)| (*p > 0.0) != (*q > 0.0)) {
                return false;
            }
        }
    }
    true
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut kinds = std::collections::BTreeSet::new();
    for arch in 0..20 {
        let (input, layers) = random_architecture(&mut rng);
        layers.iter().for_each(|l| {
            kinds.insert(l.kind());
        });
        let mut net = Network::<f64>::new(input, &layers).unwrap();
        net.init(wingbeat::nn::InitScheme::GlorotUniform, &mut rng);
        let batch = 3;
        let x: Vec<f64> = (0..batch * input.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let classes = net.output_size();
        let mut y = vec![0.0; batch * classes];
        for b in 0..batch {
            y[b * classes + rng.random_range(0..classes)] = 1.0;
        }
        let dropout_seed = rng.random::<u64>();
        let (_, pass) = loss_at(&net, &x, &y, dropout_seed);
        let (_, grad) = batch_loss_and_grad(pass.output(), &y, classes, net.output_activation());
        let grads = net.backward(&pass, grad);

        let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let total: usize = sizes.iter().sum();
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 100 {
            attempts += 1;
            check(attempts < 2000, format!("architecture {arch}: too many kink crossings"))?;
            let mut flat = rng.random_range(0..total);
            let mut t = 0;
            while flat >= sizes[t] {
                flat -= sizes[t];
                t += 1;
            }
            let orig = net.params()[t].data()[flat];
            net.params_mut()[t].data_mut()[flat] = orig + h;
            let (lp, pp) = loss_at(&net, &x, &y, dropout_seed);
            net.params_mut()[t].data_mut()[flat] = orig - h;
            let (lm, pm) = loss_at(&net, &x, &y, dropout_seed);
            net.params_mut()[t].data_mut()[flat] = orig;
            if !same_kinks(&net, &pp, &pm) || !same_kinks(&net, &pp, &pass) {
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            let bp = grads[t][flat];
            let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-6);
            worst = worst.max(rel);
            check(rel < 1e-4, format!("architecture {arch} {layers:?}: param {t}/{flat} backprop {bp:e} vs fd {fd:e} (rel {rel:e})"))?;
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(kinds.len() == 5, format!("only layer kinds {kinds:?} were exercised"))?;
    check(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("20 architectures x 100 parameters, worst relative error {worst:.2e}, {secs:.1} s"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let cfg = FeatureConfig::from_id(8).unwrap();
    let opts = models::ArchitectureOptions::default();
    let shapes = |n: &Network<f32>| n.layer_shapes().iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let b = shapes(&models::build_binary(&cfg, &opts).map_err(|e| e.to_string())?);
    let m = shapes(&models::build_multiclass(&cfg, &opts).map_err(|e| e.to_string())?);
    let want_b = ["58x38x32", "57x37x32", "55x35x64", "54x34x64", "52x32x64", "106496", "256", "256", "2"];
    let want_m = ["41x36x32", "40x35x32", "33x32x32", "32x31x32", "31744", "31744", "23"];
    check(b == want_b, format!("binary chain {b:?}"))?;
    check(m == want_m, format!("multiclass chain {m:?}"))?;
    Ok(format!("binary {} / multiclass {}", b.join(" > "), m.join(" > ")))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1_000_000 {
        let db: f64 = rng.random_range(-80.0..=0.0);
        let u = db_to_unit(db, -80.0);
        check((0.0..=1.0).contains(&u), format!("{db} dB maps to {u}"))?;
    }
    check(db_to_unit(-80.0, -80.0) == 0.0, "-80 dB is not exactly 0")?;
    check(db_to_unit(0.0, -80.0) == 1.0, "0 dB is not exactly 1")?;
    Ok("10^6 values in [0, 1], endpoints exact".into())
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let cfg = FeatureConfig::from_id(8).unwrap();
    check(cfg.window_size == 1024 && cfg.hop_length == 256, "config 8 is not window 1024 / hop 256")?;
    let x: Vec<f32> = (0..8000 * 2).map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 8000.0).sin() as f32).collect();
    let power = features::stft_power(&x, 8000, &cfg).map_err(|e| e.to_string())?;
    for t in 0..power.cols {
        let best = (0..power.rows).max_by(|&a, &b| power.get(a, t).total_cmp(&power.get(b, t))).unwrap();
        check(best == 128, format!("frame {t}: argmax bin {best}"))?;
    }
    let fb = features::build_mel_filterbank(&cfg).map_err(|e| e.to_string())?;
    let mel = features::mel_db_normalize(&power, &fb, cfg.db_floor);
    let mut energy = vec![0.0; mel.rows];
    for (b, e) in energy.iter_mut().enumerate() {
        *e = (0..mel.cols).map(|t| mel.get(b, t)).sum::<f64>();
    }
    let band = (0..mel.rows).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
    let centre = fb.band_centers_hz[band];
    let spacing = fb.band_spacing_hz(band);
    check((centre - 1000.0).abs() <= spacing, format!("band {band} centre {centre:.1} Hz, spacing {spacing:.1} Hz"))?;
    Ok(format!("{} frames peak at bin 128; mel band {band} centre {centre:.1} Hz (spacing {spacing:.1} Hz)", power.cols))
}

// ---------------------------------------------------------------- 5

/// Per-instance recomputation of the metrics.
fn brute_force(truth: &[usize], pred: &[usize], n: usize, scope: Scope) -> [f64; 4] {
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64;
    let accuracy = correct / truth.len() as f64;
    let prf = |c: usize| {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f)
    };
    match scope {
        Scope::Class(c) => {
            let (p, r, f) = prf(c);
            [accuracy, p, r, f]
        }
        Scope::Macro => {
            let seen: Vec<usize> = (0..n).filter(|c| truth.contains(c) || pred.contains(c)).collect();
            let k = seen.len() as f64;
            let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
            for &c in &seen {
                let (a, b, d) = prf(c);
                p += a;
                r += b;
                f += d;
            }
            [accuracy, p / k, r / k, f / k]
        }
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=23);
        let len = rng.random_range(1..=400);
        let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..n) })
            .collect();
        let cm = ConfusionMatrix::from_predictions(n, &truth, &pred);
        check(cm.total() as usize == len, "confusion total differs from instance count")?;
        let mut scopes = vec![Scope::Macro];
        scopes.push(Scope::Class(rng.random_range(0..n)));
        for scope in scopes {
            let got = metrics_from_confusion(&cm, scope).values();
            let want = brute_force(&truth, &pred, n, scope);
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
                check((g - w).abs() <= 1e-12, format!("{scope:?}: {got:?} vs {want:?}"))?;
            }
        }
    }
    let table = ConfusionMatrix::from_rows(&[vec![243.9, 31.7], vec![26.3, 2170.9]]);
    let m = metrics_from_confusion(&table, Scope::Class(0));
    let (acc, rec) = (m.accuracy * 100.0, m.recall * 100.0);
    check((acc - 97.65).abs() < 0.5, format!("accuracy {acc:.2}"))?;
    check((rec - 88.49).abs() < 0.5, format!("recall {rec:.2}"))?;
    Ok(format!("1000 random sets, max deviation {worst:.1e}; averaged matrix accuracy {acc:.2}%, recall {rec:.2}%"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    for (t, want) in [(0.90, 20), (0.50, 11), (0.95, 21)] {
        let got = vote_threshold_to_min_votes(t, 22);
        check(got == want, format!("({t}, 22) -> {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let thresholds = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0];
    for _ in 0..10_000 {
        let bias: f64 = rng.random_range(0.0..1.0);
        let pattern: Vec<bool> = (0..22).map(|_| rng.random_bool(bias)).collect();
        let votes = pattern.iter().filter(|&&v| v).count();
        let mut was_negative = false;
        for &t in &thresholds {
            // enumeration oracle: smallest k with k / 22 >= t
            let k = (0..=22).find(|&k| k as f64 / 22.0 >= t - 1e-12).unwrap();
            let oracle = if votes >= k { BinaryLabel::Positive } else { BinaryLabel::Negative };
            let got = ensemble_decision(votes, t, 22);
            check(got == oracle, format!("{votes} votes at {t}: {got:?} vs {oracle:?}"))?;
            check(!(was_negative && got.is_positive()), format!("{votes} votes turned positive at {t}"))?;
            was_negative |= !got.is_positive();
        }
    }
    Ok("min votes 20/11/21; 10^4 patterns match the oracle and are monotone".into())
}

// ---------------------------------------------------------------- 7 and 9

fn synth_pair(dir: &Path, seed: u64) -> std::path::PathBuf {
    let negative = SpeciesLabel::from_name("Anopheles_freeborni").unwrap();
    let mut spec = SynthSpec::new(vec![
        SynthClass {
            species: SpeciesLabel::TARGET,
            fundamental_hz: 500.0,
        },
        SynthClass {
            species: negative,
            fundamental_hz: 700.0,
        },
    ]);
    spec.snr_db = Some(20.0);
    spec.files_per_class = 6;
    spec.seconds_per_file = 10.0;
    spec.seed = seed;
    generate_synthetic(&spec, dir).unwrap()
}

type RunResult = Result<(Vec<u8>, serde_json::Value, f64), String>;

fn binary_run(manifest: &Path, out: &Path) -> RunResult {
    let cfg = RunConfig {
        manifest: manifest.to_path_buf(),
        config_id: 8,
        strategy: Strategy::Binary,
        folds: 5,
        epochs: 10,
        batch_size: 32,
        seed: 7,
        learning_rate: 1e-4,
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    let start = Instant::now();
    experiment::run_experiment(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let csv = std::fs::read(out.join(experiment::REPORT_FILE)).map_err(|e| e.to_string())?;
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join(experiment::SUMMARY_FILE)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok((csv, summary, secs))
}

struct Shared {
    dir: tempfile::TempDir,
    first: Option<RunResult>,
}

impl Shared {
    fn first_run(&mut self) -> RunResult {
        if self.first.is_none() {
            let manifest = synth_pair(&self.dir.path().join("data"), 11);
            self.first = Some(binary_run(&manifest, &self.dir.path().join("run1")));
        }
        self.first.clone().unwrap()
    }
}

fn criterion_7(shared: &mut Shared) -> Outcome {
    let (_, summary, secs) = shared.first_run()?;
    let s = &summary["result"]["summary"];
    let acc = s["accuracy"]["mean"].as_f64().unwrap();
    let rec = s["recall"]["mean"].as_f64().unwrap();
    check(acc >= 0.95, format!("mean accuracy {acc:.4}"))?;
    check(rec >= 0.90, format!("mean recall {rec:.4}"))?;
    check(secs < 600.0, format!("took {secs:.0} s"))?;
    Ok(format!("mean accuracy {acc:.4}, mean recall {rec:.4}, {} patches, {secs:.0} s", summary["n_patches"]))
}

fn criterion_9(shared: &mut Shared) -> Outcome {
    let (csv1, _, _) = shared.first_run()?;
    let manifest = shared.dir.path().join("data").join(experiment::MANIFEST_NAME);
    let (csv2, _, _) = binary_run(&manifest, &shared.dir.path().join("run2"))?;
    check(csv1 == csv2, "report CSVs differ between identical runs")?;
    Ok(format!("two runs produce identical {}-byte reports", csv1.len()))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fundamentals = [("Aedes_aegypti", 500.0), ("Aedes_albopictus", 300.0), ("Anopheles_freeborni", 400.0), ("Culex_pipiens", 600.0), ("Culex_tarsalis", 700.0), ("Culiseta_incidens", 800.0)];
    let mut spec = SynthSpec::new(
        fundamentals
            .iter()
            .map(|&(n, f)| SynthClass {
                species: SpeciesLabel::from_name(n).unwrap(),
                fundamental_hz: f,
            })
            .collect(),
    );
    spec.snr_db = Some(20.0);
    spec.files_per_class = 2;
    spec.seconds_per_file = 10.0;
    spec.seed = 8;
    let manifest = generate_synthetic(&spec, &dir.path().join("data")).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        manifest,
        config_id: 1,
        strategy: Strategy::Ensemble,
        thresholds: vec![0.5, 0.6, 0.8, 0.9],
        folds: 5,
        epochs: 10,
        batch_size: 32,
        seed: 8,
        out: dir.path().join("out"),
        ..RunConfig::default()
    };
    let start = Instant::now();
    experiment::run_experiment(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(cfg.out.join(experiment::SUMMARY_FILE)).unwrap()).unwrap();
    let result = &summary["result"];
    let base_p = result["base_mean"]["precision"]["mean"].as_f64().unwrap();
    let base_r = result["base_mean"]["recall"]["mean"].as_f64().unwrap();
    let rows: Vec<(f64, f64, f64)> = result["thresholds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["threshold"].as_f64().unwrap(), t["summary"]["precision"]["mean"].as_f64().unwrap(), t["summary"]["recall"]["mean"].as_f64().unwrap()))
        .collect();
    let (_, top_p, top_r) = *rows.last().unwrap();
    let curve: Vec<String> = rows.iter().map(|(t, p, r)| format!("{t}: p={p:.3} r={r:.3}")).collect();
    check(top_p >= 1.5 * base_p, format!("ensemble precision {top_p:.3} vs base {base_p:.3}; {curve:?}"))?;
    check(top_r >= 0.85, format!("ensemble recall {top_r:.3}; {curve:?}"))?;
    Ok(format!(
        "base precision {base_p:.3} recall {base_r:.3}; ensemble {} ; ratio {:.2}, {secs:.0} s",
        curve.join(", "),
        top_p / base_p
    ))
}

// ---------------------------------------------------------------- 10

const REAL_DATA_ENV: &str = "WINGBEAT_ABUZZ_MANIFEST";

fn criterion_10() -> Result<Option<String>, String> {
    let Ok(manifest) = std::env::var(REAL_DATA_ENV) else {
        return Ok(None);
    };
    let entries = dataset::load_manifest(Path::new(&manifest)).map_err(|e| e.to_string())?;
    let stats = dataset::dataset_stats(&entries).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = vec![format!("{} species", stats.len())];
    for strategy in [Strategy::Binary, Strategy::Multiclass] {
        let cfg = RunConfig {
            manifest: manifest.clone().into(),
            strategy,
            out: dir.path().join(strategy.name()),
            ..RunConfig::default()
        };
        experiment::run_experiment(&cfg).map_err(|e| e.to_string())?;
        let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(cfg.out.join(experiment::SUMMARY_FILE)).unwrap()).unwrap();
        let acc = summary["result"]["summary"]["accuracy"]["mean"].as_f64().unwrap() * 100.0;
        let (target, tol) = if strategy == Strategy::Binary { (97.65, 3.0) } else { (78.12, 5.0) };
        check((acc - target).abs() <= tol, format!("{strategy} accuracy {acc:.2}% vs {target}%"))?;
        lines.push(format!("{strategy} {acc:.2}%"));
    }
    Ok(Some(lines.join(", ")))
}

// ----------------------------------------------------------------

fn run(n: u32, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(msg) => {
            println!("PASS criterion {n}: {msg} [{secs:.1}s]");
            true
        }
        Err(msg) => {
            println!("FAIL criterion {n}: {msg} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut ok = true;
    let mut shared = Shared {
        dir: tempfile::tempdir().expect("temp dir"),
        first: None,
    };
    if want(1) {
        ok &= run(1, criterion_1);
    }
    if want(2) {
        ok &= run(2, criterion_2);
    }
    if want(3) {
        ok &= run(3, criterion_3);
    }
    if want(4) {
        ok &= run(4, criterion_4);
    }
    if want(5) {
        ok &= run(5, criterion_5);
    }
    if want(6) {
        ok &= run(6, criterion_6);
    }
    if want(7) {
        ok &= run(7, || criterion_7(&mut shared));
    }
    if want(8) {
        ok &= run(8, criterion_8);
    }
    if want(9) {
        ok &= run(9, || criterion_9(&mut shared));
    }
    if want(10) {
        match catch_unwind(criterion_10) {
            Ok(Ok(None)) => println!("SKIP criterion 10: set {REAL_DATA_ENV} to a curated manifest of the original recordings"),
            Ok(Ok(Some(msg))) => println!("PASS criterion 10: {msg}"),
            Ok(Err(msg)) => {
                println!("FAIL criterion 10: {msg}");
                ok = false;
            }
            Err(_) => {
                println!("FAIL criterion 10: panicked");
                ok = false;
            }
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
