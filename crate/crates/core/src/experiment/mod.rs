//! End-to-end runs: manifest to features to cross-validation to reports.

mod config;
mod synth;

pub use config::{RunConfig, DEFAULT_THRESHOLDS};
pub use synth::{generate_synthetic, synth_signal, SynthClass, SynthSpec, MANIFEST_NAME};

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::dataset::{self, load_clips, load_manifest, DatasetError, ManifestEntry, SpeciesLabel, STANDARD_RATE};
use crate::evaluation::{self, report, EvalError, Strategy};
use crate::features::{self, cache, FeatureConfig, FeatureError, FeatureSet, CONFIG_TABLE};
use crate::models::{self, ModelError};
use crate::nn::loss::PROB_CLAMP;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep.json";
pub const FEATURES_FILE: &str = "features.wbpc";
pub const MODEL_FILE: &str = "model.wbm";
pub const ENSEMBLE_FILE: &str = "ensemble.txt";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cache(#[from] cache::CacheError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("synthetic data: {0}")]
    Synth(String),
    #[error("{0}")]
    NoData(String),
}

/// Writes via a temporary sibling and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// Files written during a run; removed again unless the run completes.
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, ExperimentError> {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Outputs {
            written: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<(), ExperimentError> {
        atomic_write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Fixed pipeline choices, recorded with every result.
pub fn design_decisions(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    vec![
        ("sample_rate_hz", STANDARD_RATE.to_string()),
        ("resampler", "polyphase windowed sinc, kaiser beta 8, 32 zero crossings".into()),
        ("downmix", "channel mean".into()),
        ("stft_window", "periodic hann, no centering".into()),
        ("mel_scale", "htk: 2595*log10(1+f/700)".into()),
        ("mel_filters", "triangular, area normalized, 0 Hz to nyquist".into()),
        ("db_reference", "spectrogram max".into()),
        ("db_range", format!("[{}, 0]", features::DB_FLOOR)),
        ("normalization", format!("db/{}+1", -features::DB_FLOOR)),
        ("patch_overlap", features::PATCH_OVERLAP.to_string()),
        ("patch_orientation", "bands x frames".into()),
        ("init", "glorot uniform, zero bias".into()),
        ("dropout_rate", cfg.dropout_rate.to_string()),
        ("dropout_placement", "after the first dense layer (binary), before the output layer (multiclass)".into()),
        ("binary_head", if cfg.binary_head == crate::nn::Activation::Softmax { "softmax" } else { "sigmoid" }.into()),
        ("loss", format!("categorical cross-entropy, outputs renormalized, clamp {PROB_CLAMP:e}")),
        (
            "optimizer",
            format!(
                "rmsprop lr={} rho={} eps={} {}",
                cfg.learning_rate,
                cfg.rho,
                cfg.epsilon,
                if cfg.epsilon_inside_sqrt { "g/sqrt(v+eps)" } else { "g/(sqrt(v)+eps)" }
            ),
        ),
        ("maxpool_ties", "first maximum, row-major".into()),
        ("binary_ties", "negative".into()),
        ("fold_unit", if cfg.group_by_file { "file" } else { "patch" }.into()),
        ("std", "sample (n-1)".into()),
        ("macro_average", "classes occurring in the fold".into()),
        ("min_votes", "ceil(threshold * voters)".into()),
    ]
}

/// Config and design values as `# key = value` lines, with the output
/// location left out so identical runs produce identical files.
fn provenance_header(cfg: &RunConfig) -> String {
    let mut s = String::new();
    for (k, v) in cfg.entries().into_iter().filter(|(k, _)| *k != "out") {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    for (k, v) in design_decisions(cfg) {
        s.push_str(&format!("# design.{k} = {v}\n"));
    }
    s
}

fn provenance_json(cfg: &RunConfig, fc: &FeatureConfig) -> Value {
    let run: BTreeMap<_, _> = cfg.entries().into_iter().filter(|(k, _)| *k != "out").collect();
    let design: BTreeMap<_, _> = design_decisions(cfg).into_iter().collect();
    json!({ "run_config": run, "feature_config": fc, "design": design })
}

fn to_json_bytes(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json values serialize");
    b.push(b'\n');
    b
}

/// Loads and decodes the manifest's audio, then extracts patches.
pub fn load_features(entries: &[ManifestEntry], cfg: &RunConfig, fc: &FeatureConfig) -> Result<FeatureSet, ExperimentError> {
    if entries.is_empty() {
        return Err(ExperimentError::NoData("manifest has no entries".into()));
    }
    let clips = load_clips(entries, STANDARD_RATE, cfg.split_segments)?;
    let set = features::extract_features(&clips, fc)?;
    if set.patches.is_empty() {
        return Err(ExperimentError::NoData("no clip is long enough for a single patch".into()));
    }
    log::info!("{} patches from {} clips", set.patches.len(), clips.len());
    Ok(set)
}

fn class_counts(set: &FeatureSet) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for p in &set.patches {
        *m.entry(p.label.name().to_string()).or_insert(0) += 1;
    }
    m
}

/// Cross-validates the configured strategy and writes the fold report CSV
/// and the summary JSON into `cfg.out`. Returns the written paths.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<PathBuf>, ExperimentError> {
    cfg.validate()?;
    let fc = cfg.feature_config()?;
    let entries = load_manifest(&cfg.manifest)?;
    let set = load_features(&entries, cfg, &fc)?;
    let opts = cfg.cv_options();
    let (csv, result) = match cfg.strategy {
        Strategy::Ensemble => {
            let r = evaluation::cross_validate_ensemble(&set.patches, &fc, &opts, &cfg.thresholds)?;
            (report::ensemble_report_csv(&r), report::ensemble_summary_json(&r))
        }
        s => {
            let r = evaluation::cross_validate(s, &set.patches, &fc, &opts)?;
            (report::cv_report_csv(&r), report::cv_summary_json(&r))
        }
    };
    let mut summary = provenance_json(cfg, &fc);
    summary["n_patches"] = json!(set.patches.len());
    summary["class_counts"] = json!(class_counts(&set));
    summary["warnings"] = json!(set.warnings);
    summary["result"] = result;

    let mut out = Outputs::new(&cfg.out)?;
    let mut bytes = provenance_header(cfg).into_bytes();
    bytes.extend(csv);
    out.write(cfg.out.join(REPORT_FILE), &bytes)?;
    out.write(cfg.out.join(SUMMARY_FILE), &to_json_bytes(&summary))?;
    Ok(out.commit())
}

/// One row of the feature-configuration sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub config_id: u8,
    pub feature_config: FeatureConfig,
    pub summary: evaluation::MetricSummary,
}

/// The sweep's species pair: the target and `cfg.sweep_negative`, or the
/// first non-target species present if that one is absent.
pub fn sweep_entries(entries: &[ManifestEntry], cfg: &RunConfig) -> Result<Vec<ManifestEntry>, ExperimentError> {
    let negative = if entries.iter().any(|e| e.species == cfg.sweep_negative) {
        cfg.sweep_negative
    } else {
        entries
            .iter()
            .map(|e| e.species)
            .filter(|s| !s.is_target())
            .min()
            .ok_or_else(|| ExperimentError::NoData("sweep needs a non-target species".into()))?
    };
    if negative != cfg.sweep_negative {
        log::warn!("{} not in the manifest; sweeping against {negative}", cfg.sweep_negative);
    }
    let pair: Vec<ManifestEntry> = entries.iter().filter(|e| e.species.is_target() || e.species == negative).cloned().collect();
    if !pair.iter().any(|e| e.species.is_target()) {
        return Err(ExperimentError::NoData(format!("sweep needs {} recordings", SpeciesLabel::TARGET)));
    }
    Ok(pair)
}

/// Binary cross-validation for every configuration id in `ids` on the
/// sweep's species pair. Writes `sweep.csv` and `sweep.json`.
pub fn run_fft_sweep(cfg: &RunConfig, ids: &[u8]) -> Result<(Vec<SweepRow>, Vec<PathBuf>), ExperimentError> {
    cfg.validate()?;
    let configs: Vec<FeatureConfig> = ids.iter().map(|&id| FeatureConfig::from_id(id)).collect::<Result<_, _>>()?;
    let entries = sweep_entries(&load_manifest(&cfg.manifest)?, cfg)?;
    let clips = load_clips(&entries, STANDARD_RATE, cfg.split_segments)?;
    let opts = cfg.cv_options();
    let mut rows = Vec::with_capacity(configs.len());
    for fc in configs {
        let id = fc.id.expect("grid config");
        log::info!("sweep configuration {id}: {}", fc.label());
        let set = features::extract_features(&clips, &fc)?;
        let r = evaluation::cross_validate(Strategy::Binary, &set.patches, &fc, &opts)?;
        rows.push(SweepRow {
            config_id: id,
            feature_config: fc,
            summary: r.summary,
        });
    }

    let mut w = csv::Writer::from_writer(provenance_header(cfg).into_bytes());
    let mut header = vec!["config_id", "n_bands", "n_frames", "hop_length", "window_size"].into_iter().map(String::from).collect::<Vec<_>>();
    for m in evaluation::METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header).expect("in-memory write");
    for r in &rows {
        let fc = &r.feature_config;
        let s = &r.summary;
        let mut rec = vec![r.config_id.to_string(), fc.n_bands.to_string(), fc.n_frames.to_string(), fc.hop_length.to_string(), fc.window_size.to_string()];
        for (m, sd) in [s.accuracy, s.precision, s.recall, s.f1] {
            rec.push(format!("{m:.6}"));
            rec.push(format!("{sd:.6}"));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    let csv = w.into_inner().expect("in-memory flush");
    let mut summary = provenance_json(cfg, &FeatureConfig::from_id(cfg.config_id)?);
    summary["species"] = json!(entries.iter().map(|e| e.species.name()).collect::<std::collections::BTreeSet<_>>());
    summary["sweep"] = json!(rows
        .iter()
        .map(|r| json!({ "config_id": r.config_id, "feature_config": r.feature_config, "summary": report::summary_value(&r.summary) }))
        .collect::<Vec<_>>());

    let mut out = Outputs::new(&cfg.out)?;
    out.write(cfg.out.join(SWEEP_FILE), &csv)?;
    out.write(cfg.out.join(SWEEP_SUMMARY_FILE), &to_json_bytes(&summary))?;
    Ok((rows, out.commit()))
}

/// All grid ids, 1 to 11.
pub fn all_config_ids() -> Vec<u8> {
    (1..=CONFIG_TABLE.len() as u8).collect()
}

/// Extracts features for the whole manifest into a patch cache file.
pub fn run_extract(cfg: &RunConfig) -> Result<(FeatureSet, Vec<PathBuf>), ExperimentError> {
    cfg.validate()?;
    let fc = cfg.feature_config()?;
    let set = load_features(&load_manifest(&cfg.manifest)?, cfg, &fc)?;
    let mut buf = Vec::new();
    cache::write_cache(&mut buf, &fc, &set.patches)?;
    let mut out = Outputs::new(&cfg.out)?;
    out.write(cfg.out.join(FEATURES_FILE), &buf)?;
    Ok((set, out.commit()))
}

/// Trains the configured strategy on every patch and saves the model
/// (a checkpoint, or an ensemble manifest with one checkpoint per voter).
pub fn run_train(cfg: &RunConfig) -> Result<Vec<PathBuf>, ExperimentError> {
    cfg.validate()?;
    let fc = cfg.feature_config()?;
    let set = load_features(&load_manifest(&cfg.manifest)?, cfg, &fc)?;
    let patches: Vec<&features::FeaturePatch> = set.patches.iter().collect();
    let train = cfg.train_config();
    let arch = cfg.arch_options();
    let mut out = Outputs::new(&cfg.out)?;
    match cfg.strategy {
        Strategy::Binary | Strategy::Multiclass => {
            let model = if cfg.strategy == Strategy::Binary {
                models::train_binary(&patches, &fc, &train, &arch)?
            } else {
                let present: Vec<SpeciesLabel> = set.patches.iter().map(|p| p.label).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
                models::train_multiclass(&patches, &present, &fc, &train, &arch)?
            };
            let mut buf = Vec::new();
            model.write_to(&mut buf).map_err(|source| ExperimentError::Io {
                path: cfg.out.join(MODEL_FILE),
                source,
            })?;
            out.write(cfg.out.join(MODEL_FILE), &buf)?;
        }
        Strategy::Ensemble => {
            let negatives: Vec<SpeciesLabel> = set
                .patches
                .iter()
                .map(|p| p.label)
                .filter(|l| !l.is_target())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let threshold = *cfg.thresholds.iter().fold(&cfg.thresholds[0], |a, b| if b > a { b } else { a });
            let ens = models::EnsembleModel::train(&patches, &negatives, &fc, &train, &arch, threshold)?;
            let path = cfg.out.join(ENSEMBLE_FILE);
            models::write_ensemble_manifest(&ens, &path)?;
            out.written.extend(ens.base_models.iter().map(|(n, _)| cfg.out.join(format!("base_{}.wbm", n.name()))));
            out.written.push(path);
        }
    }
    Ok(out.commit())
}

/// Per-species file counts and durations as CSV.
pub fn stats_csv(manifest: &Path) -> Result<String, ExperimentError> {
    let entries = load_manifest(manifest)?;
    let stats = dataset::dataset_stats(&entries)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["species", "files", "duration_s"]).expect("in-memory write");
    for s in &stats {
        w.write_record([s.species.name().to_string(), s.file_count.to_string(), format!("{:.3}", s.total_duration_s)])
            .expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"))
}
