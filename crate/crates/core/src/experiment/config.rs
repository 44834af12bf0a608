//! Run configuration in a flat `key = value` text format.
//!
//! ```text
//! # binary run on the default features
//! manifest = data/manifest.csv
//! config_id = 8
//! strategy = binary
//! folds = 10
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::dataset::SpeciesLabel;
use crate::evaluation::{CvOptions, Strategy};
use crate::features::{FeatureConfig, DEFAULT_CONFIG_ID};
use crate::models::ArchitectureOptions;
use crate::nn::{Activation, RmsPropConfig, TrainConfig};

pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub config_id: u8,
    /// Explicit (bands, frames, hop, window); overrides `config_id`.
    pub custom_features: Option<(usize, usize, usize, usize)>,
    pub strategy: Strategy,
    pub thresholds: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub group_by_file: bool,
    /// One clip per keep-segment instead of concatenating them.
    pub split_segments: bool,
    pub dropout_rate: f64,
    pub binary_head: Activation,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub epsilon_inside_sqrt: bool,
    /// Negative species of the feature sweep's species pair.
    pub sweep_negative: SpeciesLabel,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = RmsPropConfig::default();
        RunConfig {
            manifest: PathBuf::from("manifest.csv"),
            config_id: DEFAULT_CONFIG_ID,
            custom_features: None,
            strategy: Strategy::Binary,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            epochs: 10,
            batch_size: 32,
            folds: 10,
            seed: 0,
            out: PathBuf::from("out"),
            group_by_file: false,
            split_segments: false,
            dropout_rate: 0.5,
            binary_head: Activation::Sigmoid,
            learning_rate: opt.learning_rate,
            rho: opt.rho,
            epsilon: opt.epsilon,
            epsilon_inside_sqrt: opt.epsilon_inside_sqrt,
            sweep_negative: SpeciesLabel::from_name("Anopheles_freeborni").expect("known species"),
        }
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Sigmoid => "sigmoid",
        Activation::Softmax => "softmax",
        Activation::None => "none",
    }
}

impl RunConfig {
    pub fn feature_config(&self) -> Result<FeatureConfig, ExperimentError> {
        Ok(match self.custom_features {
            Some((b, f, h, w)) => FeatureConfig::custom(b, f, h, w)?,
            None => FeatureConfig::from_id(self.config_id)?,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: RmsPropConfig {
                learning_rate: self.learning_rate,
                rho: self.rho,
                epsilon: self.epsilon,
                epsilon_inside_sqrt: self.epsilon_inside_sqrt,
            },
            shuffle: true,
        }
    }

    pub fn arch_options(&self) -> ArchitectureOptions {
        ArchitectureOptions {
            dropout_rate: self.dropout_rate,
            binary_head: self.binary_head,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            k: self.folds,
            seed: self.seed,
            group_by_file: self.group_by_file,
            train: self.train_config(),
            arch: self.arch_options(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config { line: 0, message: m.into() });
        self.feature_config()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(0.5..=1.0).contains(t)) {
            return bad("thresholds must be a non-empty list of values in [0.5, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !matches!(self.binary_head, Activation::Sigmoid | Activation::Softmax) {
            return bad("binary_head must be sigmoid or softmax");
        }
        if self.sweep_negative.is_target() {
            return bad("sweep_negative must be a non-target species");
        }
        Ok(())
    }

    /// Parses the text format. Relative paths resolve against `base_dir`;
    /// unspecified keys keep their defaults.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg = RunConfig::default();
        let mut custom = [None::<usize>; 4];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ExperimentError::Config { line, message };
            let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
            }
            let r: Result<(), String> = (|| {
                match key {
                    "manifest" => cfg.manifest = base_dir.join(value),
                    "out" => cfg.out = base_dir.join(value),
                    "config_id" => cfg.config_id = num(value)?,
                    "n_bands" => custom[0] = Some(num(value)?),
                    "n_frames" => custom[1] = Some(num(value)?),
                    "hop_length" => custom[2] = Some(num(value)?),
                    "window_size" => custom[3] = Some(num(value)?),
                    "strategy" => cfg.strategy = value.parse()?,
                    "thresholds" | "threshold" => {
                        cfg.thresholds = value.split(',').map(|t| num::<f64>(t.trim())).collect::<Result<_, _>>()?;
                    }
                    "epochs" => cfg.epochs = num(value)?,
                    "batch_size" => cfg.batch_size = num(value)?,
                    "folds" => cfg.folds = num(value)?,
                    "seed" => cfg.seed = num(value)?,
                    "group_by_file" => cfg.group_by_file = num(value)?,
                    "split_segments" => cfg.split_segments = num(value)?,
                    "dropout_rate" => cfg.dropout_rate = num(value)?,
                    "binary_head" => {
                        cfg.binary_head = match value {
                            "sigmoid" => Activation::Sigmoid,
                            "softmax" => Activation::Softmax,
                            other => return Err(format!("binary_head must be sigmoid or softmax, got {other:?}")),
                        }
                    }
                    "learning_rate" => cfg.learning_rate = num(value)?,
                    "rho" => cfg.rho = num(value)?,
                    "epsilon" => cfg.epsilon = num(value)?,
                    "epsilon_inside_sqrt" => cfg.epsilon_inside_sqrt = num(value)?,
                    "sweep_negative" => cfg.sweep_negative = value.parse().map_err(|e: crate::dataset::UnknownSpecies| e.to_string())?,
                    other => return Err(format!("unknown key {other:?}")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        cfg.custom_features = match custom {
            [None, None, None, None] => None,
            [Some(b), Some(f), Some(h), Some(w)] => Some((b, f, h, w)),
            _ => {
                return Err(ExperimentError::Config {
                    line: 0,
                    message: "n_bands, n_frames, hop_length and window_size must be given together".into(),
                })
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Text form accepted by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// Every field as ordered key/value strings.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = vec![("manifest", self.manifest.display().to_string()), ("config_id", self.config_id.to_string())];
        if let Some((b, f, h, w)) = self.custom_features {
            e.push(("n_bands", b.to_string()));
            e.push(("n_frames", f.to_string()));
            e.push(("hop_length", h.to_string()));
            e.push(("window_size", w.to_string()));
        }
        e.extend([
            ("strategy", self.strategy.to_string()),
            ("thresholds", self.thresholds.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("folds", self.folds.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("group_by_file", self.group_by_file.to_string()),
            ("split_segments", self.split_segments.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("binary_head", activation_name(self.binary_head).to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("rho", self.rho.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("epsilon_inside_sqrt", self.epsilon_inside_sqrt.to_string()),
            ("sweep_negative", self.sweep_negative.name().to_string()),
        ]);
        e
    }
}
