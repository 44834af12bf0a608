use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{predict_binary_batch, train_binary, ArchitectureOptions, BinaryLabel, ModelError};
use crate::dataset::SpeciesLabel;
use crate::features::{FeatureConfig, FeaturePatch};
use crate::nn::{TrainConfig, TrainedModel};

pub const ENSEMBLE_MANIFEST_VERSION: u32 = 1;

/// Smallest vote count reaching `threshold` of `n_voters`.
///
/// A tiny tolerance keeps products such as `0.6 * 5` from rounding up past
/// the exact integer.
pub fn vote_threshold_to_min_votes(threshold: f64, n_voters: usize) -> usize {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold must be in (0, 1]");
    assert!(n_voters >= 1, "need at least one voter");
    ((threshold * n_voters as f64 - 1e-9).ceil() as usize).clamp(1, n_voters)
}

pub fn ensemble_decision(positive_votes: usize, threshold: f64, n_voters: usize) -> BinaryLabel {
    if positive_votes >= vote_threshold_to_min_votes(threshold, n_voters) {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    }
}

/// One-vs-one binary models, one per negative species, combined by voting.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    /// Each base model keyed by the negative species it was trained against.
    pub base_models: Vec<(SpeciesLabel, TrainedModel)>,
    pub vote_threshold: f64,
}

impl EnsembleModel {
    pub fn new(base_models: Vec<(SpeciesLabel, TrainedModel)>, vote_threshold: f64) -> Result<Self, ModelError> {
        let e = EnsembleModel { base_models, vote_threshold };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.base_models.is_empty() {
            return Err(ModelError::Ensemble("no base models".into()));
        }
        if !(0.5..=1.0).contains(&self.vote_threshold) {
            return Err(ModelError::Ensemble(format!("vote threshold {} outside [0.5, 1]", self.vote_threshold)));
        }
        let mut seen = BTreeSet::new();
        for (neg, m) in &self.base_models {
            if neg.is_target() {
                return Err(ModelError::Ensemble(format!("base model keyed by the target species {neg}")));
            }
            if !seen.insert(*neg) {
                return Err(ModelError::Ensemble(format!("two base models for {neg}")));
            }
            if m.network.output_size() != 2 {
                return Err(ModelError::Ensemble(format!("base model for {neg} is not binary")));
            }
        }
        Ok(())
    }

    pub fn n_voters(&self) -> usize {
        self.base_models.len()
    }

    pub fn min_votes(&self) -> usize {
        vote_threshold_to_min_votes(self.vote_threshold, self.n_voters())
    }

    /// Trains one base model per species in `negatives` on the target's
    /// patches plus that species' patches.
    pub fn train(
        patches: &[&FeaturePatch],
        negatives: &[SpeciesLabel],
        cfg: &FeatureConfig,
        train: &TrainConfig,
        opts: &ArchitectureOptions,
        vote_threshold: f64,
    ) -> Result<Self, ModelError> {
        let base_models = negatives
            .par_iter()
            .map(|&neg| {
                let subset: Vec<&FeaturePatch> = patches.iter().copied().filter(|p| p.label.is_target() || p.label == neg).collect();
                let cfg_neg = TrainConfig {
                    seed: base_seed(train.seed, neg),
                    ..*train
                };
                train_binary(&subset, cfg, &cfg_neg, opts).map(|m| (neg, m))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(base_models, vote_threshold)
    }
}

/// Seed of the base model trained against `negative`.
pub fn base_seed(seed: u64, negative: SpeciesLabel) -> u64 {
    seed.wrapping_add(negative.index() as u64 * 0x9E37_79B9)
}

/// Positive votes per patch, one count per entry of `patches`.
pub fn count_votes(ensemble: &EnsembleModel, patches: &[&FeaturePatch]) -> Result<Vec<usize>, ModelError> {
    let per_model = ensemble
        .base_models
        .par_iter()
        .map(|(_, m)| predict_binary_batch(m, patches))
        .collect::<Result<Vec<_>, _>>()?;
    let mut votes = vec![0usize; patches.len()];
    for preds in &per_model {
        for (v, (label, _)) in votes.iter_mut().zip(preds) {
            *v += label.is_positive() as usize;
        }
    }
    Ok(votes)
}

pub fn predict_ensemble(ensemble: &EnsembleModel, patch: &FeaturePatch) -> Result<(BinaryLabel, usize), ModelError> {
    Ok(predict_ensemble_batch(ensemble, &[patch])?[0])
}

pub fn predict_ensemble_batch(ensemble: &EnsembleModel, patches: &[&FeaturePatch]) -> Result<Vec<(BinaryLabel, usize)>, ModelError> {
    ensemble.validate()?;
    let n = ensemble.n_voters();
    Ok(count_votes(ensemble, patches)?
        .into_iter()
        .map(|v| (ensemble_decision(v, ensemble.vote_threshold, n), v))
        .collect())
}

/// Writes every base checkpoint next to `path` and a text manifest at `path`:
///
/// ```text
/// version = 1
/// threshold = 0.9
/// model.Aedes_albopictus = base_Aedes_albopictus.wbm
/// ```
pub fn write_ensemble_manifest(ensemble: &EnsembleModel, path: &Path) -> Result<(), ModelError> {
    ensemble.validate()?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut text = String::new();
    writeln!(text, "# wingbeat ensemble").unwrap();
    writeln!(text, "version = {ENSEMBLE_MANIFEST_VERSION}").unwrap();
    writeln!(text, "threshold = {}", ensemble.vote_threshold).unwrap();
    for (neg, model) in &ensemble.base_models {
        let file = format!("base_{}.wbm", neg.name());
        model.save(&dir.join(&file))?;
        writeln!(text, "model.{} = {file}", neg.name()).unwrap();
    }
    std::fs::write(path, text).map_err(|e| ModelError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_ensemble_manifest(path: &Path) -> Result<EnsembleModel, ModelError> {
    let err = |message: String| ModelError::Manifest {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut version = None;
    let mut threshold = None;
    let mut files: Vec<(SpeciesLabel, PathBuf)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "version" => version = Some(v.parse::<u32>().map_err(|e| err(format!("line {}: {e}", n + 1)))?),
            "threshold" => threshold = Some(v.parse::<f64>().map_err(|e| err(format!("line {}: {e}", n + 1)))?),
            _ => {
                let name = k.strip_prefix("model.").ok_or_else(|| err(format!("line {}: unknown key {k}", n + 1)))?;
                let species: SpeciesLabel = name.parse().map_err(|e| err(format!("line {}: {e}", n + 1)))?;
                files.push((species, dir.join(v)));
            }
        }
    }
    match version {
        Some(ENSEMBLE_MANIFEST_VERSION) => {}
        Some(v) => return Err(err(format!("unsupported version {v}"))),
        None => return Err(err("missing version".into())),
    }
    let threshold = threshold.ok_or_else(|| err("missing threshold".into()))?;
    let base_models = files
        .into_iter()
        .map(|(s, f)| TrainedModel::load(&f).map(|m| (s, m)))
        .collect::<Result<Vec<_>, _>>()?;
    EnsembleModel::new(base_models, threshold)
}
