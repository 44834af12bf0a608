//! The three classification strategies: a one-vs-all binary CNN, a 23-way
//! multiclass CNN, and an ensemble of one-vs-one binary CNNs with threshold
//! voting.

mod ensemble;

pub use ensemble::{
    base_seed, count_votes, ensemble_decision, predict_ensemble, predict_ensemble_batch, read_ensemble_manifest, vote_threshold_to_min_votes, write_ensemble_manifest, EnsembleModel,
    ENSEMBLE_MANIFEST_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::dataset::{SpeciesLabel, NUM_CLASSES};
use crate::features::{FeatureConfig, FeaturePatch};
use crate::nn::{self, Activation, CheckpointError, LayerSpec, ModelMetadata, Network, NnError, Shape, TrainConfig, TrainedModel};

pub const BINARY_ARCHITECTURE: &str = "binary";
pub const MULTICLASS_ARCHITECTURE: &str = "multiclass";
pub const BINARY_CLASSES: [&str; 2] = ["positive", "negative"];
/// Smallest (bands, frames) input the multiclass kernels fit.
pub const MULTICLASS_MIN_INPUT: (usize, usize) = (29, 10);
/// Smallest (bands, frames) input the binary kernels fit.
pub const BINARY_MIN_INPUT: (usize, usize) = (9, 9);

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("patch is {found_bands}x{found_frames}, model expects {bands}x{frames}")]
    PatchShape {
        bands: usize,
        frames: usize,
        found_bands: usize,
        found_frames: usize,
    },
    #[error("training data has no patches of class {0}")]
    MissingClass(String),
    #[error("ensemble: {0}")]
    Ensemble(String),
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
}

/// Knobs for architecture ablations. Defaults follow the published models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureOptions {
    pub dropout_rate: f64,
    /// Output activation of the binary model: `Sigmoid` or `Softmax`.
    pub binary_head: Activation,
}

impl Default for ArchitectureOptions {
    fn default() -> Self {
        ArchitectureOptions {
            dropout_rate: 0.5,
            binary_head: Activation::Sigmoid,
        }
    }
}

pub fn binary_layers(opts: &ArchitectureOptions) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(32, 3, 3, Activation::Relu),
        LayerSpec::maxpool(2, 2, 1),
        LayerSpec::conv(64, 3, 3, Activation::Relu),
        LayerSpec::maxpool(2, 2, 1),
        LayerSpec::conv(64, 3, 3, Activation::Relu),
        LayerSpec::Flatten,
        LayerSpec::dense(256, Activation::Relu),
        LayerSpec::Dropout { rate: opts.dropout_rate },
        LayerSpec::dense(2, opts.binary_head),
    ]
}

pub fn multiclass_layers(opts: &ArchitectureOptions) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(32, 20, 5, Activation::Relu),
        LayerSpec::maxpool(2, 2, 1),
        LayerSpec::conv(32, 8, 4, Activation::Relu),
        LayerSpec::maxpool(2, 2, 1),
        LayerSpec::Flatten,
        LayerSpec::Dropout { rate: opts.dropout_rate },
        LayerSpec::dense(NUM_CLASSES, Activation::Softmax),
    ]
}

/// Bands along the image height, frames along the width, one channel.
pub fn input_shape(cfg: &FeatureConfig) -> Shape {
    Shape::Spatial {
        h: cfg.n_bands,
        w: cfg.n_frames,
        c: 1,
    }
}

pub fn build_binary(cfg: &FeatureConfig, opts: &ArchitectureOptions) -> Result<Network<f32>, ModelError> {
    Ok(Network::new(input_shape(cfg), &binary_layers(opts))?)
}

pub fn build_multiclass(cfg: &FeatureConfig, opts: &ArchitectureOptions) -> Result<Network<f32>, ModelError> {
    Ok(Network::new(input_shape(cfg), &multiclass_layers(opts))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Positive,
    Negative,
}

impl BinaryLabel {
    pub fn of(species: SpeciesLabel) -> Self {
        if species.is_target() {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }

    /// Output unit / class index: positive 0, negative 1.
    pub fn index(self) -> usize {
        match self {
            BinaryLabel::Positive => 0,
            BinaryLabel::Negative => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }
}

/// Positive only when the positive unit strictly wins.
pub fn binary_decision(scores: [f32; 2]) -> BinaryLabel {
    if scores[0] > scores[1] {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    }
}

fn check_patch(model: &TrainedModel, patch: &FeaturePatch) -> Result<(), ModelError> {
    let Shape::Spatial { h, w, .. } = model.network.input_shape() else {
        return Err(ModelError::Ensemble("model input is not a patch".into()));
    };
    if patch.n_bands != h || patch.n_frames != w || patch.values.len() != h * w {
        return Err(ModelError::PatchShape {
            bands: h,
            frames: w,
            found_bands: patch.n_bands,
            found_frames: patch.n_frames,
        });
    }
    Ok(())
}

fn stack(model: &TrainedModel, patches: &[&FeaturePatch]) -> Result<Vec<f32>, ModelError> {
    let mut x = Vec::with_capacity(patches.len() * model.network.input_shape().size());
    for p in patches {
        check_patch(model, p)?;
        x.extend_from_slice(&p.values);
    }
    Ok(x)
}

const PREDICT_BATCH: usize = 64;

/// Raw eval-mode outputs for many patches, one row per patch.
pub fn predict_scores(model: &TrainedModel, patches: &[&FeaturePatch]) -> Result<Vec<f32>, ModelError> {
    if patches.is_empty() {
        return Ok(Vec::new());
    }
    let x = stack(model, patches)?;
    Ok(nn::predict_batched(&model.network, &x, PREDICT_BATCH)?)
}

pub fn predict_binary(model: &TrainedModel, patch: &FeaturePatch) -> Result<(BinaryLabel, [f32; 2]), ModelError> {
    Ok(predict_binary_batch(model, &[patch])?[0])
}

pub fn predict_binary_batch(model: &TrainedModel, patches: &[&FeaturePatch]) -> Result<Vec<(BinaryLabel, [f32; 2])>, ModelError> {
    if model.network.output_size() != 2 {
        return Err(ModelError::Ensemble("not a two-output model".into()));
    }
    Ok(predict_scores(model, patches)?
        .chunks(2)
        .map(|s| {
            let s = [s[0], s[1]];
            (binary_decision(s), s)
        })
        .collect())
}

pub fn predict_multiclass(model: &TrainedModel, patch: &FeaturePatch) -> Result<(SpeciesLabel, Vec<f32>), ModelError> {
    Ok(predict_multiclass_batch(model, &[patch])?.remove(0))
}

/// Argmax over the class probabilities; ties go to the lowest class index.
pub fn predict_multiclass_batch(model: &TrainedModel, patches: &[&FeaturePatch]) -> Result<Vec<(SpeciesLabel, Vec<f32>)>, ModelError> {
    if model.network.output_size() != NUM_CLASSES {
        return Err(ModelError::Ensemble(format!("not a {NUM_CLASSES}-output model")));
    }
    let scores = predict_scores(model, patches)?;
    let labels = nn::argmax_rows(&scores, NUM_CLASSES);
    Ok(scores
        .chunks(NUM_CLASSES)
        .zip(labels)
        .map(|(p, l)| (SpeciesLabel::from_index(l).expect("in range"), p.to_vec()))
        .collect())
}

fn metadata(architecture: &str, cfg: &FeatureConfig, train: &TrainConfig, opts: &ArchitectureOptions, classes: Vec<String>, loss_curve: Vec<f64>) -> ModelMetadata {
    ModelMetadata {
        architecture: architecture.to_string(),
        feature_config: Some(cfg.clone()),
        seed: train.seed,
        epochs: train.epochs,
        batch_size: train.batch_size,
        dropout_rate: opts.dropout_rate,
        classes,
        loss_curve,
    }
}

fn flatten(patches: &[&FeaturePatch]) -> Vec<f32> {
    patches.iter().flat_map(|p| p.values.iter().copied()).collect()
}

/// Trains the binary architecture: target species against everything else.
/// Both classes must be present.
pub fn train_binary(patches: &[&FeaturePatch], cfg: &FeatureConfig, train: &TrainConfig, opts: &ArchitectureOptions) -> Result<TrainedModel, ModelError> {
    let labels: Vec<usize> = patches.iter().map(|p| BinaryLabel::of(p.label).index()).collect();
    for (i, name) in BINARY_CLASSES.iter().enumerate() {
        if !labels.contains(&i) {
            return Err(ModelError::MissingClass(name.to_string()));
        }
    }
    let mut network = build_binary(cfg, opts)?;
    for p in patches {
        check_shape(cfg, p)?;
    }
    let x = flatten(patches);
    let history = nn::fit(
        &mut network,
        nn::Dataset {
            inputs: &x,
            labels: &labels,
            n_classes: 2,
        },
        train,
    )?;
    Ok(TrainedModel {
        network,
        metadata: metadata(BINARY_ARCHITECTURE, cfg, train, opts, BINARY_CLASSES.iter().map(|s| s.to_string()).collect(), history.epoch_loss),
    })
}

/// Trains the 23-way architecture. Every class that appears in `required`
/// must have at least one patch.
pub fn train_multiclass(patches: &[&FeaturePatch], required: &[SpeciesLabel], cfg: &FeatureConfig, train: &TrainConfig, opts: &ArchitectureOptions) -> Result<TrainedModel, ModelError> {
    for r in required {
        if !patches.iter().any(|p| p.label == *r) {
            return Err(ModelError::MissingClass(r.name().to_string()));
        }
    }
    let mut network = build_multiclass(cfg, opts)?;
    for p in patches {
        check_shape(cfg, p)?;
    }
    let labels: Vec<usize> = patches.iter().map(|p| p.label.index()).collect();
    let x = flatten(patches);
    let history = nn::fit(
        &mut network,
        nn::Dataset {
            inputs: &x,
            labels: &labels,
            n_classes: NUM_CLASSES,
        },
        train,
    )?;
    Ok(TrainedModel {
        network,
        metadata: metadata(MULTICLASS_ARCHITECTURE, cfg, train, opts, SpeciesLabel::all().map(|s| s.name().to_string()).collect(), history.epoch_loss),
    })
}

fn check_shape(cfg: &FeatureConfig, p: &FeaturePatch) -> Result<(), ModelError> {
    if p.n_bands != cfg.n_bands || p.n_frames != cfg.n_frames || p.values.len() != cfg.n_bands * cfg.n_frames {
        return Err(ModelError::PatchShape {
            bands: cfg.n_bands,
            frames: cfg.n_frames,
            found_bands: p.n_bands,
            found_frames: p.n_frames,
        });
    }
    Ok(())
}
