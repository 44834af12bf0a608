use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::batch_loss_and_grad;
use super::network::{InitScheme, Mode, Network};
use super::optim::{RmsProp, RmsPropConfig};
use super::NnError;

/// RNG streams derived from a single seed.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_DROPOUT: u64 = 3;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: RmsPropConfig,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            optimizer: RmsPropConfig::default(),
            shuffle: true,
        }
    }
}

/// In-memory training set: `inputs` holds `labels.len()` examples back to back.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub inputs: &'a [f32],
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl Dataset<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Initialises `net` from `cfg.seed` and trains it with mini-batch RMSProp.
pub fn fit(net: &mut Network<f32>, data: Dataset<'_>, cfg: &TrainConfig) -> Result<TrainHistory, NnError> {
    net.init(InitScheme::GlorotUniform, &mut seeded_rng(cfg.seed, STREAM_INIT));
    fit_from_current(net, data, cfg)
}

/// Like [`fit`] but starts from the network's current parameters.
pub fn fit_from_current(net: &mut Network<f32>, data: Dataset<'_>, cfg: &TrainConfig) -> Result<TrainHistory, NnError> {
    let in_size = net.input_shape().size();
    if data.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if data.inputs.len() != data.len() * in_size {
        return Err(NnError::InputSize {
            expected: data.len() * in_size,
            found: data.inputs.len(),
        });
    }
    if net.output_size() != data.n_classes {
        return Err(NnError::Shape {
            layer: net.specs().len() - 1,
            message: format!("network has {} outputs but data has {} classes", net.output_size(), data.n_classes),
        });
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= data.n_classes) {
        return Err(NnError::Label { label: bad, n_classes: data.n_classes });
    }
    if cfg.batch_size == 0 {
        return Err(NnError::EmptyBatch);
    }

    let head = net.output_activation();
    let mut opt = RmsProp::new(cfg.optimizer, net.params());
    let mut shuffle_rng = seeded_rng(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = seeded_rng(cfg.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch_x = Vec::with_capacity(cfg.batch_size * in_size);
    let mut batch_y = Vec::with_capacity(cfg.batch_size * data.n_classes);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut total = 0.0f64;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch_x.clear();
            batch_y.clear();
            for &i in idx {
                batch_x.extend_from_slice(&data.inputs[i * in_size..(i + 1) * in_size]);
                batch_y.extend((0..data.n_classes).map(|c| if c == data.labels[i] { 1.0f32 } else { 0.0 }));
            }
            let pass = net.forward(&batch_x, Mode::Train(&mut dropout_rng))?;
            let (loss, grad) = batch_loss_and_grad(pass.output(), &batch_y, data.n_classes, head);
            if !loss.is_finite() {
                let layer = net.first_non_finite_layer(&pass).unwrap_or(net.specs().len() - 1);
                return Err(NnError::NonFinite { layer, epoch, batch: b });
            }
            let grads = net.backward(&pass, grad);
            if let Some(p) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(NnError::NonFinite {
                    layer: net.param_layer(p),
                    epoch,
                    batch: b,
                });
            }
            opt.step(net.params_mut(), &grads);
            total += loss as f64 * idx.len() as f64;
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {} loss {:.6}", epoch + 1, mean);
        history.epoch_loss.push(mean);
    }
    Ok(history)
}

/// Argmax over each row of network outputs; ties go to the lower index.
pub fn argmax_rows(outputs: &[f32], width: usize) -> Vec<usize> {
    outputs
        .chunks(width)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Eval-mode predictions in chunks of `batch` examples.
pub fn predict_batched(net: &Network<f32>, inputs: &[f32], batch: usize) -> Result<Vec<f32>, NnError> {
    let in_size = net.input_shape().size();
    let mut out = Vec::with_capacity(inputs.len() / in_size * net.output_size());
    for chunk in inputs.chunks(batch.max(1) * in_size) {
        out.extend(net.predict(chunk)?);
    }
    Ok(out)
}
