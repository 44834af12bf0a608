//! Mel-spectrogram patches: the model input representation.
//!
//! A clip becomes a power spectrogram (Hann-windowed STFT), is projected onto
//! an HTK mel filterbank, converted to dB relative to its own maximum with an
//! -80 dB floor, mapped onto [0, 1] by `x / 80 + 1`, and finally cut into
//! half-overlapping `n_bands x n_frames` patches.

pub mod cache;
mod config;
mod mel;
mod stft;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AudioClip, SpeciesLabel};

pub use config::{FeatureConfig, CONFIG_TABLE, DB_FLOOR, DEFAULT_CONFIG_ID, PATCH_OVERLAP};
pub use mel::{build_mel_filterbank, db_to_unit, hz_to_mel, mel_db_normalize, mel_to_hz, MelFilterbank};
pub use stft::{frame_count, hann_window, stft_power};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown feature configuration id {0} (valid: 1..=11)")]
    UnknownConfig(u8),
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("clip has {len} samples, shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("clip sample rate {found} Hz does not match configured {expected} Hz")]
    RateMismatch { expected: u32, found: u32 },
    #[error("{n_bands} mel bands is too many for a {window}-point window{}", band.map(|b| format!(" (band {b} covers no bin)")).unwrap_or_default())]
    FilterbankResolution {
        n_bands: usize,
        window: usize,
        band: Option<usize>,
    },
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

/// One `n_bands x n_frames` training/testing instance, values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePatch {
    /// Row-major, bands along rows and frames along columns.
    pub values: Vec<f32>,
    pub n_bands: usize,
    pub n_frames: usize,
    pub label: SpeciesLabel,
    pub source_id: String,
    pub patch_index: usize,
}

impl FeaturePatch {
    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.n_frames + frame]
    }
}

/// Number of patches `patchify` produces for `total_frames`.
pub fn patch_count(total_frames: usize, n_frames: usize, stride: usize) -> usize {
    if total_frames < n_frames {
        0
    } else {
        (total_frames - n_frames) / stride + 1
    }
}

/// Cuts a normalized spectrogram into patches starting every
/// [`FeatureConfig::patch_stride`] frames. Returns an empty list (and logs a
/// warning) when fewer than `n_frames` frames are available.
pub fn patchify(spec: &Matrix, cfg: &FeatureConfig, label: SpeciesLabel, source_id: &str) -> Vec<FeaturePatch> {
    assert_eq!(spec.rows, cfg.n_bands, "spectrogram band count does not match config");
    let stride = cfg.patch_stride();
    let count = patch_count(spec.cols, cfg.n_frames, stride);
    if count == 0 {
        log::warn!(
            "{source_id}: {} frames is fewer than one {}-frame patch; skipped",
            spec.cols,
            cfg.n_frames
        );
    }
    (0..count)
        .map(|p| {
            let start = p * stride;
            let mut values = Vec::with_capacity(cfg.n_bands * cfg.n_frames);
            for b in 0..cfg.n_bands {
                let row = &spec.data[b * spec.cols + start..b * spec.cols + start + cfg.n_frames];
                values.extend(row.iter().map(|&v| v as f32));
            }
            FeaturePatch {
                values,
                n_bands: cfg.n_bands,
                n_frames: cfg.n_frames,
                label,
                source_id: source_id.to_string(),
                patch_index: p,
            }
        })
        .collect()
}

/// Normalized mel spectrogram of a single clip.
pub fn clip_spectrogram(clip: &AudioClip, cfg: &FeatureConfig, fb: &MelFilterbank) -> Result<Matrix, FeatureError> {
    let power = stft_power(&clip.samples, clip.sample_rate, cfg)?;
    Ok(mel_db_normalize(&power, fb, cfg.db_floor))
}

/// Patches for a batch of clips plus non-fatal warnings.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub patches: Vec<FeaturePatch>,
    pub warnings: Vec<String>,
}

/// Runs the full feature pipeline over `clips`. Output order is clip order,
/// then patch index. Clips that are too short become warnings; consecutive
/// clips from the same source continue that source's patch numbering.
pub fn extract_features(clips: &[AudioClip], cfg: &FeatureConfig) -> Result<FeatureSet, FeatureError> {
    cfg.validate()?;
    let fb = build_mel_filterbank(cfg)?;
    let per_clip: Vec<Result<Vec<FeaturePatch>, FeatureError>> = clips
        .par_iter()
        .map(|clip| {
            let spec = clip_spectrogram(clip, cfg, &fb)?;
            Ok(patchify(&spec, cfg, clip.species, &clip.source_id))
        })
        .collect();

    let mut set = FeatureSet::default();
    let mut prev_source: Option<&str> = None;
    let mut next_index = 0usize;
    for (clip, result) in clips.iter().zip(per_clip) {
        if prev_source != Some(clip.source_id.as_str()) {
            next_index = 0;
        }
        prev_source = Some(clip.source_id.as_str());
        match result {
            Ok(mut patches) => {
                for p in &mut patches {
                    p.patch_index += next_index;
                }
                next_index += patches.len();
                set.patches.extend(patches);
            }
            Err(e @ FeatureError::TooShort { .. }) => {
                log::warn!("{}: {e}; skipped", clip.source_id);
                set.warnings.push(format!("{}: {e}", clip.source_id));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(set)
}
