use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dataset::STANDARD_RATE;

/// (bands, frames, hop, window) for configurations 1..=11.
pub const CONFIG_TABLE: [(usize, usize, usize, usize); 11] = [
    (20, 40, 128, 1024),
    (40, 40, 128, 1024),
    (60, 40, 128, 1024),
    (80, 40, 128, 1024),
    (60, 20, 128, 1024),
    (60, 60, 128, 1024),
    (60, 40, 64, 1024),
    (60, 40, 256, 1024),
    (60, 40, 512, 1024),
    (60, 40, 256, 512),
    (60, 40, 256, 2048),
];

/// The configuration used for all final experiments.
pub const DEFAULT_CONFIG_ID: u8 = 8;

pub const PATCH_OVERLAP: f64 = 0.5;
pub const DB_FLOOR: f64 = -80.0;

/// Spectrogram and patching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Grid row this was built from, if any.
    pub id: Option<u8>,
    pub n_bands: usize,
    pub n_frames: usize,
    pub hop_length: usize,
    pub window_size: usize,
    pub patch_overlap: f64,
    pub sample_rate: u32,
    pub db_floor: f64,
}

impl FeatureConfig {
    pub fn from_id(id: u8) -> Result<Self, FeatureError> {
        let (n_bands, n_frames, hop_length, window_size) = *CONFIG_TABLE
            .get((id as usize).wrapping_sub(1))
            .ok_or(FeatureError::UnknownConfig(id))?;
        Ok(FeatureConfig {
            id: Some(id),
            n_bands,
            n_frames,
            hop_length,
            window_size,
            patch_overlap: PATCH_OVERLAP,
            sample_rate: STANDARD_RATE,
            db_floor: DB_FLOOR,
        })
    }

    /// An explicit configuration outside the grid.
    pub fn custom(n_bands: usize, n_frames: usize, hop_length: usize, window_size: usize) -> Result<Self, FeatureError> {
        let cfg = FeatureConfig {
            id: None,
            n_bands,
            n_frames,
            hop_length,
            window_size,
            patch_overlap: PATCH_OVERLAP,
            sample_rate: STANDARD_RATE,
            db_floor: DB_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.n_bands == 0 || self.n_frames == 0 || self.hop_length == 0 {
            return bad("bands, frames and hop must be positive");
        }
        if self.window_size < self.hop_length {
            return bad("window_size must be at least hop_length");
        }
        if !(0.0..1.0).contains(&self.patch_overlap) {
            return bad("patch_overlap must lie in [0, 1)");
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.db_floor.is_nan() || self.db_floor >= 0.0 {
            return bad("db_floor must be negative");
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Frames between consecutive patch starts.
    pub fn patch_stride(&self) -> usize {
        ((self.n_frames as f64 * (1.0 - self.patch_overlap)).floor() as usize).max(1)
    }

    /// Human label: `#8` or `custom`.
    pub fn label(&self) -> String {
        match self.id {
            Some(id) => format!("#{id}"),
            None => "custom".to_string(),
        }
    }
}
