//! HTK-style mel filterbank and the dB / unit-interval mapping.

use super::{FeatureConfig, FeatureError, Matrix};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, one row per band, area-normalized over Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_bands x n_bins`, row-major.
    pub weights: Matrix,
    pub band_centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_bands(&self) -> usize {
        self.weights.rows
    }

    /// Distance in Hz to the neighbouring centre above (below, for the top band).
    pub fn band_spacing_hz(&self, band: usize) -> f64 {
        let c = &self.band_centers_hz;
        if band + 1 < c.len() {
            c[band + 1] - c[band]
        } else {
            c[band] - c[band - 1]
        }
    }
}

/// Builds `n_bands` triangles whose edges and centres are `n_bands + 2`
/// points evenly spaced in mel between 0 Hz and Nyquist.
pub fn build_mel_filterbank(cfg: &FeatureConfig) -> Result<MelFilterbank, FeatureError> {
    let n_bins = cfg.n_bins();
    if cfg.n_bands == 0 || cfg.n_bands >= cfg.window_size / 2 {
        return Err(FeatureError::FilterbankResolution {
            n_bands: cfg.n_bands,
            window: cfg.window_size,
            band: None,
        });
    }
    let nyquist = cfg.sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..cfg.n_bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (cfg.n_bands + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.window_size as f64;

    let mut weights = Matrix::zeros(cfg.n_bands, n_bins);
    for m in 0..cfg.n_bands {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let area_norm = 2.0 / (hi - lo);
        let mut any = false;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let rising = (f - lo) / (centre - lo);
            let falling = (hi - f) / (hi - centre);
            let w = rising.min(falling).max(0.0);
            if w > 0.0 {
                weights.set(m, k, w * area_norm);
                any = true;
            }
        }
        if !any {
            return Err(FeatureError::FilterbankResolution {
                n_bands: cfg.n_bands,
                window: cfg.window_size,
                band: Some(m),
            });
        }
    }
    Ok(MelFilterbank {
        weights,
        band_centers_hz: edges[1..=cfg.n_bands].to_vec(),
    })
}

/// The affine map from [-80, 0] dB onto [0, 1].
pub fn db_to_unit(db: f64, db_floor: f64) -> f64 {
    db / -db_floor + 1.0
}

/// Projects power onto the mel bands, converts to dB relative to the
/// spectrogram maximum (floored at `db_floor`) and maps to [0, 1].
///
/// A spectrogram whose maximum is zero maps to all zeros.
pub fn mel_db_normalize(power: &Matrix, fb: &MelFilterbank, db_floor: f64) -> Matrix {
    let mel = fb.weights.matmul(power);
    let max = mel.data.iter().cloned().fold(0.0f64, f64::max);
    let mut out = Matrix::zeros(mel.rows, mel.cols);
    if max <= 0.0 {
        return out;
    }
    for (o, &v) in out.data.iter_mut().zip(&mel.data) {
        let db = if v > 0.0 { (10.0 * (v / max).log10()).max(db_floor) } else { db_floor };
        *o = db_to_unit(db, db_floor).clamp(0.0, 1.0);
    }
    out
}
