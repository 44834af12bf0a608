use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureConfig, FeatureError, Matrix};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of full frames that fit in `len` samples.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// One-sided power spectrogram, shape `(window/2 + 1) x T`.
///
/// Frame `t` covers samples `[t*hop, t*hop + window)`; frames are not
/// centred or padded.
pub fn stft_power(samples: &[f32], sample_rate: u32, cfg: &FeatureConfig) -> Result<Matrix, FeatureError> {
    if sample_rate != cfg.sample_rate {
        return Err(FeatureError::RateMismatch {
            expected: cfg.sample_rate,
            found: sample_rate,
        });
    }
    let win = cfg.window_size;
    let frames = frame_count(samples.len(), win, cfg.hop_length);
    if frames == 0 {
        return Err(FeatureError::TooShort {
            len: samples.len(),
            window: win,
        });
    }
    let n_bins = cfg.n_bins();
    let window = hann_window(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); win];

    let mut out = Matrix::zeros(n_bins, frames);
    for t in 0..frames {
        let start = t * cfg.hop_length;
        for (b, (&x, &w)) in buf.iter_mut().zip(samples[start..start + win].iter().zip(&window)) {
            *b = Complex::new(x as f64 * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(n_bins).enumerate() {
            out.set(k, t, c.norm_sqr());
        }
    }
    Ok(out)
}
