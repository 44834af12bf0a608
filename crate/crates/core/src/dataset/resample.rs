//! Bandlimited sample-rate conversion by windowed-sinc interpolation.
//!
//! The low-pass prototype is a sinc with its cutoff at the lower of the two
//! Nyquist frequencies, shaped by a Kaiser window (beta = 8) spanning 64 zero
//! crossings of the output rate. For integer rates the fractional source
//! position of every output sample takes one of `dst / gcd(src, dst)` values,
//! so the filter is tabulated once per phase ("branch") and reused.

const KAISER_BETA: f64 = 8.0;
/// Zero crossings on each side of the kernel centre, in output-rate periods.
const HALF_ZERO_CROSSINGS: f64 = 32.0;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Polyphase windowed-sinc resampler between two integer rates.
#[derive(Debug, Clone)]
pub struct Resampler {
    /// Source advance per output sample is `step_num / step_den` samples.
    step_num: u64,
    step_den: u64,
    /// Taps either side of the integer source position.
    reach: usize,
    /// `branches[phase][j]` weights source sample `floor(t) - reach + 1 + j`.
    branches: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Self {
        assert!(source_rate > 0 && target_rate > 0);
        let g = gcd(source_rate as u64, target_rate as u64);
        let step_num = source_rate as u64 / g;
        let step_den = target_rate as u64 / g;
        // Cutoff relative to the source rate; 1.0 when upsampling.
        let ratio = (target_rate as f64 / source_rate as f64).min(1.0);
        let half_width = HALF_ZERO_CROSSINGS / ratio;
        let reach = half_width.ceil() as usize;
        let norm = bessel_i0(KAISER_BETA);

        let branches = (0..step_den)
            .map(|phase| {
                let frac = phase as f64 / step_den as f64;
                let mut taps: Vec<f64> = (0..2 * reach)
                    .map(|j| {
                        // distance from output instant to source sample
                        let x = frac + (reach as f64 - 1.0) - j as f64;
                        let r = x / half_width;
                        if r.abs() >= 1.0 {
                            0.0
                        } else {
                            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                            ratio * sinc(ratio * x) * w
                        }
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                if sum.abs() > 0.0 {
                    taps.iter_mut().for_each(|t| *t /= sum);
                }
                taps
            })
            .collect();

        Resampler {
            step_num,
            step_den,
            reach,
            branches,
        }
    }

    /// Output length for an input of `len` samples: every output instant
    /// strictly inside the input's time span.
    pub fn output_len(&self, len: usize) -> usize {
        ((len as u64 * self.step_den).div_ceil(self.step_num)) as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let n_out = self.output_len(input.len());
        let len = input.len() as i64;
        (0..n_out as u64)
            .map(|n| {
                let pos = n * self.step_num;
                let base = (pos / self.step_den) as i64;
                let phase = (pos % self.step_den) as usize;
                let taps = &self.branches[phase];
                let first = base - self.reach as i64 + 1;
                let lo = (-first).max(0) as usize;
                let hi = ((len - first).max(0) as usize).min(taps.len());
                (lo..hi)
                    .map(|j| taps[j] * input[(first + j as i64) as usize])
                    .sum()
            })
            .collect()
    }
}

/// Convenience wrapper; identity when the rates match.
pub fn resample(input: &[f64], source_rate: u32, target_rate: u32) -> Vec<f64> {
    if source_rate == target_rate {
        return input.to_vec();
    }
    Resampler::new(source_rate, target_rate).process(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, seconds: f64) -> Vec<f64> {
        let n = (rate as f64 * seconds).round() as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
    }

    /// Direct DFT magnitude at integer-Hz resolution, restricted to `lo..=hi` Hz.
    fn dft_peak_hz(x: &[f64], rate: u32, lo: usize, hi: usize) -> f64 {
        let n = x.len() as f64;
        let mut best = (0.0, f64::MIN);
        // scan on the bin grid of the signal length
        let bin_hz = rate as f64 / n;
        let k_lo = (lo as f64 / bin_hz).floor() as usize;
        let k_hi = (hi as f64 / bin_hz).ceil() as usize;
        for k in k_lo..=k_hi {
            let w = 2.0 * PI * k as f64 / n;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                re += v * (w * i as f64).cos();
                im -= v * (w * i as f64).sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (k as f64 * bin_hz, mag);
            }
        }
        best.0
    }

    #[test]
    fn length_preserves_duration() {
        let r = Resampler::new(44_100, 8_000);
        assert_eq!(r.output_len(88_200), 16_000);
        for len in [1usize, 2, 441, 1000, 44_101, 123_457] {
            let out = r.output_len(len);
            let kept = len as f64 / 44_100.0;
            assert!((out as f64 / 8_000.0 - kept).abs() <= 1.0 / 8_000.0, "len {len}");
        }
    }

    #[test]
    fn tone_peak_survives_downsampling() {
        let x = tone(440.0, 44_100, 1.0);
        let y = resample(&x, 44_100, 8_000);
        assert_eq!(y.len(), 8_000);
        let peak = dft_peak_hz(&y, 8_000, 100, 3_900);
        assert!((peak - 440.0).abs() <= 1.0, "peak at {peak}");
    }

    #[test]
    fn passband_amplitude_is_preserved() {
        let x = tone(500.0, 48_000, 0.5);
        let y = resample(&x, 48_000, 8_000);
        // skip the edges where the kernel runs off the input
        let mid = &y[500..y.len() - 500];
        let peak = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-3, "peak {peak}");
    }

    #[test]
    fn content_above_target_nyquist_is_suppressed() {
        let x = tone(6_000.0, 44_100, 0.5);
        let y = resample(&x, 44_100, 8_000);
        let mid = &y[400..y.len() - 400];
        let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
        assert!(rms < 1e-3, "alias rms {rms}");
    }

    #[test]
    fn dc_gain_is_unity() {
        let x = vec![0.25; 22_050];
        let y = resample(&x, 22_050, 8_000);
        for v in &y[300..y.len() - 300] {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_at_equal_rates() {
        let x = tone(300.0, 8_000, 0.1);
        assert_eq!(resample(&x, 8_000, 8_000), x);
    }
}
