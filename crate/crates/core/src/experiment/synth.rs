//! Synthetic wingbeat-like recordings: a harmonic stack per class with
//! per-file random phases and amplitude jitter plus white noise.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{atomic_write, ExperimentError};
use crate::dataset::{write_manifest, ManifestEntry, SpeciesLabel, NUM_CLASSES, STANDARD_RATE};
use crate::nn::seeded_rng;

pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub species: SpeciesLabel,
    pub fundamental_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    /// Partials including the fundamental; those at or above Nyquist are dropped.
    pub harmonics: usize,
    /// Signal-to-noise ratio in dB; `None` writes clean tones.
    pub snr_db: Option<f64>,
    pub files_per_class: usize,
    pub seconds_per_file: f64,
    pub sample_rate: u32,
    /// Relative jitter of each partial's amplitude, uniform in +-this.
    pub amplitude_jitter: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(classes: Vec<SynthClass>) -> Self {
        SynthSpec {
            classes,
            harmonics: 4,
            snr_db: Some(20.0),
            files_per_class: 4,
            seconds_per_file: 5.0,
            sample_rate: STANDARD_RATE,
            amplitude_jitter: 0.2,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Synth(m));
        if self.classes.is_empty() || self.classes.len() > NUM_CLASSES {
            return bad(format!("need 1 to {NUM_CLASSES} classes, got {}", self.classes.len()));
        }
        let distinct: BTreeSet<_> = self.classes.iter().map(|c| c.species).collect();
        if distinct.len() != self.classes.len() {
            return bad("a species appears twice".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for c in &self.classes {
            if c.fundamental_hz.is_nan() || c.fundamental_hz <= 0.0 || c.fundamental_hz >= nyquist {
                return bad(format!("{}: fundamental {} Hz must lie in (0, {nyquist}) Hz", c.species, c.fundamental_hz));
            }
        }
        if self.harmonics == 0 || self.files_per_class == 0 || self.seconds_per_file.is_nan() || self.seconds_per_file <= 0.0 {
            return bad("harmonics, files per class and seconds per file must be positive".into());
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return bad("amplitude jitter must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// One file's samples in [-1, 1].
pub fn synth_signal(fundamental_hz: f64, spec: &SynthSpec, rng: &mut impl Rng) -> Vec<f64> {
    let rate = spec.sample_rate as f64;
    let n = (spec.seconds_per_file * rate).round() as usize;
    let partials: Vec<(f64, f64, f64)> = (1..=spec.harmonics)
        .map(|h| h as f64 * fundamental_hz)
        .filter(|&f| f < rate / 2.0)
        .enumerate()
        .map(|(i, f)| {
            let jitter = 1.0 + spec.amplitude_jitter * (2.0 * rng.random::<f64>() - 1.0);
            let phase = 2.0 * PI * rng.random::<f64>();
            (f, jitter / (i + 1) as f64, phase)
        })
        .collect();
    let mut x: Vec<f64> = (0..n)
        .map(|t| {
            let t = t as f64 / rate;
            partials.iter().map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum()
        })
        .collect();
    if let Some(snr) = spec.snr_db {
        let power = x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for v in &mut x {
            *v += noise.sample(rng);
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.9 / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}

fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<(), ExperimentError> {
    let io = |e: hound::Error| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &v in samples {
        w.write_sample((v * 32767.0).round().clamp(-32768.0, 32767.0) as i16).map_err(io)?;
    }
    w.finalize().map_err(io)
}

/// Writes `files_per_class` WAVs per class and a manifest into `out_dir`;
/// returns the manifest path.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf, ExperimentError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for class in &spec.classes {
        for f in 0..spec.files_per_class {
            let mut rng = seeded_rng(spec.seed, 1000 + (class.species.index() * 100_000 + f) as u64);
            let samples = synth_signal(class.fundamental_hz, spec, &mut rng);
            let name = format!("{}_{:03}.wav", class.species.name(), f);
            let path = out_dir.join(&name);
            write_wav(&path, &samples, spec.sample_rate)?;
            entries.push(ManifestEntry::new(path, class.species));
        }
    }
    let mut buf = Vec::new();
    write_manifest(&mut buf, &entries, out_dir).map_err(|e| ExperimentError::Synth(e.to_string()))?;
    let manifest = out_dir.join(MANIFEST_NAME);
    atomic_write(&manifest, &buf)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_fundamental_at_nyquist() {
        let spec = SynthSpec::new(vec![SynthClass {
            species: SpeciesLabel::TARGET,
            fundamental_hz: 4000.0,
        }]);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(generate_synthetic(&spec, dir.path()), Err(ExperimentError::Synth(_))));
    }

    #[test]
    fn clean_signal_has_requested_length_and_range() {
        let mut spec = SynthSpec::new(vec![]);
        spec.snr_db = None;
        spec.seconds_per_file = 0.5;
        let x = synth_signal(500.0, &spec, &mut seeded_rng(1, 1));
        assert_eq!(x.len(), 4000);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-12);
    }
}
