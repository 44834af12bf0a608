//! Audio ingestion: manifest loading, WAV decoding, downmixing, resampling
//! to the standard rate and keep-segment application.

mod labels;
mod manifest;
pub mod resample;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use labels::{SpeciesLabel, UnknownSpecies, NUM_CLASSES, SPECIES_NAMES, TARGET_INDEX};
pub use manifest::{load_manifest, parse_manifest, parse_segments, validate_segments, write_manifest, ManifestEntry, Segment};

/// The lowest sampling rate among the original recordings; every clip is
/// brought down to it.
pub const STANDARD_RATE: u32 = 8_000;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("{path}: cannot decode: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: refusing to upsample from {source_rate} Hz to {target_rate} Hz")]
    UpsamplingRefused {
        path: PathBuf,
        source_rate: u32,
        target_rate: u32,
    },
    #[error("{path}: segment ends at {end} s but the file lasts {duration} s")]
    SegmentOutOfRange { path: PathBuf, end: f64, duration: f64 },
    #[error("{path}: no samples left after applying keep segments")]
    EmptyClip { path: PathBuf },
}

/// Decoded mono audio at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub species: SpeciesLabel,
    pub source_id: String,
}

impl AudioClip {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Raw decoded file: downmixed to mono, scaled to [-1, 1].
#[derive(Debug, Clone)]
pub struct MonoAudio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Reads a 16- or 24-bit integer PCM WAV with one or two channels and
/// averages the channels.
pub fn read_wav_mono(path: &Path) -> Result<MonoAudio, DatasetError> {
    let decode_err = |message: String| DatasetError::Decode {
        path: path.to_path_buf(),
        message,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => decode_err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || !(spec.bits_per_sample == 16 || spec.bits_per_sample == 24) {
        return Err(decode_err(format!(
            "unsupported encoding {:?} {}-bit (need 16/24-bit integer PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(decode_err(format!("unsupported channel count {}", spec.channels)));
    }
    let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
    let raw = reader
        .into_samples::<i32>()
        .map(|s| s.map(|v| v as f64 * scale))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| decode_err(e.to_string()))?;
    let samples = downmix(&raw, spec.channels as usize);
    Ok(MonoAudio {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Arithmetic mean over interleaved channels.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    match channels {
        1 => interleaved.to_vec(),
        _ => interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect(),
    }
}

fn check_segments(entry: &ManifestEntry, duration: f64, source_rate: u32) -> Result<(), DatasetError> {
    // half a source sample of slack for rounding in hand-written manifests
    let slack = 0.5 / source_rate as f64;
    if let Some(last) = entry.keep_segments.last() {
        if last.end > duration + slack {
            return Err(DatasetError::SegmentOutOfRange {
                path: entry.file_path.clone(),
                end: last.end,
                duration,
            });
        }
    }
    Ok(())
}

fn segment_range(seg: &Segment, rate: u32, len: usize) -> std::ops::Range<usize> {
    let a = ((seg.start * rate as f64).round() as usize).min(len);
    let b = ((seg.end * rate as f64).round() as usize).min(len);
    a..b
}

fn standardized_regions(entry: &ManifestEntry, target_rate: u32) -> Result<Vec<Vec<f32>>, DatasetError> {
    let mono = read_wav_mono(&entry.file_path)?;
    if target_rate > mono.sample_rate {
        return Err(DatasetError::UpsamplingRefused {
            path: entry.file_path.clone(),
            source_rate: mono.sample_rate,
            target_rate,
        });
    }
    let duration = mono.samples.len() as f64 / mono.sample_rate as f64;
    check_segments(entry, duration, mono.sample_rate)?;

    let resampled = resample::resample(&mono.samples, mono.sample_rate, target_rate);
    let to_f32 = |s: &[f64]| s.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect::<Vec<f32>>();
    if entry.keep_segments.is_empty() {
        return Ok(vec![to_f32(&resampled)]);
    }
    Ok(entry
        .keep_segments
        .iter()
        .map(|seg| to_f32(&resampled[segment_range(seg, target_rate, resampled.len())]))
        .filter(|r| !r.is_empty())
        .collect())
}

/// Decodes one manifest entry into a mono clip at `target_rate`, keeping only
/// the listed segments (concatenated in order).
pub fn decode_and_standardize(entry: &ManifestEntry, target_rate: u32) -> Result<AudioClip, DatasetError> {
    let samples: Vec<f32> = standardized_regions(entry, target_rate)?.concat();
    if samples.is_empty() {
        return Err(DatasetError::EmptyClip {
            path: entry.file_path.clone(),
        });
    }
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
        species: entry.species,
        source_id: entry.source_id(),
    })
}

/// Like [`decode_and_standardize`], but returns one clip per kept segment so
/// that later framing never straddles a cut.
pub fn decode_segments(entry: &ManifestEntry, target_rate: u32) -> Result<Vec<AudioClip>, DatasetError> {
    let regions = standardized_regions(entry, target_rate)?;
    if regions.is_empty() {
        return Err(DatasetError::EmptyClip {
            path: entry.file_path.clone(),
        });
    }
    Ok(regions
        .into_iter()
        .map(|samples| AudioClip {
            samples,
            sample_rate: target_rate,
            species: entry.species,
            source_id: entry.source_id(),
        })
        .collect())
}

/// Decodes every entry (in parallel), preserving manifest order.
pub fn load_clips(entries: &[ManifestEntry], target_rate: u32, split_segments: bool) -> Result<Vec<AudioClip>, DatasetError> {
    let per_entry: Vec<Result<Vec<AudioClip>, DatasetError>> = entries
        .par_iter()
        .map(|e| {
            if split_segments {
                decode_segments(e, target_rate)
            } else {
                decode_and_standardize(e, target_rate).map(|c| vec![c])
            }
        })
        .collect();
    let mut clips = Vec::new();
    for r in per_entry {
        clips.extend(r?);
    }
    Ok(clips)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesStats {
    pub species: SpeciesLabel,
    pub file_count: usize,
    pub total_duration_s: f64,
}

/// Per-species file counts and kept durations, in label order. Only species
/// that occur in `entries` are listed.
pub fn dataset_stats(entries: &[ManifestEntry]) -> Result<Vec<SpeciesStats>, DatasetError> {
    let mut per_species: Vec<Vec<f64>> = vec![Vec::new(); NUM_CLASSES];
    for entry in entries {
        let reader = hound::WavReader::open(&entry.file_path).map_err(|e| match e {
            hound::Error::IoError(source) => DatasetError::Io {
                path: entry.file_path.clone(),
                source,
            },
            other => DatasetError::Decode {
                path: entry.file_path.clone(),
                message: other.to_string(),
            },
        })?;
        let rate = reader.spec().sample_rate;
        let duration = reader.duration() as f64 / rate as f64;
        check_segments(entry, duration, rate)?;
        let kept = if entry.keep_segments.is_empty() {
            duration
        } else {
            entry.keep_segments.iter().map(|s| s.end.min(duration) - s.start).sum()
        };
        per_species[entry.species.index()].push(kept);
    }
    Ok(per_species
        .into_iter()
        .enumerate()
        .filter(|(_, d)| !d.is_empty())
        .map(|(i, mut durations)| {
            // canonical summation order so totals do not depend on row order
            durations.sort_by(f64::total_cmp);
            SpeciesStats {
                species: SpeciesLabel::from_index(i).expect("index in range"),
                file_count: durations.len(),
                total_duration_s: durations.iter().sum(),
            }
        })
        .collect())
}
