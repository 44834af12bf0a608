//! Manifest CSV: `file_path,species,segments`.
//!
//! `segments` is empty (keep the whole file) or a `;`-separated list of
//! `start-end` pairs in seconds, e.g. `0.0-1.5;2.0-3.25`. Relative file paths
//! resolve against the manifest's directory.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::SpeciesLabel;
use super::DatasetError;

/// A kept region of a recording, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file_path: PathBuf,
    pub species: SpeciesLabel,
    /// Empty means keep the whole file.
    pub keep_segments: Vec<Segment>,
}

impl ManifestEntry {
    pub fn new(file_path: impl Into<PathBuf>, species: SpeciesLabel) -> Self {
        ManifestEntry {
            file_path: file_path.into(),
            species,
            keep_segments: Vec::new(),
        }
    }

    /// Stable identifier used to tag clips and patches from this file.
    pub fn source_id(&self) -> String {
        self.file_path.display().to_string()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    file_path: String,
    species: String,
    #[serde(default)]
    segments: String,
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(file, base)
}

/// Parses manifest CSV from any reader; relative paths are joined onto `base_dir`.
pub fn parse_manifest<R: Read>(reader: R, base_dir: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DatasetError::Manifest {
        row: 0,
        message: e.to_string(),
    })?;
    let expected = ["file_path", "species", "segments"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DatasetError::Manifest {
            row: 0,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut entries = Vec::new();
    for (i, record) in rdr.deserialize::<Row>().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DatasetError::Manifest {
            row,
            message: e.to_string(),
        })?;
        let species: SpeciesLabel = record.species.parse().map_err(|e: super::labels::UnknownSpecies| {
            DatasetError::Manifest {
                row,
                message: e.to_string(),
            }
        })?;
        let keep_segments = parse_segments(&record.segments).map_err(|message| DatasetError::Manifest { row, message })?;
        let raw = PathBuf::from(&record.file_path);
        let file_path = if raw.is_absolute() { raw } else { base_dir.join(raw) };
        entries.push(ManifestEntry {
            file_path,
            species,
            keep_segments,
        });
    }
    Ok(entries)
}

/// Parses `start-end;start-end` and checks ordering and overlap.
pub fn parse_segments(field: &str) -> Result<Vec<Segment>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    let mut segments = Vec::new();
    for part in field.split(';') {
        let part = part.trim();
        let (a, b) = part
            .split_once('-')
            .ok_or_else(|| format!("malformed segment `{part}`, expected start-end"))?;
        let start: f64 = a.trim().parse().map_err(|_| format!("bad segment start `{a}`"))?;
        let end: f64 = b.trim().parse().map_err(|_| format!("bad segment end `{b}`"))?;
        segments.push(Segment { start, end });
    }
    validate_segments(&segments)?;
    Ok(segments)
}

pub fn validate_segments(segments: &[Segment]) -> Result<(), String> {
    for s in segments {
        if !(s.start.is_finite() && s.end.is_finite()) || s.start < 0.0 {
            return Err(format!("segment {s} out of range"));
        }
        if s.end <= s.start {
            return Err(format!("segment {s} has end <= start"));
        }
    }
    for pair in segments.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(format!("segments {} and {} overlap or are unsorted", pair[0], pair[1]));
        }
    }
    Ok(())
}

/// Writes entries in manifest format. Paths under `base_dir` are written relative to it.
pub fn write_manifest<W: Write>(writer: W, entries: &[ManifestEntry], base_dir: &Path) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["file_path", "species", "segments"])?;
    for e in entries {
        let path = e.file_path.strip_prefix(base_dir).unwrap_or(&e.file_path);
        let segments = e
            .keep_segments
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([path.display().to_string().as_str(), e.species.name(), segments.as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}
