//! Binary patch cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "WBPC" | version u32
//! config id u8 (0 = custom) | bands u32 | frames u32 | hop u32 | window u32
//! overlap f64 | sample_rate u32 | db_floor f64
//! patch count u64
//! patches: count x bands x frames f32, row-major
//! labels: count x u8
//! sources: n u32, then n x (len u32, utf-8 bytes)
//! per patch: source index u32, patch index u32
//! ```

use std::collections::HashMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{FeatureConfig, FeaturePatch};
use crate::dataset::SpeciesLabel;

pub const MAGIC: &[u8; 4] = b"WBPC";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a patch cache (bad magic)")]
    BadMagic,
    #[error("unsupported patch cache version {0}")]
    Version(u32),
    #[error("corrupt patch cache: {0}")]
    Corrupt(String),
}

pub fn write_cache<W: Write>(mut w: W, cfg: &FeatureConfig, patches: &[FeaturePatch]) -> Result<(), CacheError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u8(cfg.id.unwrap_or(0))?;
    for v in [cfg.n_bands, cfg.n_frames, cfg.hop_length, cfg.window_size] {
        w.write_u32::<LE>(v as u32)?;
    }
    w.write_f64::<LE>(cfg.patch_overlap)?;
    w.write_u32::<LE>(cfg.sample_rate)?;
    w.write_f64::<LE>(cfg.db_floor)?;
    w.write_u64::<LE>(patches.len() as u64)?;

    let size = cfg.n_bands * cfg.n_frames;
    for p in patches {
        if p.values.len() != size {
            return Err(CacheError::Corrupt(format!(
                "patch {} of {} has {} values, config expects {size}",
                p.patch_index,
                p.source_id,
                p.values.len()
            )));
        }
        for &v in &p.values {
            w.write_f32::<LE>(v)?;
        }
    }
    for p in patches {
        w.write_u8(p.label.index() as u8)?;
    }

    let mut sources: Vec<&str> = Vec::new();
    let mut lookup: HashMap<&str, u32> = HashMap::new();
    let source_idx: Vec<u32> = patches
        .iter()
        .map(|p| {
            *lookup.entry(p.source_id.as_str()).or_insert_with(|| {
                sources.push(p.source_id.as_str());
                (sources.len() - 1) as u32
            })
        })
        .collect();
    w.write_u32::<LE>(sources.len() as u32)?;
    for s in &sources {
        w.write_u32::<LE>(s.len() as u32)?;
        w.write_all(s.as_bytes())?;
    }
    for (p, idx) in patches.iter().zip(source_idx) {
        w.write_u32::<LE>(idx)?;
        w.write_u32::<LE>(p.patch_index as u32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache<R: Read>(mut r: R) -> Result<(FeatureConfig, Vec<FeaturePatch>), CacheError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(CacheError::Version(version));
    }
    let id = r.read_u8()?;
    let n_bands = r.read_u32::<LE>()? as usize;
    let n_frames = r.read_u32::<LE>()? as usize;
    let hop_length = r.read_u32::<LE>()? as usize;
    let window_size = r.read_u32::<LE>()? as usize;
    let cfg = FeatureConfig {
        id: (id != 0).then_some(id),
        n_bands,
        n_frames,
        hop_length,
        window_size,
        patch_overlap: r.read_f64::<LE>()?,
        sample_rate: r.read_u32::<LE>()?,
        db_floor: r.read_f64::<LE>()?,
    };
    cfg.validate().map_err(|e| CacheError::Corrupt(e.to_string()))?;
    let count = r.read_u64::<LE>()? as usize;
    let size = n_bands * n_frames;

    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = vec![0f32; size];
        r.read_f32_into::<LE>(&mut v)?;
        values.push(v);
    }
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)?;

    let n_sources = r.read_u32::<LE>()? as usize;
    let mut sources = Vec::with_capacity(n_sources);
    for _ in 0..n_sources {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        sources.push(String::from_utf8(buf).map_err(|e| CacheError::Corrupt(e.to_string()))?);
    }

    let mut patches = Vec::with_capacity(count);
    for (v, label) in values.into_iter().zip(labels) {
        let src = r.read_u32::<LE>()? as usize;
        let patch_index = r.read_u32::<LE>()? as usize;
        patches.push(FeaturePatch {
            values: v,
            n_bands,
            n_frames,
            label: SpeciesLabel::from_index(label as usize)
                .ok_or_else(|| CacheError::Corrupt(format!("label index {label} out of range")))?,
            source_id: sources
                .get(src)
                .cloned()
                .ok_or_else(|| CacheError::Corrupt(format!("source index {src} out of range")))?,
            patch_index,
        });
    }
    Ok((cfg, patches))
}
