//! Model checkpoint files.
//!
//! ```text
//! magic   "WBCK"
//! version u32 LE
//! hlen    u32 LE, followed by hlen bytes of JSON header
//! params  f32 LE, every tensor in declaration order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::Network;
use super::{Shape, Tensor};
use crate::features::FeatureConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Architecture name, e.g. `binary` or `multiclass`.
    pub architecture: String,
    pub feature_config: Option<FeatureConfig>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    /// Output unit names in order.
    pub classes: Vec<String>,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerSpec>,
    input_shape: Shape,
    param_shapes: Vec<Vec<usize>>,
    metadata: ModelMetadata,
}

/// A trained network plus what is needed to use it again.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub metadata: ModelMetadata,
}

impl TrainedModel {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header {
            layers: self.network.specs().to_vec(),
            input_shape: self.network.input_shape(),
            param_shapes: self.network.params().iter().map(|p| p.shape().to_vec()).collect(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u32::<LittleEndian>(json.len() as u32)?;
        w.write_all(&json)?;
        for p in self.network.params() {
            for &v in p.data() {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let io = |e: std::io::Error| CheckpointError::Corrupt(e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut json = vec![0u8; hlen];
        r.read_exact(&mut json).map_err(io)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let mut network = Network::<f32>::new(header.input_shape, &header.layers).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let expected: Vec<Vec<usize>> = network.params().iter().map(|p| p.shape().to_vec()).collect();
        if expected != header.param_shapes {
            return Err(CheckpointError::Corrupt("parameter shapes do not match the layer list".into()));
        }
        let mut params = Vec::with_capacity(expected.len());
        for shape in &expected {
            let n: usize = shape.iter().product();
            let mut data = vec![0f32; n];
            r.read_f32_into::<LittleEndian>(&mut data).map_err(io)?;
            params.push(Tensor::from_vec(shape, data));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        network.set_params(params).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        Ok(TrainedModel {
            network,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let err = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(err)?;
        self.write_to(BufWriter::new(file)).map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = File::open(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_from(BufReader::new(file))
    }
}
