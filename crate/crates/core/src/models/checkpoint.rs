//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `BMATCKPT`, little-endian `u32` version, little-endian `u32`
//! manifest length, the UTF-8 JSON manifest, then every tensor as little-endian `f64`
//! values in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::net::{Architecture, MultiHeadNet};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"BMATCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    /// Primary-task robust accuracy on the held-out split when the checkpoint was taken.
    pub robust_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub architecture: Architecture,
    pub tensors: Vec<TensorEntry>,
    pub metadata: CheckpointMeta,
}

/// A network together with the bookkeeping of when and why it was saved.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: MultiHeadNet,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arch = self.net.architecture().clone();
        let manifest = Manifest {
            tensors: arch
                .tensor_manifest()
                .into_iter()
                .map(|(name, shape)| TensorEntry { name, shape })
                .collect(),
            architecture: arch,
            metadata: self.meta,
        };
        let json = serde_json::to_vec(&manifest)?;
        let manifest_len = u32::try_from(json.len())
            .map_err(|_| Error::Checkpoint("manifest exceeds 4 GiB".into()))?;
        let tensors = self.net.tensors();
        let payload: usize = tensors.iter().map(|t| t.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&manifest_len.to_le_bytes());
        out.extend_from_slice(&json);
        for t in tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("missing BMATCKPT magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unknown version {version}")));
        }
        let manifest_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < manifest_len {
            return Err(Error::Checkpoint(format!(
                "manifest declares {manifest_len} bytes, only {} present",
                body.len()
            )));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..manifest_len])
            .map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;
        manifest
            .architecture
            .validate()
            .map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;

        let expected = manifest.architecture.tensor_manifest();
        if expected.len() != manifest.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "manifest lists {} tensors, architecture has {}",
                manifest.tensors.len(),
                expected.len()
            )));
        }
        for (k, ((name, shape), entry)) in expected.iter().zip(&manifest.tensors).enumerate() {
            if *name != entry.name || *shape != entry.shape {
                return Err(Error::Checkpoint(format!(
                    "manifest entry {k} is {} {:?}, expected {name} {shape:?}",
                    entry.name, entry.shape
                )));
            }
        }

        let payload = &body[manifest_len..];
        let values: usize = expected
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        if payload.len() != values * 8 {
            return Err(Error::Checkpoint(format!(
                "payload length mismatch: expected {} bytes, found {}",
                values * 8,
                payload.len()
            )));
        }
        let mut chunks = payload.chunks_exact(8);
        let mut tensors = Vec::with_capacity(expected.len());
        for (name, shape) in expected {
            let len = shape.iter().product();
            let data = chunks
                .by_ref()
                .take(len)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(
                Tensor::new(shape, data)
                    .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?,
            );
        }
        Ok(Self {
            net: MultiHeadNet::from_tensors(manifest.architecture, tensors)?,
            meta: manifest.metadata,
        })
    }
}

pub fn save(net: &MultiHeadNet, meta: CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = Checkpoint {
        net: net.clone(),
        meta,
    }
    .to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
