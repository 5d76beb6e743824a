//! Versioned binary checkpoint: magic, JSON manifest, then each tensor as a
//! named block of little-endian f64 in row-major order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ModelDims, ModelParams};

const MAGIC: &[u8; 8] = b"SCRMCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Everything needed to validate a checkpoint against a run before using it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub n_items: usize,
    pub d0: usize,
    pub d1: usize,
    pub k_m: usize,
    pub wgat_layers: usize,
    pub seed: u64,
    pub variant: String,
    pub graph_hash_sub: String,
    pub graph_hash_comp: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

/// Hex SHA-256, used to fingerprint graph dumps into the manifest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn save(
    params: &ModelParams,
    seed: u64,
    variant: &str,
    graph_hash_sub: &str,
    graph_hash_comp: &str,
) -> Vec<u8> {
    let tensors: Vec<TensorEntry> = params
        .visit()
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.clone(),
            shape: t.shape(),
        })
        .collect();
    let manifest = Manifest {
        version: VERSION,
        n_items: params.dims.n_items,
        d0: params.dims.d0,
        d1: params.dims.d1,
        k_m: params.dims.k_m,
        wgat_layers: params.dims.wgat_layers,
        seed,
        variant: variant.to_string(),
        graph_hash_sub: graph_hash_sub.to_string(),
        graph_hash_comp: graph_hash_comp.to_string(),
        tensors,
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    for (_, t) in params.visit() {
        for &x in t.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn load(bytes: &[u8]) -> Result<(ModelParams, Manifest), CheckpointError> {
    let corrupt = |msg: &str| CheckpointError::Corrupt(msg.to_string());
    if bytes.len() < MAGIC.len() + 12 {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::Mismatch(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body_start = 20 + mlen;
    if bytes.len() < body_start {
        return Err(corrupt("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[20..body_start])
        .map_err(|e| corrupt(&format!("manifest JSON: {e}")))?;

    let dims = ModelDims {
        n_items: manifest.n_items,
        d0: manifest.d0,
        d1: manifest.d1,
        k_m: manifest.k_m,
        wgat_layers: manifest.wgat_layers,
    };
    let mut params = ModelParams::zeros(dims)
        .map_err(|e| CheckpointError::Mismatch(format!("manifest dims: {e}")))?;

    let expected: Vec<(String, Vec<usize>)> = params
        .visit()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape()))
        .collect();
    if manifest.tensors.len() != expected.len() {
        return Err(CheckpointError::Mismatch(format!(
            "manifest lists {} tensors, model has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
        if &entry.name != name || &entry.shape != shape {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {} shape {:?}, expected {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
    }

    let mut offset = body_start;
    for (name, t) in params.visit_mut() {
        let slice = t.into_slice();
        let nbytes = slice.len() * 8;
        if bytes.len() < offset + nbytes {
            return Err(CheckpointError::Corrupt(format!(
                "tensor block {name} truncated"
            )));
        }
        for (k, x) in slice.iter_mut().enumerate() {
            let at = offset + k * 8;
            *x = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        }
        offset += nbytes;
    }
    if offset != bytes.len() {
        return Err(corrupt("trailing bytes after tensor blocks"));
    }
    Ok((params, manifest))
}
