//! Parameter checkpoint format: a JSON manifest (name, shape, dtype, byte
//! offset per entry) followed by one flat little-endian f64 blob.
//!
//! Layout: `MAGIC | u64 LE manifest length | manifest JSON | blob`.
//! Writes go to a temp file in the same directory and are renamed into
//! place, so a crashed run never leaves a partial checkpoint behind.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::Array;
use super::optim::ParamMap;
use super::NumericsError;

pub const CHECKPOINT_VERSION: &str = "madnet-ckpt-v1";
const MAGIC: &[u8; 8] = b"MADNETCK";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Serialized model configuration, so a checkpoint is self-describing.
    #[serde(default)]
    pub model_config: Option<serde_json::Value>,
}

impl CheckpointMeta {
    pub fn new(config_hash: &str, seed: u64, model_config: Option<serde_json::Value>) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            model_config,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    config_hash: String,
    seed: u64,
    #[serde(default)]
    model_config: Option<serde_json::Value>,
    entries: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    dtype: String,
    offset: u64,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ParamMap,
    meta: &CheckpointMeta,
) -> Result<(), NumericsError> {
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (name, arr) in params {
        entries.push(Entry {
            name: name.clone(),
            shape: [arr.rows(), arr.cols()],
            dtype: "f64".to_string(),
            offset,
        });
        offset += (arr.len() * 8) as u64;
    }
    let manifest = Manifest {
        version: meta.version.clone(),
        config_hash: meta.config_hash.clone(),
        seed: meta.seed,
        model_config: meta.model_config.clone(),
        entries,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)
        .map_err(|e| NumericsError::Checkpoint(format!("manifest encode: {e}")))?;

    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| NumericsError::Checkpoint(format!("create {}: {e}", tmp.display())))?;
        f.write_all(MAGIC).map_err(io_err)?;
        f.write_all(&(manifest_bytes.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        f.write_all(&manifest_bytes).map_err(io_err)?;
        let mut blob = Vec::with_capacity(offset as usize);
        for arr in params.values() {
            for &x in arr.data() {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        f.write_all(&blob).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    fs::rename(&tmp, path)
        .map_err(|e| NumericsError::Checkpoint(format!("rename into {}: {e}", path.display())))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamMap, CheckpointMeta), NumericsError> {
    let mut f = fs::File::open(path)
        .map_err(|e| NumericsError::Checkpoint(format!("open {}: {e}", path.display())))?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(NumericsError::Checkpoint(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes).map_err(io_err)?;
    let mlen = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; mlen];
    f.read_exact(&mut manifest_bytes).map_err(io_err)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| NumericsError::Checkpoint(format!("manifest decode: {e}")))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(NumericsError::Checkpoint(format!(
            "unsupported checkpoint version {:?} (expected {CHECKPOINT_VERSION:?})",
            manifest.version
        )));
    }
    let mut blob = Vec::new();
    f.read_to_end(&mut blob).map_err(io_err)?;

    let mut params = ParamMap::new();
    for entry in &manifest.entries {
        if entry.dtype != "f64" {
            return Err(NumericsError::Checkpoint(format!(
                "entry {} has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let count = entry.shape[0] * entry.shape[1];
        let start = entry.offset as usize;
        let end = start + count * 8;
        if end > blob.len() {
            return Err(NumericsError::Checkpoint(format!(
                "entry {} overruns blob ({} > {})",
                entry.name,
                end,
                blob.len()
            )));
        }
        let mut data = Vec::with_capacity(count);
        for chunk in blob[start..end].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        params.insert(
            entry.name.clone(),
            Array::from_vec(entry.shape[0], entry.shape[1], data),
        );
    }
    let meta = CheckpointMeta {
        version: manifest.version,
        config_hash: manifest.config_hash,
        seed: manifest.seed,
        model_config: manifest.model_config,
    };
    Ok((params, meta))
}

fn io_err(e: std::io::Error) -> NumericsError {
    NumericsError::Checkpoint(format!("io: {e}"))
}
