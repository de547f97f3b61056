//! Versioned binary checkpoints: magic, version, JSON header, LE blob.
//!
//! ```text
//! "FEASTCKP" | u32 version | u64 header_len | header JSON | tensor bytes
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EpochRecord;
use crate::block::Parameters;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelSpec};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"FEASTCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Model, parameters and the training position needed to resume.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub spec: ModelSpec,
    pub params: ModelParams<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub rng_seed: u64,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    spec: ModelSpec,
    epoch: usize,
    rng_seed: u64,
    history: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
    blob_len: usize,
}

fn tensor_names<T: Scalar>(params: &ModelParams<T>) -> Vec<String> {
    params
        .layers
        .iter()
        .enumerate()
        .flat_map(|(k, l)| l.blocks().into_iter().map(move |b| format!("layers.{k}.{}", b.name)))
        .collect()
}

/// Serializes a checkpoint to bytes.
pub fn write_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let mut blob = Vec::with_capacity(ckpt.params.num_parameters() * T::BYTES);
    let mut tensors = Vec::new();
    for (name, b) in tensor_names(&ckpt.params).into_iter().zip(ckpt.params.blocks()) {
        let offset = blob.len();
        for &v in b.values {
            v.write_le(&mut blob);
        }
        tensors.push(TensorEntry { name, shape: b.shape.clone(), offset, len: b.values.len() });
    }
    let header = Header {
        dtype: T::DTYPE.to_string(),
        spec: ckpt.spec.clone(),
        epoch: ckpt.epoch,
        rng_seed: ckpt.rng_seed,
        history: ckpt.history.clone(),
        tensors,
        blob_len: blob.len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Parses checkpoint bytes, validating header, offsets and blob length.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let corrupt = |msg: &str| Error::CorruptCheckpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if header_len > body.len() {
        return Err(corrupt("header runs past end of file"));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(&format!("header: {e}")))?;
    if header.dtype != T::DTYPE {
        return Err(corrupt(&format!("stored dtype {} but {} requested", header.dtype, T::DTYPE)));
    }
    let blob = &body[header_len..];
    if blob.len() != header.blob_len {
        return Err(corrupt(&format!("blob is {} bytes, header says {}", blob.len(), header.blob_len)));
    }

    let mut params = ModelParams::<T>::zeros(&header.spec).map_err(|e| corrupt(&format!("spec: {e}")))?;
    let names = tensor_names(&params);
    let mut blocks = params.blocks_mut();
    if blocks.len() != header.tensors.len() {
        return Err(corrupt("tensor count differs from the model spec"));
    }
    for ((b, name), t) in blocks.iter_mut().zip(&names).zip(&header.tensors) {
        if &t.name != name || t.shape != b.shape || t.len != b.values.len() {
            return Err(corrupt(&format!("tensor {} does not match the model spec", t.name)));
        }
        let end = t.offset.checked_add(t.len * T::BYTES).ok_or_else(|| corrupt("offset overflow"))?;
        if end > blob.len() {
            return Err(corrupt(&format!("tensor {} runs past the blob", t.name)));
        }
        for (v, chunk) in b.values.iter_mut().zip(blob[t.offset..end].chunks_exact(T::BYTES)) {
            *v = T::read_le(chunk);
        }
    }
    drop(blocks);
    Ok(Checkpoint { spec: header.spec, params, epoch: header.epoch, rng_seed: header.rng_seed, history: header.history })
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_checkpoint(ckpt)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{single_scale_spec, ArchConfig};

    fn sample() -> Checkpoint<f64> {
        let arch = ArchConfig { m: 2, translation_invariant: false, width_scale: 0.25, ..ArchConfig::default() };
        let spec = single_scale_spec(3, 5, &arch).unwrap();
        let params = ModelParams::init(&spec, 11).unwrap();
        // values that need every digit to round-trip through the JSON header
        let history = vec![
            EpochRecord { epoch: 1, loss: 4.770764485755809, accuracy: 1.0 / 3.0 },
            EpochRecord { epoch: 2, loss: 0.1 + 0.2, accuracy: 4.0 / 162.0 },
        ];
        Checkpoint { spec, params, epoch: 1, rng_seed: 99, history }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = write_checkpoint(&c).unwrap();
        let back = read_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_blob_is_corrupt() {
        let bytes = write_checkpoint(&sample()).unwrap();
        let err = read_checkpoint::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::CorruptCheckpoint(_)), "{err}");
        assert!(matches!(read_checkpoint::<f64>(&bytes[..10]), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn version_and_dtype_checked() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        assert!(matches!(read_checkpoint::<f32>(&bytes), Err(Error::CorruptCheckpoint(_))));
        bytes[8] = 9;
        assert!(matches!(read_checkpoint::<f64>(&bytes), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = sample();
        save_checkpoint(&path, &c).unwrap();
        assert_eq!(load_checkpoint::<f64>(&path).unwrap(), c);
        assert!(!dir.path().join("m.ckpt.tmp").exists());
    }
}
