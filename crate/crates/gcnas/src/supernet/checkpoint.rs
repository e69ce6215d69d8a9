//! Checkpoint file format.
//!
//! Little-endian binary: magic `GCNASCK1`, a u32 manifest length followed
//! by the UTF-8 TOML manifest (config + input dimension), a u32 tensor
//! count, then per tensor: length-prefixed key, u8 rank, u32 dims, f64
//! data. Tensors appear in the supernet's visitation order, keyed by layer,
//! module index, and tensor name. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::supernet::{Supernet, SupernetConfig};

const MAGIC_PREFIX: &[u8; 7] = b"GCNASCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    d_in: usize,
    config: SupernetConfig,
}

pub fn save_checkpoint(net: &Supernet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_PREFIX)?;
    w.write_all(&[b'0' + FORMAT_VERSION as u8])?;

    let manifest = toml::to_string(&CheckpointManifest {
        format_version: FORMAT_VERSION,
        d_in: net.d_in,
        config: net.config.clone(),
    })
    .map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
    w.write_all(&(manifest.len() as u32).to_le_bytes())?;
    w.write_all(manifest.as_bytes())?;

    let mut entries: Vec<(String, &Tensor)> = Vec::new();
    net.visit_tensors(&mut |key, t| entries.push((key, t)));
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (key, tensor) in entries {
        w.write_all(&(key.len() as u16).to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        w.write_all(&[tensor.shape().len() as u8])?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Supernet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for checkpoint magic".into()))?;
    if &magic[..7] != MAGIC_PREFIX {
        return Err(Error::Format("not a GCNASCK checkpoint".into()));
    }
    if magic[7] != b'0' + FORMAT_VERSION as u8 {
        return Err(Error::VersionMismatch {
            found: format!("GCNASCK{}", magic[7] as char),
            expected: format!("GCNASCK{FORMAT_VERSION}"),
        });
    }

    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf).map_err(|_| Error::Format("truncated manifest length".into()))?;
    let mut manifest_bytes = vec![0u8; u32::from_le_bytes(len_buf) as usize];
    r.read_exact(&mut manifest_bytes).map_err(|_| Error::Format("truncated manifest".into()))?;
    let manifest: CheckpointManifest = toml::from_str(
        std::str::from_utf8(&manifest_bytes)
            .map_err(|e| Error::Format(format!("manifest not UTF-8: {e}")))?,
    )
    .map_err(|e| Error::Format(format!("manifest parse: {e}")))?;

    let mut net = Supernet::init(&manifest.config, manifest.d_in)?;

    r.read_exact(&mut len_buf).map_err(|_| Error::Format("truncated tensor count".into()))?;
    let count = u32::from_le_bytes(len_buf) as usize;

    let mut expected_keys = Vec::new();
    net.visit_tensors(&mut |key, _| expected_keys.push(key));
    if count != expected_keys.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} tensors, structure expects {}",
            expected_keys.len()
        )));
    }

    let mut loaded: Vec<Tensor> = Vec::with_capacity(count);
    for expected_key in &expected_keys {
        let mut klen = [0u8; 2];
        r.read_exact(&mut klen).map_err(|_| Error::Format("truncated tensor key".into()))?;
        let mut key = vec![0u8; u16::from_le_bytes(klen) as usize];
        r.read_exact(&mut key).map_err(|_| Error::Format("truncated tensor key".into()))?;
        let key = String::from_utf8(key).map_err(|e| Error::Format(format!("key UTF-8: {e}")))?;
        if &key != expected_key {
            return Err(Error::Format(format!(
                "tensor key order mismatch: file has {key}, expected {expected_key}"
            )));
        }
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank).map_err(|_| Error::Format("truncated tensor rank".into()))?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            r.read_exact(&mut len_buf).map_err(|_| Error::Format("truncated dims".into()))?;
            shape.push(u32::from_le_bytes(len_buf) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut fb = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut fb)
                .map_err(|_| Error::Format(format!("truncated data for {key}")))?;
            data.push(f64::from_le_bytes(fb));
        }
        loaded.push(Tensor::new(shape, data)?);
    }

    for (slot, tensor) in net.collect_tensors_mut().into_iter().zip(loaded) {
        if slot.shape() != tensor.shape() {
            return Err(Error::Format(format!(
                "tensor shape mismatch: file {:?}, structure {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let config = SupernetConfig { layers: 3, hidden_dim: 6, ..SupernetConfig::default() };
        let net = Supernet::init(&config, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for (a, b) in net.collect_tensors().iter().zip(loaded.collect_tensors()) {
            assert!(a.bit_eq(b));
        }
        // Saving the loaded copy reproduces identical bytes.
        let path2 = dir.path().join("net2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn version_mismatch_is_reported() {
        let config = SupernetConfig { layers: 2, hidden_dim: 4, ..SupernetConfig::default() };
        let net = Supernet::init(&config, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[7] = b'7';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch { .. })));
    }
}
