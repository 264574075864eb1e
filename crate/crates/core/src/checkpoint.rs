//! Versioned binary checkpoints.
//!
//! Byte layout (all integers little-endian, floats as f64 LE bits):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FQN1"
//! 4       1     format version (currently 1)
//! 5       8     config hash (FNV-1a of the spec's canonical string)
//! 13      2     arch name length L
//! 15      L     arch name (UTF-8)
//! ..      8     seed
//! ..      8     completed epochs
//! ..      8     global step
//! ..      4     tensor count T
//! then T records:
//!   2   name length K
//!   K   tensor name (UTF-8)
//!   8   element count E
//!   8E  f64 values
//! ```
//!
//! Tensors hold the canonical weight forms (KxK time kernels for fixated
//! multiply layers, full spectra for free ones), dense weights, batch-norm
//! state, and the optimizer accumulators. Derived spectral caches are never
//! written.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Network, NetworkSpec};

const MAGIC: &[u8; 4] = b"FQN1";
const VERSION: u8 = 1;

pub fn config_hash(spec: &NetworkSpec) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in spec.canonical_string().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub arch: String,
    pub seed: u64,
    pub epochs: u64,
    pub step: u64,
}

pub fn save(network: &mut Network, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&config_hash(&network.spec).to_le_bytes());
    let name = meta.arch.as_bytes();
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name);
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    buf.extend_from_slice(&meta.epochs.to_le_bytes());
    buf.extend_from_slice(&meta.step.to_le_bytes());

    let state = network.export_state();
    buf.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (tensor_name, values) in &state {
        let nb = tensor_name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 in name".into()))
    }
}

/// Read the header only (to pick the architecture before building a network).
pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    let mut r = Reader { data: &data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let _hash = r.u64()?;
    let arch = r.string()?;
    let seed = r.u64()?;
    let epochs = r.u64()?;
    let step = r.u64()?;
    Ok(CheckpointMeta {
        arch,
        seed,
        epochs,
        step,
    })
}

/// Load a checkpoint into an already-built network of the matching spec.
pub fn load(network: &mut Network, path: &Path) -> Result<CheckpointMeta> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    let mut r = Reader { data: &data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hash = r.u64()?;
    if hash != config_hash(&network.spec) {
        return Err(Error::Checkpoint(
            "config hash mismatch: checkpoint was written for a different architecture/config"
                .into(),
        ));
    }
    let arch = r.string()?;
    let seed = r.u64()?;
    let epochs = r.u64()?;
    let step = r.u64()?;

    let count = r.u32()? as usize;
    let mut state = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let len = r.u64()? as usize;
        let bytes = r.take(len * 8)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        state.push((name, values));
    }
    network.import_state(&state)?;
    Ok(CheckpointMeta {
        arch,
        seed,
        epochs,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_network, mnist_cemnet};

    #[test]
    fn save_load_roundtrip_preserves_state() {
        let spec = mnist_cemnet();
        let mut net = build_network(&spec, 42).unwrap();
        let dir = std::env::temp_dir().join("freqnet-ckpt-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        let meta = CheckpointMeta {
            arch: spec.name.clone(),
            seed: 42,
            epochs: 3,
            step: 300,
        };
        save(&mut net, &meta, &path).unwrap();

        let peek = read_meta(&path).unwrap();
        assert_eq!(peek.arch, "mnist-cemnet");
        assert_eq!(peek.step, 300);

        let mut other = build_network(&spec, 999).unwrap();
        assert_ne!(net.param_vector(), other.param_vector());
        load(&mut other, &path).unwrap();
        assert_eq!(net.param_vector(), other.param_vector());
        assert_eq!(net.export_state(), other.export_state());
    }

    #[test]
    fn load_rejects_mismatched_arch() {
        let mut net = build_network(&mnist_cemnet(), 1).unwrap();
        let dir = std::env::temp_dir().join("freqnet-ckpt-test2");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        let meta = CheckpointMeta {
            arch: "mnist-cemnet".into(),
            seed: 1,
            epochs: 0,
            step: 0,
        };
        save(&mut net, &meta, &path).unwrap();

        let mut different = mnist_cemnet();
        different.drop_rate = 0.25;
        let mut other = build_network(&different, 1).unwrap();
        assert!(load(&mut other, &path).is_err());
    }

    #[test]
    fn corrupt_file_rejected() {
        let dir = std::env::temp_dir().join("freqnet-ckpt-test3");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        fs::write(&path, b"NOPE").unwrap();
        let mut net = build_network(&mnist_cemnet(), 1).unwrap();
        assert!(load(&mut net, &path).is_err());
    }
}
