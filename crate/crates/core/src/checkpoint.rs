//! Binary model checkpoints.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! ```text
//! magic        8 bytes  "LPCFMNET"
//! version      u32      1
//! activation   u32      0 = tanh, 1 = identity
//! data_dim     u32
//! time_width   u32
//! cond_width   u32
//! n_sizes      u32      number of layer sizes (layers + 1)
//! sizes        u32 × n_sizes
//! per layer    weights (outputs × inputs, row-major) then bias
//! meta_len     u32
//! metadata     meta_len bytes of UTF-8 `key=value` lines
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, Layer, Mlp};

pub const MAGIC: &[u8; 8] = b"LPCFMNET";
pub const VERSION: u32 = 1;

/// A model plus free-form string metadata (task, mode, lambda, seed…).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: Mlp) -> Self {
        Self {
            model,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.model;
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION)?;
        put_u32(
            &mut w,
            match m.activation() {
                Activation::Tanh => 0,
                Activation::Identity => 1,
            },
        )?;
        put_u32(&mut w, m.data_dim() as u32)?;
        put_u32(&mut w, m.time_width() as u32)?;
        put_u32(&mut w, m.cond_width() as u32)?;
        let sizes = m.layer_sizes();
        put_u32(&mut w, sizes.len() as u32)?;
        for s in sizes {
            put_u32(&mut w, s as u32)?;
        }
        for layer in m.layers() {
            for x in layer.weights.iter().chain(&layer.bias) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Checkpoint(format!(
                    "metadata entry `{k}` is not a single key=value line"
                )));
            }
            meta.push_str(&format!("{k}={v}\n"));
        }
        put_u32(&mut w, meta.len() as u32)?;
        w.write_all(meta.as_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let activation = match get_u32(&mut r)? {
            0 => Activation::Tanh,
            1 => Activation::Identity,
            other => {
                return Err(Error::Checkpoint(format!(
                    "unknown activation code {other}"
                )))
            }
        };
        let data_dim = get_u32(&mut r)? as usize;
        let time_width = get_u32(&mut r)? as usize;
        let cond_width = get_u32(&mut r)? as usize;
        let n_sizes = get_u32(&mut r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {n_sizes}"
            )));
        }
        let sizes = (0..n_sizes)
            .map(|_| get_u32(&mut r).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(n_sizes - 1);
        for pair in sizes.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let weights = (0..inputs * outputs)
                .map(|_| get_f64(&mut r))
                .collect::<Result<Vec<_>>>()?;
            let bias = (0..outputs)
                .map(|_| get_f64(&mut r))
                .collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        let model = Mlp::from_layers(layers, activation, data_dim, time_width, cond_width)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let meta_len = get_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta = String::from_utf8(meta)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let metadata = meta
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Ok(Self { model, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read(bytes.as_slice())
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_bits_and_metadata() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = Mlp::new(2, 4, 3, &[7, 5], &mut rng).unwrap();
        let ck = Checkpoint::new(model)
            .with_meta("task", "2d")
            .with_meta("lambda", 0.05);
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("lambda"), Some("0.05"));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Checkpoint::read(&b"NOTAMODEL..."[..]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ck = Checkpoint::new(Mlp::new(2, 0, 0, &[3], &mut rng).unwrap());
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        buf.truncate(buf.len() - 12);
        assert!(Checkpoint::read(buf.as_slice()).is_err());
    }
}
