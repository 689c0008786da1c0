//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!   magic "DSUMCKPT" (8 bytes)
//!   version u32
//!   metadata length u64, then that many bytes of UTF-8 key=value lines
//!   tensor records until end of file:
//!     name length u64, name bytes, rank u64, dims u64 × rank,
//!     values f64 × product(dims)
//!
//! The format is deliberately plain so checkpoints can be parsed from any
//! language.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::Path;

use crate::config::{model_config_from_kv, model_config_to_kv};
use crate::error::{Error, Result};
use crate::kv;
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"DSUMCKPT";
pub const VERSION: u32 = 1;

pub fn save_checkpoint<'a, N: AsRef<str>>(
    path: &Path,
    metadata: &[(String, String)],
    tensors: impl Iterator<Item = (N, &'a Tensor)>,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta = kv::format(metadata);
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    for (name, tensor) in tensors {
        let name = name.as_ref().as_bytes();
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(tensor.shape().len() as u64).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    // Write-then-rename so readers never observe a half-written file.
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut file = File::create(&tmp)?;
        file.write_all(&buf)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug)]
pub struct Checkpoint {
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        kv::get(&self.metadata, key)
    }
}

fn truncated() -> Error {
    Error::format("truncated checkpoint file")
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)
        .map_err(|e| Error::usage(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let mut r = bytes.as_slice();

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != MAGIC {
        return Err(Error::format("not a checkpoint file (bad magic bytes)"));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version).map_err(|_| truncated())?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::format(format!(
            "checkpoint version {version} is not supported (expected {VERSION})"
        )));
    }
    let meta_len = read_u64(&mut r).map_err(|_| truncated())? as usize;
    if meta_len > r.len() {
        return Err(truncated());
    }
    let meta_bytes = &r[..meta_len];
    let metadata = kv::parse(
        std::str::from_utf8(meta_bytes)
            .map_err(|_| Error::format("checkpoint metadata is not UTF-8"))?,
    )?;
    r = &r[meta_len..];

    let mut tensors = Vec::new();
    while !r.is_empty() {
        let name_len = read_u64(&mut r).map_err(|_| truncated())? as usize;
        if name_len > r.len() {
            return Err(truncated());
        }
        let name = std::str::from_utf8(&r[..name_len])
            .map_err(|_| Error::format("tensor name is not UTF-8"))?
            .to_string();
        r = &r[name_len..];
        let rank = read_u64(&mut r).map_err(|_| truncated())? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r).map_err(|_| truncated())? as usize);
        }
        let count: usize = shape.iter().product();
        if count * 8 > r.len() {
            return Err(truncated());
        }
        let mut data = Vec::with_capacity(count);
        for k in 0..count {
            let mut b = [0u8; 8];
            b.copy_from_slice(&r[k * 8..(k + 1) * 8]);
            data.push(f64::from_le_bytes(b));
        }
        r = &r[count * 8..];
        tensors.push((name, Tensor::new(shape, data)));
    }
    Ok(Checkpoint { metadata, tensors })
}

/// Persist a model: its configuration, caller-provided metadata, and every
/// parameter tensor.
pub fn save_model(path: &Path, model: &Model, extra: &[(String, String)]) -> Result<()> {
    let mut metadata = model_config_to_kv(model.config());
    metadata.extend(extra.iter().cloned());
    save_checkpoint(path, &metadata, model.params.iter())
}

/// Rebuild a model from a checkpoint: the architecture comes from the
/// metadata, every tensor is overwritten by name, and the file must cover
/// the parameter set exactly.
pub fn load_model(path: &Path) -> Result<(Model, Checkpoint)> {
    let ckpt = load_checkpoint(path)?;
    let config: ModelConfig = model_config_from_kv(&ckpt.metadata)?;
    config.validate()?;
    let mut model = Model::new(config, 0);
    if ckpt.tensors.len() != model.params.len() {
        return Err(Error::format(format!(
            "checkpoint has {} tensors but the architecture defines {}",
            ckpt.tensors.len(),
            model.params.len()
        )));
    }
    for (name, tensor) in &ckpt.tensors {
        model
            .set_param(name, tensor.clone())
            .map_err(|e| Error::format(format!("checkpoint tensor {name:?}: {e}")))?;
    }
    Ok((model, ckpt))
}
