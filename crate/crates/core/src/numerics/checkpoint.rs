//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "NPCKPT01"
//! count   u32
//! count x {
//!     name_len u32, name utf-8 bytes,
//!     ndim u32, dims u64 x ndim,
//!     data f64 x product(dims)
//! }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NPCKPT01";

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("parameter name: {e}")))?
            .to_string();
        let ndim = c.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

/// Overwrites every parameter in `store` from `entries`; names and shapes
/// must match exactly.
pub fn apply(store: &mut ParamStore, entries: Vec<(String, Tensor)>) -> Result<()> {
    if entries.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, value) in entries {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = store.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: shape {:?} in checkpoint, {:?} in model",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
    }
    Ok(())
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    apply(store, decode(&bytes)?)
}
