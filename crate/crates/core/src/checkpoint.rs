//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `NAWCKPT\0`, `u32` version, `u64` length and
//! JSON bytes of the [`ModelConfig`], `u32` parameter count, then per parameter
//! `u32` name length, UTF-8 name, `u32` rank, `u64` dims, `f64` values.
//! Values are stored bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig};
use crate::ndgrad::Tensor;

const MAGIC: &[u8; 8] = b"NAWCKPT\0";
const VERSION: u32 = 1;

pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config()).map_err(|e| Error::format("model config", e))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, t) in model.param_names().iter().zip(model.params()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("unexpected end of file reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.err("not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u64("config length")? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(len, "config")?).map_err(|e| r.err(format!("config: {e}")))?;
    let count = r.u32("parameter count")?;
    let mut params = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let n = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| r.err("parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank).map(|_| r.u64("dim").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel.checked_mul(8).ok_or_else(|| r.err("tensor too large"))?, "values")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(&shape, data).map_err(|e| r.err(format!("parameter {name}: {e}")))?;
        params.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after last parameter"));
    }
    Model::from_parts(config, params)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
