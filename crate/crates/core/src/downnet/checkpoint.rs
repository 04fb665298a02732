//! PSRN checkpoint files: `"PSRN"`, u32 version, u32 layer count, four u32
//! per layer `(out, in, kh, kw)`, u64 parameter count, then the parameters
//! as little-endian f64 in declaration order.

use std::fs;
use std::path::Path;

use super::params::{LayerShape, NetParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PSRN";
pub const VERSION: u32 = 1;

pub fn encode(params: &NetParams) -> Vec<u8> {
    let layers = params.layers();
    let mut out = Vec::with_capacity(20 + 16 * layers.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        for d in [l.out_ch, l.in_ch, l.kh, l.kw] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::LengthMismatch {
                path: self.path.to_path_buf(),
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
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

pub fn decode(bytes: &[u8], path: &Path) -> Result<NetParams> {
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(format("bad magic, expected PSRN".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let d = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        layers.push(LayerShape {
            out_ch: d[0] as usize,
            in_ch: d[1] as usize,
            kh: d[2] as usize,
            kw: d[3] as usize,
        });
    }
    let count = r.u64()? as usize;
    let declared: usize = layers.iter().map(LayerShape::param_count).sum();
    if count != declared {
        return Err(format(format!(
            "header declares {count} parameters but layers need {declared}"
        )));
    }
    let expected = r.pos + 8 * count;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    NetParams::new(layers, values).map_err(|e| format(e.to_string()))
}

pub fn save_checkpoint(params: &NetParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
