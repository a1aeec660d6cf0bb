//! Binary model files.
//!
//! Layout (little-endian): the 8-byte magic `TVSRNET1`, then for each of the
//! three layers four `u32` dims `(n_out, n_in, kh, kw)`, `n_out*n_in*kh*kw`
//! `f64` weights (row-major) and `n_out` `f64` biases. Nothing follows.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ConvLayer, LayerSpec, SrNetwork};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TVSRNET1";
const MAGIC_STEM: &[u8; 7] = b"TVSRNET";

pub fn write_model(net: &SrNetwork) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 48 + 8 * net.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    for l in &net.layers {
        let s = l.spec;
        for d in [s.n_out, s.n_in, s.kernel, s.kernel] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CorruptModel(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::CorruptModel(format!("{what} count overflows")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_model(bytes: &[u8]) -> Result<SrNetwork> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..7] != MAGIC_STEM {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(Error::VersionMismatch(
            String::from_utf8_lossy(&bytes[..8]).into_owned(),
        ));
    }
    let mut cur = Cursor { bytes, pos: 8 };
    let mut layers = Vec::with_capacity(3);
    for i in 1..=3 {
        let n_out = cur.u32("dims")?;
        let n_in = cur.u32("dims")?;
        let kh = cur.u32("dims")?;
        let kw = cur.u32("dims")?;
        if kh != kw {
            return Err(Error::CorruptModel(format!(
                "layer {i}: non-square kernel {kh}x{kw}"
            )));
        }
        let spec = LayerSpec::new(n_in, n_out, kh);
        let weights = cur.f64s(
            n_out
                .checked_mul(n_in)
                .and_then(|v| v.checked_mul(kh * kw))
                .ok_or_else(|| Error::CorruptModel(format!("layer {i}: dims overflow")))?,
            "weights",
        )?;
        let biases = cur.f64s(n_out, "biases")?;
        layers.push(ConvLayer {
            spec,
            weights,
            biases,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::CorruptModel(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - cur.pos
        )));
    }
    let layers: [ConvLayer; 3] = layers.try_into().unwrap();
    SrNetwork::from_layers(layers).map_err(|e| Error::CorruptModel(e.to_string()))
}

pub fn save_model(net: &SrNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&write_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SrNetwork> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}
