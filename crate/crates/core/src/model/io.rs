//! Binary weight container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "RVRCNNW\0"
//! version      u32
//! config_len   u64, then that many bytes of canonical JSON (ModelConfig)
//! step         u64
//! n_tensors    u32
//! per tensor:  u32 name_len, name (UTF-8), u32 ndim, ndim x u64 dims,
//!              prod(dims) x f64
//! crc32        u32 over every preceding byte
//! ```
//!
//! Tensors are the network parameters followed by the Adam moments
//! (`adam.m.<name>`, `adam.v.<name>`). Loss history is not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, Network, Result, Tensor, TrainState};

pub const MAGIC: &[u8; 8] = b"RVRCNNW\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_weights<W: Write>(state: &TrainState, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(state.config()).map_err(|e| ModelError::Format(e.to_string()))?;
    buf.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    buf.extend_from_slice(&cfg);
    buf.extend_from_slice(&state.step.to_le_bytes());

    let names = state.network.param_names();
    let params = state.network.params();
    let mut records: Vec<(String, &Tensor)> = names.iter().cloned().zip(params).collect();
    records.extend(names.iter().map(|n| format!("adam.m.{n}")).zip(&state.m));
    records.extend(names.iter().map(|n| format!("adam.v.{n}")).zip(&state.v));
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, t) in records {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| ModelError::Format("length overflow".into()))
    }
}

pub fn read_weights<R: Read>(mut r: R) -> Result<TrainState> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < MAGIC.len() + 4 + 4 {
        return Err(ModelError::ChecksumMismatch);
    }
    if &buf[..MAGIC.len()] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(ModelError::ChecksumMismatch);
    }
    let mut c = Cursor {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let cfg_len = c.len()?;
    let config: ModelConfig =
        serde_json::from_slice(c.take(cfg_len)?).map_err(|e| ModelError::Format(e.to_string()))?;
    let step = c.u64()?;
    let n = c.u32()? as usize;
    let mut tensors = std::collections::BTreeMap::new();
    for _ in 0..n {
        let nl = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(nl)?)
            .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let nd = c.u32()? as usize;
        let mut shape = Vec::with_capacity(nd.min(8));
        for _ in 0..nd {
            shape.push(c.len()?);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| ModelError::Format("tensor size overflow".into()))?;
        let bytes = c.take(
            count
                .checked_mul(8)
                .ok_or_else(|| ModelError::Format("tensor size overflow".into()))?,
        )?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    if c.pos != body.len() {
        return Err(ModelError::Format("trailing bytes after tensors".into()));
    }

    let mut net = Network::new(&config)?;
    let names = net.param_names();
    let mut fetch = |name: &str, like: &Tensor| -> Result<Tensor> {
        let t = tensors
            .remove(name)
            .ok_or_else(|| ModelError::Format(format!("missing tensor `{name}`")))?;
        if t.shape() != like.shape() {
            return Err(ModelError::ShapeMismatch(format!(
                "tensor `{name}` has shape {:?}, config implies {:?}",
                t.shape(),
                like.shape()
            )));
        }
        Ok(t)
    };
    let mut m = Vec::with_capacity(names.len());
    let mut v = Vec::with_capacity(names.len());
    for (name, p) in names.iter().zip(net.params_mut()) {
        *p = fetch(name, p)?;
        m.push(fetch(&format!("adam.m.{name}"), p)?);
        v.push(fetch(&format!("adam.v.{name}"), p)?);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(ModelError::Format(format!("unexpected tensor `{extra}`")));
    }
    Ok(TrainState {
        network: net,
        m,
        v,
        step,
        history: Vec::new(),
    })
}

pub fn save_weights(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<TrainState> {
    read_weights(BufReader::new(File::open(path)?))
}
