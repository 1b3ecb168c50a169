//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "RCKPT001"
//! desc_len     u32      length of the descriptor in bytes
//! descriptor   UTF-8    free-form architecture description (key=value lines)
//! n_consts     u32
//!   name_len   u16, name UTF-8, value f64           (repeated n_consts times)
//! n_tensors    u32
//!   name_len   u16, name UTF-8
//!   rank       u8, dims u32 × rank
//!   data       f64 × product(dims)                   (repeated n_tensors times)
//! ```
//!
//! No trailing bytes are allowed.

use crate::{Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RCKPT001";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub constants: Vec<(String, f64)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::InvalidCheckpoint(msg.into())
}

fn put_name(out: &mut Vec<u8>, name: &str) -> Result<(), TensorError> {
    let len = u16::try_from(name.len()).map_err(|_| bad(format!("name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, TensorError> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let desc_len = u32::try_from(self.descriptor.len()).map_err(|_| bad("descriptor too long"))?;
        out.extend_from_slice(&desc_len.to_le_bytes());
        out.extend_from_slice(self.descriptor.as_bytes());

        out.extend_from_slice(&(self.constants.len() as u32).to_le_bytes());
        for (name, value) in &self.constants {
            put_name(&mut out, name)?;
            out.extend_from_slice(&value.to_le_bytes());
        }

        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_name(&mut out, name)?;
            let rank = u8::try_from(t.shape().len()).map_err(|_| bad("rank above 255"))?;
            out.push(rank);
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| bad("dimension above u32"))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let desc_len = r.u32()? as usize;
        let descriptor = String::from_utf8(r.take(desc_len)?.to_vec())
            .map_err(|_| bad("descriptor is not UTF-8"))?;

        let n_consts = r.u32()? as usize;
        let mut constants = Vec::new();
        for _ in 0..n_consts {
            let name = r.name()?;
            constants.push((name, r.f64()?));
        }

        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = r.name()?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| bad("tensor size overflows"))?;
            if n.checked_mul(8).is_none_or(|b| b > r.remaining()) {
                return Err(bad(format!("tensor '{name}' truncated")));
            }
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(bad(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            descriptor,
            constants,
            tensors,
        })
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        if n > self.remaining() {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TensorError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, TensorError> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| bad("name is not UTF-8"))
    }
}
