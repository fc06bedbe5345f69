//! Model file format. All integers and values are little-endian.
//!
//! ```text
//! magic        8 bytes   "KNITPAD\0"
//! version      u32       1
//! dtype        u8        1 = f32, 2 = f64
//! spec length  u32       followed by the ModelSpec as UTF-8 JSON
//! tensor count u32
//! per tensor:
//!   name length u16, name (UTF-8)
//!   rank u8, dims u32 x rank
//!   values      dtype x product(dims), row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ModelParams, ModelSpec, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"KNITPAD\0";
pub const FORMAT_VERSION: u32 = 1;

impl<T: Real> ModelParams<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::DTYPE);
        let spec = serde_json::to_vec(&self.spec).expect("spec serializes");
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec);
        let entries = self.entries();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for e in entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.tensor.shape().len() as u8);
            for &d in e.tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in e.tensor.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Decodes a model file, converting stored values to `T`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("version {version}, expected {FORMAT_VERSION}")));
        }
        let dtype = r.take(1)?[0];
        let width = match dtype {
            1 => 4,
            2 => 8,
            d => return Err(Error::Format(format!("unknown dtype {d}"))),
        };
        let spec_len = r.u32()? as usize;
        let spec: ModelSpec = serde_json::from_slice(r.take(spec_len)?)
            .map_err(|e| Error::Format(format!("spec: {e}")))?;
        let mut params = Self::zeros(&spec)?;
        let count = r.u32()? as usize;
        let mut seen = vec![false; params.entries().len()];
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * width)?;
            let data: Vec<T> = raw
                .chunks_exact(width)
                .map(|c| if width == 4 { T::lit(f32::read_le(c) as f64) } else { T::lit(f64::read_le(c)) })
                .collect();
            let mut entries = params.entries_mut();
            let (i, slot) = entries
                .iter_mut()
                .enumerate()
                .find(|(_, e)| e.name == name)
                .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
            if slot.tensor.shape() != shape.as_slice() {
                return Err(Error::Format(format!("{name} has shape {shape:?}, spec needs {:?}", slot.tensor.shape())));
            }
            *slot.tensor = Tensor::from_vec(&shape, data)?;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!("missing tensor {}", params.entries()[i].name)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(params)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
