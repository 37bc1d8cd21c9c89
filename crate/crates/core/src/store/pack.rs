//! `.coodt` tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "COODTNS1"
//! count   u32
//! entry*  name_len u32 | name (UTF-8) | dtype u8 (0 = f32) | rank u8
//!         | rank x u64 dims | payload (product(dims) x f32 LE)
//! ```
//!
//! Entries are written in the order given; callers are responsible for
//! canonical ordering.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::StoreError;

pub const PACK_MAGIC: &[u8; 8] = b"COODTNS1";
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<u64>() as usize, data.len());
        Tensor { dims, data }
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Tensor {
            dims: vec![data.len() as u64],
            data,
        }
    }
}

pub fn encode_tensors(entries: &[(String, Tensor)]) -> Result<Vec<u8>, StoreError> {
    let payload: usize = entries
        .iter()
        .map(|(n, t)| 4 + n.len() + 2 + 8 * t.dims.len() + 4 * t.data.len())
        .sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(PACK_MAGIC);
    let count = u32::try_from(entries.len()).map_err(|_| StoreError::Invariant("too many tensor entries".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in entries {
        let expected: u64 = tensor.dims.iter().product();
        if expected != tensor.data.len() as u64 {
            return Err(StoreError::Invariant(format!(
                "tensor {name:?}: dims {:?} do not match {} values",
                tensor.dims,
                tensor.data.len()
            )));
        }
        let rank = u8::try_from(tensor.dims.len())
            .map_err(|_| StoreError::Invariant(format!("tensor {name:?}: rank too large")))?;
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(rank);
        for d in &tensor.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], StoreError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| StoreError::TruncatedFile(format!("expected {what} at byte offset {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, StoreError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, StoreError> {
    if bytes.len() < PACK_MAGIC.len() {
        return Err(StoreError::TruncatedFile("missing magic bytes".into()));
    }
    if &bytes[..PACK_MAGIC.len()] != PACK_MAGIC {
        return Err(StoreError::MalformedFile("bad magic or version".into()));
    }
    let mut cur = Cursor {
        bytes,
        pos: PACK_MAGIC.len(),
    };
    let count = cur.u32("entry count")?;
    let mut entries = Vec::new();
    let mut names = BTreeSet::new();
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| StoreError::MalformedFile("entry name is not UTF-8".into()))?
            .to_owned();
        let dtype = cur.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(StoreError::MalformedFile(format!(
                "entry {name:?}: unsupported dtype {dtype}"
            )));
        }
        let rank = cur.u8("rank")?;
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(cur.u64("dimension")?);
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(4))
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| StoreError::MalformedFile(format!("entry {name:?}: size overflow")))?;
        let raw = cur.take(count, "payload")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if !names.insert(name.clone()) {
            return Err(StoreError::MalformedFile(format!("duplicate entry {name:?}")));
        }
        entries.push((name, Tensor { dims, data }));
    }
    if cur.pos != bytes.len() {
        return Err(StoreError::MalformedFile(format!(
            "{} trailing bytes after last entry",
            bytes.len() - cur.pos
        )));
    }
    Ok(entries)
}

pub fn write_tensors(path: impl AsRef<Path>, entries: &[(String, Tensor)]) -> Result<(), StoreError> {
    let path = path.as_ref();
    let bytes = encode_tensors(entries)?;
    fs::write(path, bytes).map_err(|e| StoreError::io(path, e))
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    decode_tensors(&bytes)
}
