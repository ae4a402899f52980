//! Versioned binary container: a JSON metadata block followed by named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "LSCONT\0\0"        8 bytes
//! kind    4 ASCII bytes       e.g. "CKPT", "DSET"
//! schema  u32
//! meta    u64 length + UTF-8 JSON
//! count   u32
//! tensor  u32 name length, name, u8 dtype, u32 rank, rank×u64 dims, payload
//! ```
//!
//! Used for model checkpoints and dataset archives.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const MAGIC: &[u8; 8] = b"LSCONT\0\0";

#[derive(Clone, Debug, PartialEq)]
pub enum Blob {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
    U8(Vec<u8>),
}

impl Blob {
    fn tag(&self) -> u8 {
        match self {
            Blob::F32(_) => 0,
            Blob::F64(_) => 1,
            Blob::U32(_) => 2,
            Blob::U8(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Blob::F32(v) => v.len(),
            Blob::F64(v) => v.len(),
            Blob::U32(v) => v.len(),
            Blob::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bytes(&self) -> Vec<u8> {
        match self {
            Blob::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Blob::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Blob::U32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Blob::U8(v) => v.clone(),
        }
    }

    /// Numeric view as `f64`, whatever the stored type.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Blob::F32(v) => v.iter().map(|x| *x as f64).collect(),
            Blob::F64(v) => v.clone(),
            Blob::U32(v) => v.iter().map(|x| *x as f64).collect(),
            Blob::U8(v) => v.iter().map(|x| *x as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub blob: Blob,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: [u8; 4],
    pub schema_version: u32,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Entry>,
}

impl Container {
    pub fn new(kind: [u8; 4], schema_version: u32, meta: serde_json::Value) -> Self {
        Container { kind, schema_version, meta, tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, blob: Blob) {
        assert_eq!(shape.iter().product::<usize>(), blob.len(), "container tensor shape");
        self.tensors.insert(name.into(), Entry { shape, blob });
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.tensors.get(name).ok_or_else(|| Error::contract(format!("container has no tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.kind);
        out.extend_from_slice(&self.schema_version.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("json value serializes");
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, entry) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(entry.blob.tag());
            out.extend_from_slice(&(entry.shape.len() as u32).to_le_bytes());
            for d in &entry.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            out.extend_from_slice(&entry.blob.bytes());
        }
        out
    }

    /// Parse a container, requiring the given kind and schema version.
    pub fn from_bytes(bytes: &[u8], kind: [u8; 4], schema_version: u32) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse { offset: 0, message: "not a latentscout container".into() });
        }
        let found_kind: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if found_kind != kind {
            return Err(Error::Parse {
                offset: 8,
                message: format!(
                    "expected container kind {:?}, found {:?}",
                    String::from_utf8_lossy(&kind),
                    String::from_utf8_lossy(&found_kind)
                ),
            });
        }
        let found = r.u32()?;
        if found != schema_version {
            return Err(Error::Schema { expected: schema_version, found });
        }
        let meta_len = r.u64()? as usize;
        let meta_off = r.pos as u64;
        let meta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Parse { offset: meta_off, message: format!("metadata: {e}") })?;
        let count = r.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Parse { offset: r.pos as u64, message: "tensor name is not UTF-8".into() })?;
            let tag_off = r.pos as u64;
            let tag = r.take(1)?[0];
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let blob = match tag {
                0 => Blob::F32(
                    r.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                1 => Blob::F64(
                    r.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                2 => Blob::U32(
                    r.take(n * 4)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                3 => Blob::U8(r.take(n)?.to_vec()),
                other => {
                    return Err(Error::Parse { offset: tag_off, message: format!("unknown tensor dtype {other}") })
                }
            };
            tensors.insert(name, Entry { shape, blob });
        }
        Ok(Container { kind, schema_version, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path, kind: [u8; 4], schema_version: u32) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, kind, schema_version)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos as u64,
                message: format!("truncated: wanted {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
