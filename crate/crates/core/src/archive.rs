//! Named-tensor container used for checkpoints and feature-extractor weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SRGB" | version u32 | header len u32 | header JSON
//!        | tensor count u32
//!        | per tensor: name len u16 | UTF-8 name | ndim u8 | dims u64 × ndim | f32 data
//!        | CRC32 of every preceding byte
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SRGB";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("bad magic: expected \"SRGB\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown archive version {0}")]
    UnknownVersion(u32),
    #[error("archive truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("{0} unexpected bytes after checksum")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("duplicate tensor name `{0}`")]
    DuplicateTensor(String),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("tensor `{name}` has an invalid shape {shape:?}")]
    BadShape { name: String, shape: Vec<u64> },
    #[error("tensor name `{0}` longer than 65535 bytes")]
    NameTooLong(String),
    #[error("header is not valid JSON: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub header: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Archive {
    pub fn encode(&self) -> Result<Vec<u8>, ArchiveError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        out.extend_from_slice(self.header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            if !seen.insert(name.as_str()) {
                return Err(ArchiveError::DuplicateTensor(name.clone()));
            }
            let len = u16::try_from(name.len()).map_err(|_| ArchiveError::NameTooLong(name.clone()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.ndim() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.reserve(t.numel() * 4);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ArchiveError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(ArchiveError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(ArchiveError::UnknownVersion(version));
        }
        let hlen = r.u32("header length")? as usize;
        let header = std::str::from_utf8(r.take(hlen, "header")?)
            .map_err(|_| ArchiveError::BadName)?
            .to_owned();
        let count = r.u32("tensor count")? as usize;
        let mut seen = HashSet::new();
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let nlen = u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2")) as usize;
            let name = std::str::from_utf8(r.take(nlen, "tensor name")?)
                .map_err(|_| ArchiveError::BadName)?
                .to_owned();
            if !seen.insert(name.clone()) {
                return Err(ArchiveError::DuplicateTensor(name));
            }
            let ndim = r.take(1, "ndim")?[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u64::from_le_bytes(r.take(8, "dims")?.try_into().expect("8")));
            }
            let numel = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n > 0 && ndim > 0)
                .ok_or_else(|| ArchiveError::BadShape {
                    name: name.clone(),
                    shape: dims.clone(),
                })?;
            let nbytes = usize::try_from(numel)
                .ok()
                .and_then(|n| n.checked_mul(4))
                .ok_or(ArchiveError::Truncated { what: "tensor data" })?;
            let raw = r.take(nbytes, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
                .collect();
            let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
            let t = Tensor::new(&shape, data).map_err(|_| ArchiveError::BadShape {
                name: name.clone(),
                shape: dims,
            })?;
            tensors.push((name, t));
        }
        let body_end = r.pos;
        let stored = r.u32("checksum")?;
        if r.pos != bytes.len() {
            return Err(ArchiveError::TrailingBytes(bytes.len() - r.pos));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(ArchiveError::Checksum { stored, computed });
        }
        Ok(Self { header, tensors })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ArchiveError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(ArchiveError::Truncated { what })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4")))
    }
}

/// Writes `bytes` via a sibling temp file and a rename, removing the temp
/// file if any step fails.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
