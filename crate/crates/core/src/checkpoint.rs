//! Self-describing binary container for model and optimizer state.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` section count, then per
//! section a 4-byte tag, a `u64` payload length and the payload, and finally
//! the SHA-256 of every preceding byte. All integers and floats are
//! little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FREPGAN\0";
pub const FORMAT_VERSION: u32 = 1;

pub type Tag = [u8; 4];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    sections: Vec<(Tag, Vec<u8>)>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tag: Tag, payload: Vec<u8>) {
        self.sections.push((tag, payload));
    }

    pub fn push_floats(&mut self, tag: Tag, values: &[f64]) {
        self.push(tag, encode_floats(values));
    }

    pub fn section(&self, tag: Tag) -> Result<&[u8]> {
        self.sections
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| corrupt(format!("missing section {}", String::from_utf8_lossy(&tag))))
    }

    pub fn floats(&self, tag: Tag) -> Result<Vec<f64>> {
        decode_floats(self.section(tag)?)
    }

    pub fn tags(&self) -> impl Iterator<Item = &Tag> {
        self.sections.iter().map(|(t, _)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (tag, payload) in &self.sections {
            out.extend_from_slice(tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + 32 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut reader = Reader { bytes: &bytes[..bytes.len() - 32], pos: 8 };
        let version = u32::from_le_bytes(reader.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let count = u32::from_le_bytes(reader.take(4)?.try_into().expect("4 bytes"));
        let mut sections = Vec::new();
        for _ in 0..count {
            let tag: Tag = reader.take(4)?.try_into().expect("4 bytes");
            let len = u64::from_le_bytes(reader.take(8)?.try_into().expect("8 bytes"));
            let len = usize::try_from(len).map_err(|_| corrupt("section too large"))?;
            sections.push((tag, reader.take(len)?.to_vec()));
        }
        if reader.pos != reader.bytes.len() {
            return Err(corrupt("trailing bytes after last section"));
        }
        let digest = Sha256::digest(reader.bytes);
        if digest.as_slice() != &bytes[bytes.len() - 32..] {
            return Err(corrupt("checksum mismatch"));
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

pub fn encode_floats(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_floats(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(corrupt("float section length not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
