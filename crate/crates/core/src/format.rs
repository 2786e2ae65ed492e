//! Shared binary layout for `KCC1` dataset containers and `KCCG` galleries.
//!
//! ```text
//! offset  size  field
//! 0       4     magic
//! 4       4     format_version (u32 LE)
//! 8       8     manifest_length (u64 LE)
//! 16      4     manifest CRC-32 (u32 LE)
//! 20      n     manifest, UTF-8 JSON
//! 20+n    ...   payload; entry offsets are relative to its first byte
//! ```
//!
//! Real arrays are little-endian IEEE-754 `f32` in row-major order, masks are
//! one byte per pixel. Every payload entry carries its own CRC-32.

use serde::{Deserialize, Serialize};

use crate::error::{KccError, Result};

pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    F32,
    U8,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::F32 => 4,
            ElementType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub element_type: ElementType,
    pub byte_offset: u64,
    pub byte_length: u64,
    pub checksum: u32,
}

/// Accumulates payload entries in write order.
#[derive(Debug, Default)]
pub(crate) struct PayloadWriter {
    bytes: Vec<u8>,
    entries: Vec<EntryInfo>,
}

impl PayloadWriter {
    pub fn push_f32(&mut self, name: String, shape: Vec<usize>, values: &[f32]) {
        let start = self.bytes.len();
        self.bytes.reserve(values.len() * 4);
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.finish(name, shape, ElementType::F32, start);
    }

    pub fn push_u8(&mut self, name: String, shape: Vec<usize>, values: &[u8]) {
        let start = self.bytes.len();
        self.bytes.extend_from_slice(values);
        self.finish(name, shape, ElementType::U8, start);
    }

    fn finish(&mut self, name: String, shape: Vec<usize>, element_type: ElementType, start: usize) {
        let chunk = &self.bytes[start..];
        self.entries.push(EntryInfo {
            name,
            shape,
            element_type,
            byte_offset: start as u64,
            byte_length: chunk.len() as u64,
            checksum: crc32fast::hash(chunk),
        });
    }

    pub fn into_parts(self) -> (Vec<EntryInfo>, Vec<u8>) {
        (self.entries, self.bytes)
    }
}

pub(crate) fn assemble(magic: &[u8; 4], version: u32, manifest: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(manifest).to_le_bytes());
    out.extend_from_slice(manifest);
    out.extend_from_slice(payload);
    out
}

/// Validated view over an encoded file: header checked, manifest CRC verified.
pub(crate) struct RawFile<'a> {
    pub manifest: &'a [u8],
    pub payload: &'a [u8],
}

pub(crate) fn split<'a>(bytes: &'a [u8], magic: &[u8; 4], supported: u32) -> Result<RawFile<'a>> {
    if bytes.len() < 4 {
        return Err(KccError::Truncated {
            needed: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != magic {
        return Err(KccError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: bytes[..4].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(KccError::Truncated {
            needed: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version == 0 || version > supported {
        return Err(KccError::UnsupportedVersion {
            found: version,
            supported,
        });
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let stored_crc = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let available = (bytes.len() - HEADER_LEN) as u64;
    if manifest_len > available {
        return Err(KccError::Truncated {
            needed: HEADER_LEN as u64 + manifest_len,
            found: bytes.len() as u64,
        });
    }
    let end = HEADER_LEN + manifest_len as usize;
    let manifest = &bytes[HEADER_LEN..end];
    let computed = crc32fast::hash(manifest);
    if computed != stored_crc {
        return Err(KccError::Checksum {
            entry: "manifest".into(),
            stored: stored_crc,
            computed,
        });
    }
    Ok(RawFile {
        manifest,
        payload: &bytes[end..],
    })
}

/// Checks that entries tile `[0, payload_length)` without overlap, that the
/// payload is complete, and that every entry's CRC matches.
pub(crate) fn verify_entries(entries: &[EntryInfo], payload_length: u64, payload: &[u8], file_len: usize) -> Result<()> {
    let found = payload.len() as u64;
    if found < payload_length {
        return Err(KccError::Truncated {
            needed: file_len as u64 - found + payload_length,
            found: file_len as u64,
        });
    }
    if found > payload_length {
        return Err(KccError::Manifest(format!(
            "{} trailing bytes after payload",
            found - payload_length
        )));
    }
    let mut cursor = 0u64;
    for e in entries {
        if e.byte_offset != cursor {
            return Err(KccError::Manifest(format!(
                "entry `{}` at offset {} (expected {})",
                e.name, e.byte_offset, cursor
            )));
        }
        let elements: usize = e.shape.iter().product();
        if (elements * e.element_type.size()) as u64 != e.byte_length {
            return Err(KccError::Manifest(format!(
                "entry `{}` shape {:?} inconsistent with byte length {}",
                e.name, e.shape, e.byte_length
            )));
        }
        let end = cursor
            .checked_add(e.byte_length)
            .filter(|&end| end <= payload_length)
            .ok_or_else(|| KccError::Manifest(format!("entry `{}` exceeds payload", e.name)))?;
        let computed = crc32fast::hash(&payload[cursor as usize..end as usize]);
        if computed != e.checksum {
            return Err(KccError::Checksum {
                entry: e.name.clone(),
                stored: e.checksum,
                computed,
            });
        }
        cursor = end;
    }
    if cursor != payload_length {
        return Err(KccError::Manifest(format!(
            "entries cover {cursor} of {payload_length} payload bytes"
        )));
    }
    Ok(())
}

pub(crate) fn entry_f32(payload: &[u8], e: &EntryInfo) -> Result<Vec<f32>> {
    if e.element_type != ElementType::F32 {
        return Err(KccError::Manifest(format!("entry `{}` is not f32", e.name)));
    }
    let chunk = &payload[e.byte_offset as usize..(e.byte_offset + e.byte_length) as usize];
    Ok(chunk
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub(crate) fn entry_u8<'a>(payload: &'a [u8], e: &EntryInfo) -> Result<&'a [u8]> {
    if e.element_type != ElementType::U8 {
        return Err(KccError::Manifest(format!("entry `{}` is not u8", e.name)));
    }
    Ok(&payload[e.byte_offset as usize..(e.byte_offset + e.byte_length) as usize])
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| KccError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| KccError::io(path, e))
}
