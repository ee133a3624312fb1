//! Portable binary weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4  b"UVMW"
//! version u16
//! count   u32
//! entry*  name_len u16, name bytes (UTF-8),
//!         rank u8, extents u32 × rank,
//!         payload f32 × product(extents) (IEEE-754 bit patterns)
//! ```
//!
//! Entries are sorted lexicographically by name and names are unique; both
//! are enforced on read, so a canonical file has exactly one byte
//! representation for a given bundle. Parse errors report the byte offset of
//! the first defect.

use crate::error::{Error, Result};
use crate::net::{NetConfig, NetWeights};
use crate::tensor::Tensor;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"UVMW";
pub const FORMAT_VERSION: u16 = 1;

/// Serializes named tensors into the file format (sorting them by name).
pub fn write_entries(entries: &[(String, &Tensor)]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&(String, &Tensor)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Config(format!(
                "duplicate tensor name {}",
                pair[0].0
            )));
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(sorted.len() as u32).to_le_bytes());
    for (name, tensor) in sorted {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Config(format!("tensor name too long: {name}")));
        }
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(tensor.rank() as u8);
        for &e in tensor.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.bytes.len() as u64,
                reason: format!(
                    "truncated file: needed {n} bytes for {what} at offset {}",
                    self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a weight file into its named tensors, enforcing the canonical
/// ordering and name uniqueness.
pub fn parse_entries(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: format!("bad magic {magic:02x?}, expected {MAGIC:02x?}"),
        });
    }
    let version_at = cur.pos as u64;
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            offset: version_at,
            reason: format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        });
    }
    let count = cur.u32("entry count")?;
    let mut entries = Vec::with_capacity(count as usize);
    let mut prev_name: Option<String> = None;
    for _ in 0..count {
        let name_at = cur.pos as u64;
        let name_len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|e| Error::Parse {
                offset: name_at + 2,
                reason: format!("name is not UTF-8: {e}"),
            })?
            .to_string();
        if let Some(prev) = &prev_name {
            if *prev == name {
                return Err(Error::Parse {
                    offset: name_at,
                    reason: format!("duplicate tensor name {name}"),
                });
            }
            if *prev > name {
                return Err(Error::Parse {
                    offset: name_at,
                    reason: format!("names out of order: {prev} before {name}"),
                });
            }
        }
        let rank_at = cur.pos as u64;
        let rank = cur.take(1, "rank")?[0] as usize;
        if !(1..=4).contains(&rank) {
            return Err(Error::Parse {
                offset: rank_at,
                reason: format!("rank must be 1..=4, got {rank}"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let extent_at = cur.pos as u64;
            let e = cur.u32("extent")? as usize;
            if e == 0 {
                return Err(Error::Parse {
                    offset: extent_at,
                    reason: "zero extent".to_string(),
                });
            }
            shape.push(e);
        }
        let n: usize = shape.iter().product();
        let payload = cur.take(4 * n, "payload")?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        entries.push((name.clone(), Tensor::new(&shape, data)?));
        prev_name = Some(name);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Parse {
            offset: cur.pos as u64,
            reason: format!("{} trailing bytes after last entry", bytes.len() - cur.pos),
        });
    }
    Ok(entries)
}

/// Writes a network bundle to `path`.
pub fn save_weights(path: impl AsRef<Path>, w: &NetWeights) -> Result<()> {
    let bytes = write_entries(&w.named_tensors())?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Loads a network bundle for `cfg` from `path`, requiring exactly the
/// expected tensor names and shapes.
pub fn load_weights(path: impl AsRef<Path>, cfg: &NetConfig) -> Result<NetWeights> {
    let bytes = std::fs::read(path)?;
    let mut entries: std::collections::HashMap<String, Tensor> =
        parse_entries(&bytes)?.into_iter().collect();
    let mut w = NetWeights::zeros(cfg);
    for (name, slot) in w.named_tensors_mut() {
        let tensor = entries
            .remove(&name)
            .ok_or_else(|| Error::Config(format!("weight file is missing tensor {name}")))?;
        if tensor.shape() != slot.shape() {
            return Err(Error::Config(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    if let Some(name) = entries.keys().next() {
        return Err(Error::Config(format!(
            "weight file has unexpected tensor {name}"
        )));
    }
    Ok(w)
}
