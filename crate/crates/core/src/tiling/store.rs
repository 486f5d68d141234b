//! Binary embedding store. Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "BCRBAGS\0"
//! 8       2     format version (u16) = 1
//! 10      1     provenance code: 0 empty, 1 uni2, 2 virchow2, 3 conch,
//!               4 ensemble, 5 synthetic
//! 11      1     reserved, 0
//! 12      4     tile width `dim` (u32), shared by every bag
//! 16      4     bag count (u32)
//! 20      ...   bag table, one entry per bag:
//!                 u32 tile count, u16 id length, id bytes (UTF-8)
//! ...     ...   payload: for each bag in table order, tile count * dim
//!               f32 values, row-major
//! ```
//!
//! See `docs/embedding-store.md` at the repository root for a worked example.

use std::io::{Read, Write};
use std::path::Path;

use super::bag::{EmbeddingBag, Provenance};
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 8] = b"BCRBAGS\0";
pub const STORE_VERSION: u16 = 1;

pub fn encode_store(bags: &[EmbeddingBag]) -> Result<Vec<u8>> {
    let (code, dim) = match bags.first() {
        Some(b) => (b.provenance().code(), b.dim() as u32),
        None => (0, 0),
    };
    if let Some(b) = bags.iter().find(|b| b.provenance() != bags[0].provenance()) {
        return Err(Error::Validation(format!(
            "store bags must share one encoder; found {} and {}",
            bags[0].provenance(),
            b.provenance()
        )));
    }
    let payload: usize = bags.iter().map(|b| b.as_slice().len() * 4).sum();
    let mut out = Vec::with_capacity(20 + bags.len() * 16 + payload);
    out.extend_from_slice(STORE_MAGIC);
    out.extend_from_slice(&STORE_VERSION.to_le_bytes());
    out.push(code);
    out.push(0);
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(bags.len() as u32).to_le_bytes());
    for b in bags {
        let id = b.patient_id().as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Validation(format!("patient id too long: {} bytes", id.len())))?;
        out.extend_from_slice(&(b.n_tiles() as u32).to_le_bytes());
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
    }
    for b in bags {
        for v in b.as_slice() {
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
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
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

    fn fail(&self, at: usize, message: String) -> Error {
        Error::Format {
            offset: at as u64,
            message,
        }
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<Vec<EmbeddingBag>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != STORE_MAGIC {
        return Err(c.fail(0, "magic number mismatch".into()));
    }
    let version = c.u16("version")?;
    if version != STORE_VERSION {
        return Err(c.fail(8, format!("unsupported store version {version}")));
    }
    let code = c.take(2, "provenance")?[0];
    let dim = c.u32("dim")?;
    let n_bags = c.u32("bag count")? as usize;
    if n_bags == 0 {
        return Ok(Vec::new());
    }
    let provenance = Provenance::from_code(code, dim)
        .ok_or_else(|| c.fail(10, format!("provenance code {code} incompatible with width {dim}")))?;

    let mut table = Vec::with_capacity(n_bags.min(1 << 20));
    for _ in 0..n_bags {
        let n_tiles = c.u32("bag table")? as usize;
        let id_len = c.u16("bag table")? as usize;
        let at = c.pos;
        let id = std::str::from_utf8(c.take(id_len, "patient id")?)
            .map_err(|_| c.fail(at, "patient id is not UTF-8".into()))?;
        table.push((id.to_string(), n_tiles));
    }
    let mut bags = Vec::with_capacity(table.len());
    for (id, n_tiles) in table {
        let at = c.pos;
        let raw = c.take(n_tiles * dim as usize * 4, "payload")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        bags.push(EmbeddingBag::new(id, provenance, data).map_err(|e| c.fail(at, e.to_string()))?);
    }
    if c.pos != bytes.len() {
        return Err(c.fail(c.pos, format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(bags)
}

pub fn write_store<W: Write>(bags: &[EmbeddingBag], mut out: W) -> Result<()> {
    out.write_all(&encode_store(bags)?)
        .map_err(|e| Error::io("<embedding store>", e))
}

pub fn read_store<R: Read>(mut input: R) -> Result<Vec<EmbeddingBag>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<embedding store>", e))?;
    decode_store(&bytes)
}

pub fn save_store(bags: &[EmbeddingBag], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_store(bags)?).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: impl AsRef<Path>) -> Result<Vec<EmbeddingBag>> {
    let path = path.as_ref();
    decode_store(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
