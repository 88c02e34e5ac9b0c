//! Flat little-endian bank file.
//!
//! ```text
//! header:    "RSAC" | version u32 | dim u32 | class_count u32
//! per class: class_id u32 | count u64 | k u32
//!            | mean dim×f64 | eigenvalues k×f64 | basis dim·k×f64 (column-major)
//! ```
//!
//! Projected means are not stored; they are recomputed on load with the
//! same routine that produced them, so a round trip is bit-exact.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::bank::{ClassModel, RankPolicy, VectorBank};
use crate::error::{Error, Result};
use crate::linalg::Basis;

pub const MAGIC: &[u8; 4] = b"RSAC";
pub const VERSION: u32 = 1;

pub fn write_bank<W: Write>(bank: &VectorBank, mut out: W) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(bank.dim() as u32).to_le_bytes())?;
    out.write_all(&(bank.len() as u32).to_le_bytes())?;
    for m in bank.models() {
        out.write_all(&m.class_id().to_le_bytes())?;
        out.write_all(&m.count().to_le_bytes())?;
        out.write_all(&(m.rank() as u32).to_le_bytes())?;
        for v in m.mean().iter().chain(m.eigenvalues()).chain(m.basis().as_slice()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn encode_bank(bank: &VectorBank) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_bank(bank, &mut buf)?;
    Ok(buf)
}

pub fn save_bank(bank: &VectorBank, path: impl AsRef<Path>) -> Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_bank(bank, &mut file)?;
    file.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CorruptBank(format!(
                "unexpected end of file at byte {} (needed {n} more)",
                self.pos
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::CorruptBank("size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Decodes a bank; the result is frozen. The stored rank policy is not part
/// of the format, so the bank reports `FixedK` of its largest class rank.
pub fn decode_bank(bytes: &[u8]) -> Result<VectorBank> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::CorruptBank("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::CorruptBank(format!("unsupported version {version}")));
    }
    let dim = cur.u32()? as usize;
    let class_count = cur.u32()? as usize;
    if dim == 0 || class_count == 0 {
        return Err(Error::CorruptBank("empty bank".into()));
    }
    let mut models = Vec::with_capacity(class_count);
    let mut max_k = 1;
    for _ in 0..class_count {
        let class_id = cur.u32()?;
        let count = cur.u64()?;
        let k = cur.u32()? as usize;
        if k == 0 || k > dim {
            return Err(Error::CorruptBank(format!("class {class_id}: rank {k} outside 1..={dim}")));
        }
        max_k = max_k.max(k);
        let mean = cur.f64s(dim)?;
        let eigenvalues = cur.f64s(k)?;
        let basis = Basis::from_columns(dim, k, cur.f64s(dim * k)?)?;
        let model = ClassModel::new(class_id, mean, basis, eigenvalues, count)
            .map_err(|e| Error::CorruptBank(format!("class {class_id}: {e}")))?;
        if models.iter().any(|m: &ClassModel| m.class_id() == class_id) {
            return Err(Error::CorruptBank(format!("duplicate class {class_id}")));
        }
        models.push(model);
    }
    if cur.pos != bytes.len() {
        return Err(Error::CorruptBank(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    VectorBank::from_models(dim, RankPolicy::FixedK(max_k), models)
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<VectorBank> {
    decode_bank(&fs::read(path)?)
}
