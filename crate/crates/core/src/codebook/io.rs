//! Self-describing codebook files.
//!
//! Layout (all little-endian):
//!
//! | field   | type        |
//! |---------|-------------|
//! | magic   | `b"HSQC"`   |
//! | version | u16         |
//! | dim     | u32         |
//! | count   | u32         |
//! | method  | u8          |
//! | seed    | u64         |
//! | matrix  | `dim*count` f64, row-major |

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{Codebook, CodebookMethod};
use crate::error::{Error, Result};

pub const CODEBOOK_MAGIC: [u8; 4] = *b"HSQC";
pub const CODEBOOK_VERSION: u16 = 1;

const UNIT_NORM_TOLERANCE: f64 = 1e-12;

pub fn write_codebook<W: Write>(cb: &Codebook, mut out: W) -> Result<()> {
    let dim = u32::try_from(cb.dim()).map_err(|_| Error::Overflow("dim"))?;
    let count = u32::try_from(cb.count()).map_err(|_| Error::Overflow("count"))?;
    let mut buf = Vec::with_capacity(23 + 8 * cb.dim() * cb.count());
    buf.extend_from_slice(&CODEBOOK_MAGIC);
    buf.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.push(cb.method().code());
    buf.extend_from_slice(&cb.seed().to_le_bytes());
    for r in 0..cb.dim() {
        for c in 0..cb.count() {
            buf.extend_from_slice(&cb.columns()[(r, c)].to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_codebook<R: Read>(mut input: R) -> Result<Codebook> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CODEBOOK_MAGIC {
        return Err(Error::Format("bad codebook magic".into()));
    }
    let version = u16::from_le_bytes(cur.array()?);
    if version != CODEBOOK_VERSION {
        return Err(Error::Format(format!("unsupported codebook version {version}")));
    }
    let dim = u32::from_le_bytes(cur.array()?) as usize;
    let count = u32::from_le_bytes(cur.array()?) as usize;
    let method_code = cur.take(1)?[0];
    let method = CodebookMethod::from_code(method_code)
        .ok_or_else(|| Error::Format(format!("unknown codebook method code {method_code}")))?;
    let seed = u64::from_le_bytes(cur.array()?);
    let expected = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(8))
        .ok_or(Error::Overflow("dim*count"))?;
    if bytes.len() - cur.pos != expected {
        return Err(Error::Format(format!(
            "expected {expected} matrix bytes, found {}",
            bytes.len() - cur.pos
        )));
    }
    let mut columns = DMatrix::<f64>::zeros(dim, count);
    for r in 0..dim {
        for c in 0..count {
            columns[(r, c)] = f64::from_le_bytes(cur.array()?);
        }
    }
    for (i, col) in columns.column_iter().enumerate() {
        let norm = col.norm();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(Error::Format(format!("codeword {i} has norm {norm}, expected 1")));
        }
    }
    Codebook::from_unit_columns(columns, seed, method)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated codebook file".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}
