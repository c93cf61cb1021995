//! The IDX binary tensor format used by the MNIST distribution.
//!
//! Layout: a 4-byte magic `00 00 <type> <ndims>`, then `ndims` big-endian
//! `u32` dimension sizes, then the payload in row-major order with
//! big-endian elements. The parser never allocates based on header values
//! before checking them against the bytes actually present.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic {found:#010x} at offset {offset}")]
    BadMagic { offset: usize, found: u32 },
    #[error("unsupported element type {code:#04x} at offset {offset}")]
    UnsupportedType { offset: usize, code: u8 },
    #[error("truncated {what} at offset {offset}: need {needed} bytes, have {available}")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("dimension product overflows at offset {offset}")]
    DimensionOverflow { offset: usize },
    #[error("{extra} unexpected trailing bytes at offset {offset}")]
    TrailingData { offset: usize, extra: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementType {
    U8,
    I8,
    I16,
    I32,
    F32,
    F64,
}

impl ElementType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x08 => ElementType::U8,
            0x09 => ElementType::I8,
            0x0B => ElementType::I16,
            0x0C => ElementType::I32,
            0x0D => ElementType::F32,
            0x0E => ElementType::F64,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        match self {
            ElementType::U8 => 0x08,
            ElementType::I8 => 0x09,
            ElementType::I16 => 0x0B,
            ElementType::I32 => 0x0C,
            ElementType::F32 => 0x0D,
            ElementType::F64 => 0x0E,
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::U8 | ElementType::I8 => 1,
            ElementType::I16 => 2,
            ElementType::I32 | ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }
}

/// A decoded IDX file. `data` holds the raw big-endian payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub element: ElementType,
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn magic(&self) -> u32 {
        u32::from_be_bytes([0, 0, self.element.code(), self.dims.len() as u8])
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    /// Each element as `f64`, decoded from big-endian.
    pub fn values(&self) -> Vec<f64> {
        let sz = self.element.size();
        self.data
            .chunks_exact(sz)
            .map(|c| match self.element {
                ElementType::U8 => c[0] as f64,
                ElementType::I8 => c[0] as i8 as f64,
                ElementType::I16 => i16::from_be_bytes([c[0], c[1]]) as f64,
                ElementType::I32 => i32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64,
                ElementType::F32 => f32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64,
                ElementType::F64 => f64::from_be_bytes(c.try_into().expect("chunk of 8")),
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

fn take<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &'static str) -> Result<&'a [u8], IdxError> {
    let available = bytes.len().saturating_sub(offset);
    if available < len {
        return Err(IdxError::Truncated {
            what,
            offset,
            needed: len,
            available,
        });
    }
    Ok(&bytes[offset..offset + len])
}

/// Decode a complete IDX file held in memory.
pub fn parse(bytes: &[u8]) -> Result<IdxTensor, IdxError> {
    let magic = take(bytes, 0, 4, "magic")?;
    let found = u32::from_be_bytes([magic[0], magic[1], magic[2], magic[3]]);
    let ndims = magic[3];
    if magic[0] != 0 || magic[1] != 0 || ndims == 0 {
        return Err(IdxError::BadMagic { offset: 0, found });
    }
    let element = ElementType::from_code(magic[2]).ok_or(IdxError::UnsupportedType { offset: 2, code: magic[2] })?;

    let header = take(bytes, 4, 4 * ndims as usize, "header")?;
    let dims: Vec<u32> = header
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let payload_len = dims
        .iter()
        .try_fold(element.size(), |acc, &d| acc.checked_mul(d as usize))
        .ok_or(IdxError::DimensionOverflow { offset: 4 })?;
    let start = 4 + header.len();
    let data = take(bytes, start, payload_len, "payload")?.to_vec();
    let end = start + payload_len;
    if bytes.len() > end {
        return Err(IdxError::TrailingData {
            offset: end,
            extra: bytes.len() - end,
        });
    }
    Ok(IdxTensor { element, dims, data })
}
