//! Dense matrix files stamped with the run seed and config hash.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `GSNMAT01` |
//! | 8 | seed (u64) |
//! | 32 | SHA-256 of the run config |
//! | 8 | rows (u64) |
//! | 8 | cols (u64) |
//! | 8·rows·cols | entries, row-major f64 |

use std::path::Path;

use gsn_core::numkit::Tensor2;

use crate::error::{Error, Result};

pub const MAT_MAGIC: &[u8; 8] = b"GSNMAT01";
const HEADER_LEN: usize = 8 + 8 + 32 + 8 + 8;

/// Provenance stamped into every binary artifact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stamp {
    pub seed: u64,
    pub config_hash: [u8; 32],
}

pub fn encode_matrix(m: &Tensor2, stamp: &Stamp) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.data().len());
    out.extend_from_slice(MAT_MAGIC);
    out.extend_from_slice(&stamp.seed.to_le_bytes());
    out.extend_from_slice(&stamp.config_hash);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(Tensor2, Stamp)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length { expected: HEADER_LEN, found: bytes.len() });
    }
    if &bytes[..8] != MAT_MAGIC {
        return Err(Error::Format(format!("bad matrix magic {:?}", String::from_utf8_lossy(&bytes[..8]))));
    }
    let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let seed = u64_at(8);
    let config_hash: [u8; 32] = bytes[16..48].try_into().expect("32 bytes");
    let (rows, cols) = (u64_at(48) as usize, u64_at(56) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("matrix of {rows}x{cols} is too large")))?;
    if bytes.len() != expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((Tensor2::new(rows, cols, data)?, Stamp { seed, config_hash }))
}

pub fn write_matrix(path: &Path, m: &Tensor2, stamp: &Stamp) -> Result<()> {
    std::fs::write(path, encode_matrix(m, stamp)).map_err(Error::io(path))
}

pub fn read_matrix(path: &Path) -> Result<(Tensor2, Stamp)> {
    decode_matrix(&std::fs::read(path).map_err(Error::io(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = Tensor2::from_fn(3, 5, |r, c| (r as f64 - 1.3) * (c as f64 + 0.1).sqrt());
        let stamp = Stamp { seed: 42, config_hash: [7; 32] };
        let (back, s) = decode_matrix(&encode_matrix(&m, &stamp)).unwrap();
        assert_eq!(back, m);
        assert_eq!(s, stamp);
    }

    #[test]
    fn truncated_file_is_a_length_error() {
        let stamp = Stamp { seed: 1, config_hash: [0; 32] };
        let bytes = encode_matrix(&Tensor2::zeros(2, 2), &stamp);
        assert!(matches!(decode_matrix(&bytes[..bytes.len() - 1]), Err(Error::Length { .. })));
    }
}
