//! IDX files (the MNIST distribution format), optionally gzip-compressed.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use gsn_core::numkit::Tensor2;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads an IDX file; gzip input is detected from its header bytes.
pub fn read_idx_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(Error::io(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(Error::io(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses an image or label IDX payload into one row per item. Image
/// pixels are scaled by 1/255; labels are kept as raw values.
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor2> {
    let (sizes, scale, header) = parse_idx_header(bytes)?;
    let rows = sizes[0];
    let cols: usize = sizes[1..].iter().product();
    let expected = header + rows * cols;
    if bytes.len() < expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }
    let data = bytes[header..expected].iter().map(|b| *b as f64 * scale).collect();
    Ok(Tensor2::new(rows, cols, data)?)
}

/// Dimension sizes from the header, item count first.
pub fn idx_dims(bytes: &[u8]) -> Result<Vec<usize>> {
    let m = parse_idx_header(bytes)?;
    Ok(m.0)
}

fn parse_idx_header(bytes: &[u8]) -> Result<(Vec<usize>, f64, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Length { expected: 4, found: bytes.len() });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    let (dims, scale) = match magic {
        IMAGES_MAGIC => (3, 1.0 / 255.0),
        LABELS_MAGIC => (1, 1.0),
        other => return Err(Error::Format(format!("unexpected IDX magic 0x{other:08x}"))),
    };
    let header = 4 + 4 * dims;
    if bytes.len() < header {
        return Err(Error::Length { expected: header, found: bytes.len() });
    }
    let sizes = (0..dims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    Ok((sizes, scale, header))
}

pub fn load_idx(path: &Path) -> Result<Tensor2> {
    parse_idx(&read_idx_bytes(path)?)
}

/// Serializes an image tensor of `rows × (h·w)` bytes in `[0, 255]`.
pub fn encode_idx_images(images: &[u8], count: usize, height: usize, width: usize) -> Vec<u8> {
    let mut out = IMAGES_MAGIC.to_be_bytes().to_vec();
    for d in [count, height, width] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(images);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_fixture() {
        let pixels = [0u8, 51, 102, 255, 1, 2, 3, 4];
        let m = parse_idx(&encode_idx_images(&pixels, 2, 2, 2)).unwrap();
        assert_eq!(m.shape(), (2, 4));
        for (v, b) in m.data().iter().zip(pixels) {
            assert_eq!(*v, b as f64 / 255.0);
        }
    }

    #[test]
    fn wrong_magic_is_named() {
        let mut bytes = encode_idx_images(&[], 0, 2, 2);
        bytes[3] = 0x02;
        let err = parse_idx(&bytes).unwrap_err().to_string();
        assert!(err.contains("0x00000802"), "{err}");
    }

    #[test]
    fn empty_item_count() {
        let m = parse_idx(&encode_idx_images(&[], 0, 28, 28)).unwrap();
        assert_eq!(m.shape(), (0, 784));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_idx_images(&[1, 2, 3], 1, 2, 2);
        assert!(matches!(parse_idx(&bytes), Err(Error::Length { expected: 20, found: 19 })));
    }

    #[test]
    fn labels_keep_raw_values() {
        let mut bytes = LABELS_MAGIC.to_be_bytes().to_vec();
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&[7, 2, 1]);
        assert_eq!(parse_idx(&bytes).unwrap().data(), &[7.0, 2.0, 1.0]);
    }
}
