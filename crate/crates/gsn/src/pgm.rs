//! Binary PGM (P5) image strips.

use std::path::Path;

use gsn_core::numkit::Tensor2;

use crate::error::{Error, Result};

/// Tiles per strip row when not given explicitly.
pub const DEFAULT_TILES_PER_ROW: usize = 10;

/// `round(v·255)` with ties rounded up, so 0.5 maps to 128.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor() as u8
}

/// Renders each row of `samples` as a `width × height` tile, tiling left to
/// right and wrapping after `tiles_per_row` tiles. Unused tile slots in the
/// last strip row are black.
pub fn encode_pgm(samples: &Tensor2, width: usize, height: usize, tiles_per_row: usize) -> Result<Vec<u8>> {
    if samples.cols() != width * height {
        return Err(Error::Format(format!(
            "rows have {} entries, expected {width}x{height}",
            samples.cols()
        )));
    }
    if let Some((index, value)) = samples.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range { index, value: *value });
    }
    let n = samples.rows();
    let across = tiles_per_row.max(1).min(n.max(1));
    let down = n.div_ceil(across).max(1);
    let (img_w, img_h) = (across * width, down * height);
    let mut out = format!("P5\n{img_w} {img_h}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + img_w * img_h, 0);
    for (s, row) in samples.iter_rows().enumerate() {
        let (tx, ty) = (s % across, s / across);
        for y in 0..height {
            let start = header + (ty * height + y) * img_w + tx * width;
            for (dst, v) in out[start..start + width].iter_mut().zip(&row[y * width..(y + 1) * width]) {
                *dst = quantize(*v);
            }
        }
    }
    Ok(out)
}

pub fn write_pgm(samples: &Tensor2, width: usize, height: usize, path: &Path) -> Result<()> {
    let bytes = encode_pgm(samples, width, height, DEFAULT_TILES_PER_ROW)?;
    std::fs::write(path, bytes).map_err(Error::io(path))
}

/// Parses a P5 image back into tiles of `width × height`, scaled to [0, 1].
pub fn decode_pgm(bytes: &[u8], width: usize, height: usize, count: usize) -> Result<Tensor2> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::Format(format!("unsupported PGM header {} maxval {}", fields[0], fields[3])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM dimension {s:?}")));
    let (img_w, img_h) = (parse(&fields[1])?, parse(&fields[2])?);
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < img_w * img_h {
        return Err(Error::Length { expected: img_w * img_h, found: payload.len() });
    }
    if width == 0 || img_w % width != 0 || img_h % height.max(1) != 0 {
        return Err(Error::Format(format!("{img_w}x{img_h} image does not tile by {width}x{height}")));
    }
    let across = img_w / width;
    if count > across * (img_h / height) {
        return Err(Error::Format(format!("image holds fewer than {count} tiles")));
    }
    Ok(Tensor2::from_fn(count, width * height, |s, i| {
        let (tx, ty) = (s % across, s / across);
        let (x, y) = (i % width, i / width);
        payload[(ty * height + y) * img_w + tx * width + x] as f64 / 255.0
    }))
}
