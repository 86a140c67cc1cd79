use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;

use super::{LabeledDataset, Task};
use crate::error::{ensure_input, ensure_shape, Error, Result};

const MAGIC_LABELS: u32 = 0x0000_0801;
const MAGIC_IMAGES: u32 = 0x0000_0803;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
/// Upper bound on decompressed size, so a tiny gzip bomb cannot exhaust
/// memory.
const MAX_DECOMPRESSED: u64 = 1 << 30;

/// An unsigned-byte IDX tensor, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX label (`0x801`, 1-D) or image (`0x803`, 3-D) file.
/// Gzip-compressed input is detected by its magic bytes.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .take(MAX_DECOMPRESSED)
            .read_to_end(&mut raw)
            .map_err(|e| Error::parse_at_offset(0, format!("gzip: {e}")))?;
        return parse_raw(&raw);
    }
    parse_raw(bytes)
}

fn parse_raw(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::parse_at_offset(0, "truncated header"));
    }
    let magic = BigEndian::read_u32(bytes);
    let ndims = match magic {
        MAGIC_LABELS => 1,
        MAGIC_IMAGES => 3,
        other => return Err(Error::parse_at_offset(0, format!("bad magic {other:#010x}"))),
    };
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::parse_at_offset(bytes.len(), "truncated dimension header"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| BigEndian::read_u32(&bytes[4 + 4 * i..]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::parse_at_offset(4, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < count {
        return Err(Error::parse_at_offset(
            bytes.len(),
            format!("truncated payload: {count} bytes declared, {} present", payload.len()),
        ));
    }
    if payload.len() > count {
        return Err(Error::parse_at_offset(header + count, "trailing bytes after payload"));
    }
    Ok(IdxTensor {
        dims,
        data: payload.to_vec(),
    })
}

pub fn read_idx_file(path: &Path) -> Result<IdxTensor> {
    parse_idx(&std::fs::read(path)?)
}

/// Serializes a 1-D or 3-D tensor (uncompressed).
pub fn write_idx(t: &IdxTensor) -> Result<Vec<u8>> {
    let magic = match t.dims.len() {
        1 => MAGIC_LABELS,
        3 => MAGIC_IMAGES,
        n => return Err(Error::InvalidInput(format!("IDX tensors here are 1-D or 3-D, got {n}-D"))),
    };
    let count: usize = t.dims.iter().product();
    ensure_shape!(count == t.data.len(), "dims hold {count} bytes, data has {}", t.data.len());
    let mut out = vec![0u8; 4 + 4 * t.dims.len()];
    BigEndian::write_u32(&mut out, magic);
    for (i, &d) in t.dims.iter().enumerate() {
        let d = u32::try_from(d).map_err(|_| Error::InvalidInput(format!("dimension {d} exceeds u32")))?;
        BigEndian::write_u32(&mut out[4 + 4 * i..], d);
    }
    out.extend_from_slice(&t.data);
    Ok(out)
}

/// Box-filter (area-averaging) resample of a square `from × from` image to
/// `to × to`, scaled to `[0, 1]`.
pub fn resize_area(img: &[u8], from: usize, to: usize) -> Vec<f64> {
    assert_eq!(img.len(), from * from, "image is not {from}x{from}");
    // weights[o][s]: overlap of output cell o with source pixel s, in
    // source-pixel units.
    let scale = from as f64 / to as f64;
    let weights: Vec<Vec<(usize, f64)>> = (0..to)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            (lo.floor() as usize..(hi.ceil() as usize).min(from))
                .map(|s| (s, (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0)))
                .filter(|&(_, w)| w > 0.0)
                .collect()
        })
        .collect();
    let norm = 255.0 * scale * scale;
    let mut out = vec![0.0; to * to];
    for (oy, wy) in weights.iter().enumerate() {
        for (ox, wx) in weights.iter().enumerate() {
            let mut acc = 0.0;
            for &(sy, a) in wy {
                for &(sx, b) in wx {
                    acc += a * b * f64::from(img[sy * from + sx]);
                }
            }
            out[oy * to + ox] = acc / norm;
        }
    }
    out
}

/// Builds a 10-class dataset from MNIST-style image and label tensors,
/// resampling each image to `side × side`.
pub fn mnist_dataset(images: &IdxTensor, labels: &IdxTensor, side: usize) -> Result<LabeledDataset> {
    ensure_input!(images.dims.len() == 3, "image tensor must be 3-D");
    ensure_input!(labels.dims.len() == 1, "label tensor must be 1-D");
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    ensure_input!(h == w && h > 0, "images must be square, got {h}x{w}");
    ensure_input!(side >= 1 && side <= h, "cannot resample {h}x{h} to {side}x{side}");
    ensure_shape!(labels.dims[0] == n, "{n} images but {} labels", labels.dims[0]);
    ensure_input!(labels.data.iter().all(|&y| y < 10), "labels must be digits 0-9");

    let mut features = Vec::with_capacity(n * side * side);
    for img in images.data.chunks_exact(h * w) {
        features.extend(resize_area(img, h, side));
    }
    let y = labels.data.iter().map(|&l| f64::from(l)).collect();
    LabeledDataset::new(features, side * side, y, Task::Multiclass { classes: 10 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    #[test]
    fn label_file() {
        let t = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 2]).unwrap();
        assert_eq!(t.dims, vec![2]);
        assert_eq!(t.data, vec![7, 2]);
    }

    #[test]
    fn minimal_image_file() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![1, 2, 2]);
        assert_eq!(write_idx(&t).unwrap(), bytes);
    }

    #[test]
    fn malformed() {
        assert!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 10, 1, 2, 3, 4, 5]).is_err());
        assert!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]).is_err());
        assert!(parse_idx(&[0, 0, 8]).is_err());
        assert!(parse_idx(&[0, 0, 8, 3, 0, 0, 0, 1]).is_err());
        assert!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 5, 6]).is_err());
        assert!(parse_idx(&[0, 0, 8, 3, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff]).is_err());
    }

    #[test]
    fn gzip_input() {
        let raw = [0, 0, 8, 1, 0, 0, 0, 3, 9, 8, 7];
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(parse_idx(&gz).unwrap(), parse_idx(&raw).unwrap());
        assert!(parse_idx(&gz[..gz.len() / 2]).is_err());
    }

    #[test]
    fn area_resize_preserves_mean() {
        let img: Vec<u8> = (0..28 * 28).map(|i| ((i * 37) % 256) as u8).collect();
        let small = resize_area(&img, 28, 16);
        let mean_src = img.iter().map(|&x| f64::from(x)).sum::<f64>() / (28.0 * 28.0 * 255.0);
        let mean_dst = small.iter().sum::<f64>() / 256.0;
        assert!((mean_src - mean_dst).abs() < 1e-12);
        let flat = resize_area(&[255; 16], 4, 2);
        assert!(flat.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }
}
