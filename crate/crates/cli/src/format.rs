//! MFT1 feature-tensor files.
//!
//! ```text
//! offset  size        content
//! 0       4           b"MFT1"
//! 4       4           M (u32 LE), grid width
//! 8       4           N (u32 LE), grid height
//! 12      4           C (u32 LE), channel count
//! 16      4*M*N*C     f32 LE samples, channel-major, each channel row-major
//! ```
//!
//! The file length must be exactly `16 + 4 M N C` and every sample finite.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use metamorph_core::features::FeatureTensor;

pub const MAGIC: [u8; 4] = *b"MFT1";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected \"MFT1\"")]
    BadMagic { found: Vec<u8> },
    #[error("truncated file: {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("file is {found} bytes, header declares {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("declared size {width}x{height}x{channels} overflows")]
    TooLarge { width: u32, height: u32, channels: u32 },
    #[error("non-finite sample {value} at index {index}")]
    NonFinite { index: usize, value: f32 },
    #[error("invalid tensor: {0}")]
    Tensor(#[from] metamorph_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Decode a complete MFT1 byte buffer.
pub fn decode(bytes: &[u8]) -> Result<FeatureTensor, FormatError> {
    if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let (w, h, c) = (u32_at(bytes, 4), u32_at(bytes, 8), u32_at(bytes, 12));
    let count = (w as usize)
        .checked_mul(h as usize)
        .and_then(|n| n.checked_mul(c as usize))
        .filter(|n| n.checked_mul(4).and_then(|b| b.checked_add(HEADER_LEN)).is_some())
        .ok_or(FormatError::TooLarge {
            width: w,
            height: h,
            channels: c,
        })?;
    let expected = HEADER_LEN + 4 * count;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::LengthMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(count);
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !value.is_finite() {
            return Err(FormatError::NonFinite { index, value });
        }
        data.push(value);
    }
    Ok(FeatureTensor::new(w as usize, h as usize, c as usize, data)?)
}

/// Encode a tensor; fails on non-finite samples or dimensions beyond `u32`.
pub fn encode(tensor: &FeatureTensor) -> Result<Vec<u8>, FormatError> {
    let dim = |v: usize| u32::try_from(v).ok();
    let (w, h, c) = match (dim(tensor.width()), dim(tensor.height()), dim(tensor.channels())) {
        (Some(w), Some(h), Some(c)) => (w, h, c),
        _ => {
            return Err(FormatError::TooLarge {
                width: u32::MAX,
                height: u32::MAX,
                channels: u32::MAX,
            })
        }
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * tensor.data().len());
    out.extend_from_slice(&MAGIC);
    for v in [w, h, c] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (index, &value) in tensor.data().iter().enumerate() {
        if !value.is_finite() {
            return Err(FormatError::NonFinite { index, value });
        }
        out.extend_from_slice(&value.to_le_bytes());
    }
    Ok(out)
}

pub fn read_tensor(mut reader: impl Read) -> Result<FeatureTensor, FormatError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_tensor(mut writer: impl Write, tensor: &FeatureTensor) -> Result<(), FormatError> {
    writer.write_all(&encode(tensor)?)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor, FormatError> {
    decode(&fs::read(path)?)
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &FeatureTensor) -> Result<(), FormatError> {
    fs::write(path, encode(tensor)?)?;
    Ok(())
}

/// File name used for the level tensor of a `width x height` grid.
pub fn level_file_name(width: usize, height: usize, channels: usize) -> String {
    format!("level_{width}x{height}_C{channels}.mft")
}

/// Parse `level_<M>x<N>_C<C>.mft` into `(M, N, C)`.
pub fn parse_level_file_name(name: &str) -> Option<(usize, usize, usize)> {
    let rest = name.strip_prefix("level_")?.strip_suffix(".mft")?;
    let (dims, c) = rest.split_once("_C")?;
    let (w, h) = dims.split_once('x')?;
    Some((w.parse().ok()?, h.parse().ok()?, c.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tensor_is_header_only() {
        let t = FeatureTensor::new(4, 3, 0, vec![]).unwrap();
        let bytes = encode(&t).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode(&bytes).unwrap(), t);
    }

    #[test]
    fn layout_is_little_endian() {
        let t = FeatureTensor::new(2, 1, 1, vec![1.0, -2.5]).unwrap();
        let bytes = encode(&t).unwrap();
        assert_eq!(&bytes[..4], b"MFT1");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn rejects_nan() {
        let t = FeatureTensor::new(1, 1, 1, vec![f32::NAN]).unwrap();
        assert!(matches!(encode(&t), Err(FormatError::NonFinite { index: 0, .. })));
        let mut bytes = encode(&FeatureTensor::new(1, 1, 1, vec![0.0]).unwrap()).unwrap();
        bytes[16..20].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(FormatError::NonFinite { .. })));
    }

    #[test]
    fn level_names() {
        assert_eq!(level_file_name(64, 32, 512), "level_64x32_C512.mft");
        assert_eq!(parse_level_file_name("level_64x32_C512.mft"), Some((64, 32, 512)));
        assert_eq!(parse_level_file_name("level_64_C512.mft"), None);
        assert_eq!(parse_level_file_name("level_64x32_C512.bin"), None);
    }
}
