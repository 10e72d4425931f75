//! On-disk containers.
//!
//! `LTEN` holds a quantized latent tensor with its scales:
//! `"LTEN" | version u8 | C u32 | H u32 | W u32 | K x i32 | K x f32`.
//!
//! `LREC` holds a reconstruction:
//! `"LREC" | version u8 | C u32 | H u32 | W u32 | K x f32`.
//!
//! Everything is little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;
use tritstream_core::tensor::{Shape, TensorError};

pub const LATENT_MAGIC: [u8; 4] = *b"LTEN";
pub const RECON_MAGIC: [u8; 4] = *b"LREC";
pub const FORMAT_VERSION: u8 = 1;
const PREFIX: usize = 4 + 1 + 12;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("file is {got} bytes, expected {expected}")]
    Size { expected: usize, got: usize },
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Quantized latent tensor with per-element scales.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFile {
    pub shape: Shape,
    pub values: Vec<i32>,
    pub sigmas: Vec<f32>,
}

fn write_prefix(out: &mut Vec<u8>, magic: [u8; 4], shape: Shape) {
    out.extend_from_slice(&magic);
    out.push(FORMAT_VERSION);
    for d in [shape.channels, shape.height, shape.width] {
        out.extend_from_slice(&d.to_le_bytes());
    }
}

fn read_prefix(bytes: &[u8], magic: [u8; 4]) -> Result<Shape, FormatError> {
    if bytes.len() < PREFIX {
        return Err(FormatError::Size {
            expected: PREFIX,
            got: bytes.len(),
        });
    }
    if bytes[..4] != magic {
        return Err(FormatError::BadMagic {
            expected: magic,
            found: bytes[..4].to_vec(),
        });
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(bytes[4]));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    Ok(Shape::new(dim(5), dim(9), dim(13))?)
}

fn words(bytes: &[u8]) -> impl Iterator<Item = [u8; 4]> + '_ {
    bytes.chunks_exact(4).map(|c| c.try_into().unwrap())
}

impl LatentFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PREFIX + 8 * self.values.len());
        write_prefix(&mut out, LATENT_MAGIC, self.shape);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in &self.sigmas {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let shape = read_prefix(bytes, LATENT_MAGIC)?;
        let k = shape.len();
        let expected = PREFIX + 8 * k;
        if bytes.len() != expected {
            return Err(FormatError::Size {
                expected,
                got: bytes.len(),
            });
        }
        let body = &bytes[PREFIX..];
        Ok(LatentFile {
            shape,
            values: words(&body[..4 * k]).map(i32::from_le_bytes).collect(),
            sigmas: words(&body[4 * k..]).map(f32::from_le_bytes).collect(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        Ok(fs::write(path, self.to_bytes())?)
    }
}

/// MMSE reconstruction of a latent tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionFile {
    pub shape: Shape,
    pub values: Vec<f32>,
}

impl ReconstructionFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PREFIX + 4 * self.values.len());
        write_prefix(&mut out, RECON_MAGIC, self.shape);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let shape = read_prefix(bytes, RECON_MAGIC)?;
        let expected = PREFIX + 4 * shape.len();
        if bytes.len() != expected {
            return Err(FormatError::Size {
                expected,
                got: bytes.len(),
            });
        }
        Ok(ReconstructionFile {
            shape,
            values: words(&bytes[PREFIX..]).map(f32::from_le_bytes).collect(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        Ok(fs::write(path, self.to_bytes())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LatentFile {
        LatentFile {
            shape: Shape::new(1, 2, 2).unwrap(),
            values: vec![-3, 0, 7, i32::MIN],
            sigmas: vec![0.25, 1.0, 8.0, f32::MIN_POSITIVE],
        }
    }

    #[test]
    fn latent_layout_is_exact() {
        let b = sample().to_bytes();
        assert_eq!(&b[..5], b"LTEN\x01");
        assert_eq!(&b[5..17], &[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[17..21], &(-3i32).to_le_bytes());
        assert_eq!(&b[33..37], &0.25f32.to_le_bytes());
        assert_eq!(b.len(), 17 + 32);
        assert_eq!(LatentFile::from_bytes(&b).unwrap(), sample());
    }

    #[test]
    fn latent_errors() {
        let b = sample().to_bytes();
        assert!(matches!(
            LatentFile::from_bytes(&b[..b.len() - 1]),
            Err(FormatError::Size { .. })
        ));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(LatentFile::from_bytes(&bad), Err(FormatError::BadMagic { .. })));
        let mut bad = b.clone();
        bad[4] = 3;
        assert!(matches!(
            LatentFile::from_bytes(&bad),
            Err(FormatError::UnsupportedVersion(3))
        ));
        let mut bad = b;
        bad[5..9].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(LatentFile::from_bytes(&bad), Err(FormatError::Shape(_))));
    }

    #[test]
    fn reconstruction_roundtrip() {
        let r = ReconstructionFile {
            shape: Shape::new(2, 1, 1).unwrap(),
            values: vec![0.5, -1.25],
        };
        let b = r.to_bytes();
        assert_eq!(&b[..4], b"LREC");
        assert_eq!(ReconstructionFile::from_bytes(&b).unwrap(), r);
        assert!(LatentFile::from_bytes(&b).is_err());
    }
}
