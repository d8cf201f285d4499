//! IDX reader (MNIST). Files ending in `.gz` are decompressed on the fly.

use std::io::Read;
use std::path::Path;

use super::{Dataset, DatasetKind, Provenance};
use crate::linalg::Matrix;
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        expected: at + 4,
        actual: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let expected = header + len;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(&bytes[header..expected])
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Images as rows of pixels scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = read_all(path)?;
    check_magic(&bytes, IMAGE_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = payload(&bytes, 16, count * rows * cols, path)?;
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Matrix::from_vec(count, rows * cols, data)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_all(path)?;
    check_magic(&bytes, LABEL_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, count, path)?.iter().map(|&l| usize::from(l)).collect())
}

pub fn load_mnist(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = read_idx_images(images)?;
    let l = read_idx_labels(labels)?;
    if x.rows() != l.len() {
        return Err(Error::CountMismatch {
            images: x.rows(),
            labels: l.len(),
        });
    }
    let d = x.cols();
    Dataset::new(x, l, 10, Provenance::plain(DatasetKind::Mnist, d, 0))
}
