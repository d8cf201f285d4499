//! Versioned binary container for named fp64 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "SGCKPT\0\0"
//! version  u32
//! meta     u64 length + UTF-8 JSON text
//! count    u64
//! blob*    u32 name length + UTF-8 name, u64 rows, u64 cols, rows·cols f64
//! ```
//!
//! Blobs keep their insertion order and the metadata is stored verbatim, so
//! decoding and re-encoding a file reproduces it byte for byte.

use std::collections::HashMap;
use std::path::Path;

use crate::error::Error;
use crate::linalg::Matrix;
use crate::Result;

pub const MAGIC: &[u8; 8] = b"SGCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    tensors: Vec<(String, Matrix)>,
    index: HashMap<String, usize>,
}

impl Checkpoint {
    pub fn new(meta: impl Into<String>) -> Self {
        Checkpoint {
            meta: meta.into(),
            ..Default::default()
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push((name, value));
        Ok(())
    }

    pub fn extend(&mut self, tensors: impl IntoIterator<Item = (String, Matrix)>) -> Result<()> {
        tensors.into_iter().try_for_each(|(n, m)| self.insert(n, m))
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index.get(name).map(|&i| &self.tensors[i].1)
    }

    /// Owned lookup, the shape expected by the `load_named` methods.
    pub fn lookup(&self) -> impl Fn(&str) -> Option<Matrix> + '_ {
        move |name| self.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.tensors.iter().map(|(n, m)| 20 + n.len() + 8 * m.len()).sum();
        let mut out = Vec::with_capacity(28 + self.meta.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.len()?;
        let meta = r.string(meta_len)?;
        let count = r.u64()?;
        let mut ck = Checkpoint::new(meta);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let rows = r.len()?;
            let cols = r.len()?;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some())
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape {rows}x{cols} overflows")))?;
            let raw = r.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            ck.insert(name, Matrix::from_vec(rows, cols, data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated: need {n} bytes at offset {}", self.pos))
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

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length exceeds address space".into()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new(r#"{"iteration":3}"#);
        ck.insert("w", Matrix::from_rows(&[[1.0, -2.5], [f64::MIN_POSITIVE, 1e300]]).unwrap())
            .unwrap();
        ck.insert("b", Matrix::zeros(1, 3)).unwrap();
        ck.insert("empty", Matrix::zeros(0, 4)).unwrap();
        ck
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let bytes = sample().to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.names().collect::<Vec<_>>(), ["w", "b", "empty"]);
    }

    #[test]
    fn header_is_little_endian() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &15u64.to_le_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut ck = Checkpoint::new("{}");
        ck.insert("a", Matrix::zeros(1, 1)).unwrap();
        assert!(ck.insert("a", Matrix::zeros(1, 1)).is_err());
    }
}
