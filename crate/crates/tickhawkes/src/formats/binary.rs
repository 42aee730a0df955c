//! Little-endian primitives shared by the binary containers.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Reader<'a, R: Read> {
    inner: R,
    path: &'a Path,
}

impl<'a, R: Read> Reader<'a, R> {
    pub fn new(inner: R, path: &'a Path) -> Self {
        Reader { inner, path }
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::corrupt(self.path, format!("file truncated while reading {what}")),
            _ => Error::io(self.path, e),
        })
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut m = [0u8; 4];
        self.fill(&mut m, "magic")?;
        if &m != expected {
            return Err(Error::format(
                self.path,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&m), String::from_utf8_lossy(expected)),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n.checked_mul(8).ok_or_else(|| Error::corrupt(self.path, "size overflow"))?];
        self.fill(&mut bytes, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut bytes = vec![0u8; n];
        self.fill(&mut bytes, what)?;
        Ok(bytes)
    }

    /// Errors if anything follows the expected payload.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::corrupt(self.path, "trailing bytes after payload")),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }
}

pub(crate) fn put_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}
