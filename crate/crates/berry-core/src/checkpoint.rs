//! Versioned binary checkpoint format for Q-networks.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size          field
//! ------  ----          -----
//! 0       4             magic "BQNC"
//! 4       4             format version, u32 (currently 1)
//! 8       8             init seed, u64
//! 16      8             training step, u64
//! 24      4             arch length n, u32
//! 28      4*n           arch widths, u32 each
//! then, for each of the n-1 layers, in order:
//!         4*out*in      weights, f32 little-endian, row-major (out × in)
//!         4*out         biases, f32 little-endian
//! ```
//!
//! The file ends exactly after the last layer; trailing bytes are an
//! integrity error. Round-trips are bitwise-lossless.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::qnet::{DenseLayer, QNetwork};

pub const MAGIC: [u8; 4] = *b"BQNC";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(net: &QNetwork, training_step: u64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(28 + 4 * net.arch.len() + 4 * net.param_count());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&net.seed.to_le_bytes());
    buf.extend_from_slice(&training_step.to_le_bytes());
    buf.extend_from_slice(&(net.arch.len() as u32).to_le_bytes());
    for &w in &net.arch {
        buf.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for layer in &net.layers {
        for &w in &layer.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for &b in &layer.biases {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<(QNetwork, u64)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(Error::Integrity(format!(
            "bad checkpoint magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "unsupported checkpoint format version {version} (supported: {FORMAT_VERSION})"
        )));
    }
    let seed = cur.u64()?;
    let training_step = cur.u64()?;
    let n = cur.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Integrity(format!("implausible arch length {n}")));
    }
    let mut arch = Vec::with_capacity(n);
    for _ in 0..n {
        let w = cur.u32()? as usize;
        if w == 0 {
            return Err(Error::Integrity("zero layer width in checkpoint".into()));
        }
        arch.push(w);
    }
    let mut layers = Vec::with_capacity(n - 1);
    for pair in arch.windows(2) {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            weights.push(cur.f32()?);
        }
        let mut biases = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            biases.push(cur.f32()?);
        }
        layers.push(DenseLayer {
            in_dim,
            out_dim,
            weights,
            biases,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Integrity(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - cur.pos
        )));
    }
    Ok((
        QNetwork {
            arch,
            layers,
            seed,
        },
        training_step,
    ))
}

pub fn write(net: &QNetwork, training_step: u64, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(net, training_step)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(QNetwork, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Integrity(format!(
                "truncated checkpoint: needed {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise_lossless() {
        let net = QNetwork::init(&[28, 64, 64, 25], 1234).unwrap();
        let bytes = to_bytes(&net, 60_000);
        let (decoded, step) = from_bytes(&bytes).unwrap();
        assert_eq!(step, 60_000);
        assert_eq!(decoded.seed, 1234);
        assert_eq!(decoded.arch, net.arch);
        // bitwise: re-serialize and compare bytes
        assert_eq!(to_bytes(&decoded, step), bytes);
        assert_eq!(decoded, net);
    }

    #[test]
    fn rejects_bad_magic_version_truncation_trailing() {
        let net = QNetwork::init(&[3, 2], 9).unwrap();
        let good = to_bytes(&net, 5);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(from_bytes(&bad_magic), Err(Error::Integrity(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 99;
        assert!(matches!(from_bytes(&bad_version), Err(Error::Integrity(_))));

        assert!(matches!(
            from_bytes(&good[..good.len() - 1]),
            Err(Error::Integrity(_))
        ));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(from_bytes(&trailing), Err(Error::Integrity(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = QNetwork::init(&[4, 8, 3], 77).unwrap();
        write(&net, 42, &path).unwrap();
        let (decoded, step) = read(&path).unwrap();
        assert_eq!(decoded, net);
        assert_eq!(step, 42);
    }
}
