//! Binary parameter checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic       8 bytes   "SLSRCKPT"
//! version     u32       FORMAT_VERSION
//! d           u64       embedding dimension
//! vocab       u64       item rows of the embedding table (V, padding included)
//! l           u64       max session length
//! k_max       u64       max sessions
//! config_len  u64
//! config      config_len bytes, UTF-8 resolved run configuration
//! n_params    u64
//! n_params times:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   rows      u64
//!   cols      u64
//!   payload   rows * cols f64, row-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::matrix::Matrix;
use super::params::ParamStore;

pub const MAGIC: &[u8; 8] = b"SLSRCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub d: u64,
    pub vocab: u64,
    pub l: u64,
    pub k_max: u64,
    pub config: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        for v in [h.d, h.vocab, h.l, h.k_max] {
            w.write_u64::<LittleEndian>(v)?;
        }
        w.write_u64::<LittleEndian>(h.config.len() as u64)?;
        w.write_all(h.config.as_bytes())?;
        w.write_u64::<LittleEndian>(self.params.len() as u64)?;
        for id in self.params.ids() {
            let name = self.params.name(id);
            let value = self.params.value(id);
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u64::<LittleEndian>(value.rows() as u64)?;
            w.write_u64::<LittleEndian>(value.cols() as u64)?;
            for &x in value.data() {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
        }
        let d = r.read_u64::<LittleEndian>()?;
        let vocab = r.read_u64::<LittleEndian>()?;
        let l = r.read_u64::<LittleEndian>()?;
        let k_max = r.read_u64::<LittleEndian>()?;
        let config = read_string(&mut r, r_len_u64)?;
        let n = r.read_u64::<LittleEndian>()?;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = read_string(&mut r, r_len_u32)?;
            let rows = r.read_u64::<LittleEndian>()? as usize;
            let cols = r.read_u64::<LittleEndian>()? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&n| n <= 1 << 32)
                .ok_or_else(|| CheckpointError::Malformed(format!("`{name}` claims {rows}x{cols}")))?;
            let mut data = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            params
                .add(name, Matrix::from_vec(rows, cols, data))
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        }
        Ok(Checkpoint { header: CheckpointHeader { d, vocab, l, k_max, config }, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn r_len_u64<R: Read>(r: &mut R) -> io::Result<usize> {
    r.read_u64::<LittleEndian>().map(|n| n as usize)
}

fn r_len_u32<R: Read>(r: &mut R) -> io::Result<usize> {
    r.read_u32::<LittleEndian>().map(|n| n as usize)
}

fn read_string<R: Read>(r: &mut R, len: fn(&mut R) -> io::Result<usize>) -> Result<String, CheckpointError> {
    let n = len(r)?;
    if n > 1 << 24 {
        return Err(CheckpointError::Malformed(format!("string length {n}")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.add("item_embedding", Matrix::from_fn(3, 2, |r, c| r as f64 - 0.5 * c as f64)).unwrap();
        params.add("fusion.bias", Matrix::scalar(-0.25)).unwrap();
        Checkpoint {
            header: CheckpointHeader { d: 2, vocab: 3, l: 4, k_max: 5, config: "d=2\nseed=7\n".into() },
            params,
        }
    }

    #[test]
    fn layout_is_little_endian_and_round_trips() {
        let ckpt = sample();
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(&bytes[8..12], &FORMAT_VERSION.to_le_bytes());
        assert_eq!(&bytes[12..20], &2u64.to_le_bytes());

        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.header, ckpt.header);
        for id in ckpt.params.ids() {
            assert_eq!(back.params.name(id), ckpt.params.name(id));
            assert_eq!(back.params.value(id), ckpt.params.value(id));
        }
    }

    #[test]
    fn version_mismatch_reports_both_versions() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = Checkpoint::read_from(bytes.as_slice()).unwrap_err();
        assert!(matches!(err, CheckpointError::Version { found: 7, expected: FORMAT_VERSION }));
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains(&FORMAT_VERSION.to_string()));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(Checkpoint::read_from(&b"NOTACKPT...."[..]), Err(CheckpointError::BadMagic)));
    }
}
