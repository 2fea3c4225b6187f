//! Flat binary checkpoint format.
//!
//! ```text
//! magic   "DTCK"
//! version u32 LE (currently 1)
//! count   u32 LE, number of tensors
//! per tensor:
//!   name_len u32 LE, name UTF-8 bytes
//!   rank     u32 LE
//!   dims     rank x u64 LE
//!   values   prod(dims) x f64 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::params::ParamStore;
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DTCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub fn write_checkpoint<W: Write>(params: &ParamStore, mut w: W) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 4096 {
            return Err(CheckpointError::Corrupt(format!("name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| CheckpointError::Corrupt(format!("{name}: dims {dims:?}")))?;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| CheckpointError::Corrupt(format!("{name}: {e}")))?;
        store.insert(name, t);
    }
    Ok(store)
}

pub fn save_checkpoint(params: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(params, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, CheckpointError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
