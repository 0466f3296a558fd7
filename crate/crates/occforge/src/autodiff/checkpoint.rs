//! Parameter checkpoint file.
//!
//! Layout (little-endian):
//!   magic "OCFG", version u32, then repeated records of
//!   (path length u32, UTF-8 path bytes, rank u32, extents u64 x rank,
//!    f64 payload of product(extents) values) until end of file.

use std::io::{Read, Write};
use std::path::Path;

use super::store::{Param, ParameterStore};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"OCFG";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_checkpoint_to(store, &mut f)
}

pub fn write_checkpoint_to(store: &ParameterStore, w: &mut impl Write) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (path, param) in store.iter() {
        w.write_all(&(path.len() as u32).to_le_bytes())?;
        w.write_all(path.as_bytes())?;
        w.write_all(&(param.shape.len() as u32).to_le_bytes())?;
        for &e in &param.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &param.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read records back. The seed is not part of the format; the caller
/// supplies it when rebuilding a store.
pub fn read_checkpoint(path: &Path, seed: u64) -> Result<ParameterStore> {
    let mut f = std::fs::File::open(path)?;
    read_checkpoint_from(&mut f, seed)
}

pub fn read_checkpoint_from(r: &mut impl Read, seed: u64) -> Result<ParameterStore> {
    let mut magic = [0u8; 4];
    read_exact_or(r, &mut magic, "checkpoint magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
    }
    let version = read_u32(r, "checkpoint version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadVersion(version));
    }
    let mut params = Vec::new();
    loop {
        let mut len4 = [0u8; 4];
        match r.read(&mut len4)? {
            0 => break,
            4 => {}
            n => {
                r.read_exact(&mut len4[n..]).map_err(|_| Error::Truncated("checkpoint record header"))?;
            }
        }
        let path_len = u32::from_le_bytes(len4) as usize;
        let mut path_bytes = vec![0u8; path_len];
        read_exact_or(r, &mut path_bytes, "checkpoint path")?;
        let path = String::from_utf8(path_bytes)
            .map_err(|_| Error::InvalidArg("checkpoint path is not UTF-8".into()))?;
        let rank = read_u32(r, "checkpoint rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact_or(r, &mut b, "checkpoint extent")?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            read_exact_or(r, &mut b, "checkpoint payload")?;
            data.push(f64::from_le_bytes(b));
        }
        params.push((path, Param { shape, data }));
    }
    Ok(ParameterStore::from_params(seed, params))
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Truncated(what))
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
