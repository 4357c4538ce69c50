//! Binary checkpoint format.
//!
//! ```text
//! "HOCK"  u32 version
//! u32 header length, JSON-encoded EncoderArch
//! u32 tensor count, then per tensor: u32 name length, name, u32 rows, u32 cols
//! f32 payload of every tensor, row-major, in directory order
//! ```
//!
//! All integers and floats are little-endian. Tensors are matched by name on
//! load, so extra tensors are ignored and directory order is free.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BackboneParams, EncoderArch};
use crate::autodiff::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"HOCK";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_bytes(r: &mut impl Read, len: u32) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len as usize {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    Ok(buf)
}

pub fn save_checkpoint(out: impl Write, params: &BackboneParams) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let header = serde_json::to_vec(params.arch())?;
    put_u32(&mut w, header.len() as u32)?;
    w.write_all(&header)?;
    put_u32(&mut w, params.tensors().len() as u32)?;
    for t in params.tensors() {
        put_u32(&mut w, t.name.len() as u32)?;
        w.write_all(t.name.as_bytes())?;
        put_u32(&mut w, t.value.rows as u32)?;
        put_u32(&mut w, t.value.cols as u32)?;
    }
    for t in params.tensors() {
        for &v in &t.value.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(input: impl Read) -> Result<BackboneParams> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = get_u32(&mut r)?;
    let arch: EncoderArch = serde_json::from_slice(&get_bytes(&mut r, header_len)?)?;
    let count = get_u32(&mut r)?;
    let mut directory = Vec::new();
    for _ in 0..count {
        let name_len = get_u32(&mut r)?;
        let name = String::from_utf8(get_bytes(&mut r, name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rows = get_u32(&mut r)? as usize;
        let cols = get_u32(&mut r)? as usize;
        directory.push((name, rows, cols));
    }
    let mut named = HashMap::new();
    for (name, rows, cols) in directory {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
        let bytes = get_bytes(&mut r, len as u32)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        named.insert(name, Matrix::from_vec(rows, cols, data));
    }
    BackboneParams::from_named(arch, named)
}

pub fn save_checkpoint_file(path: impl AsRef<Path>, params: &BackboneParams) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path)
        .map_err(|e| Error::FileError { path: path.to_path_buf(), reason: e.to_string() })?;
    save_checkpoint(file, params)
}

pub fn load_checkpoint_file(path: impl AsRef<Path>) -> Result<BackboneParams> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::FileError { path: path.to_path_buf(), reason: e.to_string() })?;
    load_checkpoint(file)
}
