//! Flat binary parameter dump/load.
//!
//! Layout (all little-endian): magic `OGRD`, version u32, scalar width u8
//! (4 or 8), tensor count u32, then a name/shape table (name length u16 +
//! bytes, rank u8, dims u32 each), then tensor payloads in declaration
//! order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::ParamTensor;
use super::NnError;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"OGRD";
const VERSION: u32 = 1;

pub fn save_params<T: Real>(path: &Path, params: &[ParamTensor<T>]) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let width = std::mem::size_of::<T>() as u8;
    w.write_all(&[width])?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.data.rank() as u8])?;
        for &d in p.data.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for p in params {
        match width {
            4 => {
                for &v in p.data.data() {
                    w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
                }
            }
            _ => {
                for &v in p.data.data() {
                    w.write_all(&v.to_f64().to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a dump into matching parameters; names and shapes must agree with
/// the declaration order.
pub fn load_params<T: Real>(path: &Path, params: &mut [ParamTensor<T>]) -> Result<(), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::BadDump("wrong magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::BadDump(format!("unsupported version {version}")));
    }
    let mut width = [0u8; 1];
    r.read_exact(&mut width)?;
    let width = width[0];
    if width != 4 && width != 8 {
        return Err(NnError::BadDump(format!("bad scalar width {width}")));
    }
    let count = read_u32(&mut r)? as usize;
    if count != params.len() {
        return Err(NnError::BadDump(format!(
            "dump has {count} tensors, model has {}",
            params.len()
        )));
    }
    for p in params.iter() {
        let name_len = read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| NnError::BadDump("name not utf-8".into()))?;
        if name != p.name {
            return Err(NnError::BadDump(format!(
                "tensor name mismatch: dump '{name}', model '{}'",
                p.name
            )));
        }
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            dims.push(read_u32(&mut r)? as usize);
        }
        if dims != p.data.shape() {
            return Err(NnError::BadDump(format!(
                "shape mismatch for '{name}': dump {dims:?}, model {:?}",
                p.data.shape()
            )));
        }
    }
    for p in params.iter_mut() {
        for slot in p.data.data_mut() {
            *slot = match width {
                4 => {
                    let mut b = [0u8; 4];
                    r.read_exact(&mut b)?;
                    T::from_f64(f32::from_le_bytes(b) as f64)
                }
                _ => {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    T::from_f64(f64::from_le_bytes(b))
                }
            };
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16(r: &mut impl Read) -> Result<u16, NnError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}
