//! Binary weight files and parameter checksums.
//!
//! Format (little-endian): magic `CSW1`, u32 tensor count, then per tensor:
//! u32 name length, name bytes, u32 ndim, u64 dims, f64 data in C order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::layers::Params;

const MAGIC: &[u8; 4] = b"CSW1";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a weights file (bad magic)")]
    BadMagic,
    #[error("weights file is corrupt: {0}")]
    Corrupt(String),
    #[error("parameter set mismatch: {0}")]
    Mismatch(String),
}

/// Writes all parameters of `model` to `path`.
pub fn save<P: Params + ?Sized>(model: &P, path: &Path) -> Result<(), WeightsError> {
    let mut entries: Vec<(String, ArrayD<f64>)> = Vec::new();
    model.visit(&mut |name, arr| entries.push((name.to_string(), arr.clone())));

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, arr) in &entries {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(arr.ndim() as u32).to_le_bytes())?;
        for &d in arr.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in arr.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a weights file into a name -> tensor map.
pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, ArrayD<f64>>, WeightsError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| WeightsError::Corrupt("non-utf8 tensor name".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| WeightsError::Corrupt(format!("shape mismatch for {name}: {e}")))?;
        out.insert(name, arr);
    }
    Ok(out)
}

/// Loads a weights file into an existing model; names and shapes must match.
pub fn load<P: Params + ?Sized>(model: &mut P, path: &Path) -> Result<(), WeightsError> {
    let tensors = read_tensors(path)?;
    let mut missing = Vec::new();
    let mut expected = 0usize;
    model.visit_mut(&mut |name, arr| {
        expected += 1;
        match tensors.get(name) {
            Some(t) if t.shape() == arr.shape() => arr.assign(t),
            Some(t) => missing.push(format!(
                "{name}: shape {:?} vs file {:?}",
                arr.shape(),
                t.shape()
            )),
            None => missing.push(format!("{name}: absent from file")),
        }
    });
    if !missing.is_empty() {
        return Err(WeightsError::Mismatch(missing.join("; ")));
    }
    if tensors.len() != expected {
        return Err(WeightsError::Mismatch(format!(
            "file has {} tensors, model expects {expected}",
            tensors.len()
        )));
    }
    Ok(())
}

/// Content hash over all parameters (names, shapes, raw values).
pub fn checksum<P: Params + ?Sized>(model: &P) -> String {
    let mut hasher = Sha256::new();
    model.visit(&mut |name, arr| {
        hasher.update(name.as_bytes());
        for &d in arr.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for &v in arr.iter() {
            hasher.update(v.to_le_bytes());
        }
    });
    hex_string(&hasher.finalize())
}

/// Content hash of an arbitrary byte string (run configs, manifests).
pub fn content_hash(bytes: &[u8]) -> String {
    hex_string(&Sha256::digest(bytes))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
