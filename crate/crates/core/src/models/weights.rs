//! Binary weights container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"AGW1"
//! u32    spec JSON length, then the bytes
//! u32    array count
//! per array:
//!   u8   kind: 0 = parameter, 1 = buffer
//!   u16  name length, then UTF-8 name
//!   u8   ndim, then ndim x u32 dims
//!   f64  data (row-major, dims product elements)
//! [32]   SHA-256 of everything above
//! ```
//!
//! Save/load round-trips are bitwise exact; truncation or corruption fails
//! the checksum before any arrays are handed back.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AGW1";

pub(crate) struct RawArray {
    pub kind: u8,
    pub name: String,
    pub value: ArrayD<f64>,
}

pub(crate) const KIND_PARAM: u8 = 0;
pub(crate) const KIND_BUFFER: u8 = 1;

fn err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Weights {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn write_container(path: &Path, spec_json: &[u8], arrays: &[RawArray]) -> Result<()> {
    let mut body = Vec::new();
    body.extend_from_slice(MAGIC);
    body.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    body.extend_from_slice(spec_json);
    body.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        body.push(a.kind);
        let name = a.name.as_bytes();
        body.extend_from_slice(&(name.len() as u16).to_le_bytes());
        body.extend_from_slice(name);
        let shape = a.value.shape();
        body.push(shape.len() as u8);
        for &d in shape {
            body.extend_from_slice(&(d as u32).to_le_bytes());
        }
        // standard layout guaranteed by construction of our stores
        for &v in a.value.iter() {
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&body)?;
    Ok(())
}

pub(crate) fn read_container(path: &Path) -> Result<(Vec<u8>, Vec<RawArray>)> {
    let bytes = fs::read(path).map_err(|e| err(path, format!("cannot read: {e}")))?;
    if bytes.len() < MAGIC.len() + 32 {
        return Err(err(path, "file too short"));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(err(path, "checksum mismatch (file truncated or corrupt)"));
    }

    let mut cur = body;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(err(path, "unexpected end of data"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };

    if take(4)? != MAGIC {
        return Err(err(path, "bad magic (not a weights container)"));
    }
    let spec_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let spec_json = take(spec_len)?.to_vec();
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;

    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = take(1)?[0];
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| err(path, "array name is not UTF-8"))?;
        let ndim = take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let len: usize = dims.iter().product();
        let raw = take(len * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| err(path, format!("bad array shape for '{name}': {e}")))?;
        arrays.push(RawArray { kind, name, value });
    }
    Ok((spec_json, arrays))
}
