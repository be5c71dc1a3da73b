//! Checkpoints: a text manifest (name, shape, offset per tensor, plus
//! free-form metadata) followed by raw little-endian f64 data.

use std::collections::BTreeMap;
use std::path::Path;

use super::{atomic_write, parse_err};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::TensorBase;

const MAGIC: &str = "INSTANET-CKPT 1";

pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

/// Serialize named tensors plus metadata (e.g. the hierarchy hash and the
/// fc2 reshape order) into one atomic file.
pub fn save<S: Scalar>(
    entries: &[(String, TensorBase<S>)],
    meta: &[(String, String)],
    path: &Path,
) -> Result<()> {
    let mut header = format!("{MAGIC}\n");
    for (k, v) in meta {
        if k.contains(char::is_whitespace) {
            return Err(Error::config(format!("metadata key {k:?} contains whitespace")));
        }
        header.push_str(&format!("meta {k} {v}\n"));
    }
    let mut offset = 0usize;
    for (name, t) in entries {
        if name.contains(char::is_whitespace) {
            return Err(Error::config(format!("tensor name {name:?} contains whitespace")));
        }
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!(
            "tensor {name} {} {offset}\n",
            if shape.is_empty() { "scalar".into() } else { shape.join(",") }
        ));
        offset += t.numel();
    }
    header.push_str(&format!("data {offset}\n"));

    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 8);
    for (_, t) in entries {
        for v in t.to_vec() {
            bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    // the header is line-oriented text; the payload starts right after the
    // newline that ends the "data N" line
    let mut meta = BTreeMap::new();
    let mut manifest: Vec<(String, Vec<usize>, usize)> = Vec::new();
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut total: Option<usize> = None;

    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .ok_or_else(|| parse_err(path, line_no + 1, "unterminated header line"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| parse_err(path, line_no + 1, "non-ASCII header"))?;
        pos = end + 1;
        line_no += 1;

        if line_no == 1 {
            if line != MAGIC {
                return Err(parse_err(path, 1, format!("bad magic {line:?}")));
            }
            continue;
        }
        let mut tok = line.splitn(2, ' ');
        match tok.next() {
            Some("meta") => {
                let rest = tok.next().unwrap_or("");
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| parse_err(path, line_no, "meta needs key and value"))?;
                meta.insert(k.to_string(), v.to_string());
            }
            Some("tensor") => {
                let rest = tok.next().unwrap_or("");
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(parse_err(path, line_no, "tensor line needs name, shape, offset"));
                }
                let shape: Vec<usize> = if parts[1] == "scalar" {
                    vec![]
                } else {
                    parts[1]
                        .split(',')
                        .map(|d| d.parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(path, line_no, format!("bad shape: {e}")))?
                };
                let offset: usize = parts[2]
                    .parse()
                    .map_err(|e| parse_err(path, line_no, format!("bad offset: {e}")))?;
                manifest.push((parts[0].to_string(), shape, offset));
            }
            Some("data") => {
                let n: usize = tok
                    .next()
                    .unwrap_or("")
                    .parse()
                    .map_err(|e| parse_err(path, line_no, format!("bad data count: {e}")))?;
                total = Some(n);
                break;
            }
            other => {
                return Err(parse_err(path, line_no, format!("unknown record {other:?}")));
            }
        }
    }

    let total = total.ok_or_else(|| parse_err(path, line_no, "missing data record"))?;
    let payload = &bytes[pos..];
    if payload.len() != total * 8 {
        return Err(parse_err(
            path,
            line_no,
            format!("expected {} payload bytes, found {}", total * 8, payload.len()),
        ));
    }

    let mut tensors = BTreeMap::new();
    for (name, shape, offset) in manifest {
        let n: usize = shape.iter().product::<usize>().max(1);
        let n = if shape.is_empty() { 1 } else { n };
        if (offset + n) * 8 > payload.len() {
            return Err(parse_err(path, 0, format!("tensor {name} overruns payload")));
        }
        let data: Vec<f64> = payload[offset * 8..(offset + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, (shape, data));
    }
    Ok(Checkpoint { meta, tensors })
}

/// Copy checkpoint values into live tensors by name; every destination must
/// be present with a matching shape.
pub fn restore_into<S: Scalar>(
    ckpt: &Checkpoint,
    entries: &[(String, TensorBase<S>)],
) -> Result<()> {
    for (name, t) in entries {
        let (shape, data) = ckpt
            .tensors
            .get(name)
            .ok_or_else(|| Error::config(format!("checkpoint is missing tensor {name}")))?;
        if *shape != t.shape() {
            return Err(Error::config(format!(
                "checkpoint tensor {name} has shape {shape:?}, model expects {:?}",
                t.shape()
            )));
        }
        let mut dst = t.data_mut();
        for (d, v) in dst.iter_mut().zip(data) {
            *d = S::c(*v);
        }
    }
    Ok(())
}
