//! Parameter and checkpoint files.
//!
//! Layout (little-endian): magic `IMCP`, version `u32`, header length `u32`,
//! JSON header `{config, kind}`, tensor count `u32`, then per tensor in
//! canonical order: name length `u32`, UTF-8 name, rank `u32`, dims `u32 *
//! rank`, `f32` payload. A checkpoint appends magic `OPTS`, the optimizer
//! step `u64`, the moment count `u32` and both Adam moment vectors as `f64`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ModelConfig, ModelKind, ModelParams};

const PARAM_MAGIC: &[u8; 4] = b"IMCP";
const PARAM_VERSION: u32 = 1;
const OPT_MAGIC: &[u8; 4] = b"OPTS";

/// Adam moments, flattened over tensors in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    kind: ModelKind,
}

pub fn write_params<W: Write>(mut out: W, params: &ModelParams) -> Result<()> {
    out.write_all(PARAM_MAGIC)?;
    out.write_all(&PARAM_VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(&Header { config: params.config.clone(), kind: params.kind })
        .expect("header serializes");
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    let tensors = params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.name.len() as u32).to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &t.data {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format(format!("truncated {what}: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "u32")?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_params<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != PARAM_MAGIC {
        return Err(Error::Format("not a parameter file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != PARAM_VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut header = vec![0u8; len];
    read_exact(&mut r, &mut header, "header")?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| Error::Format(format!("bad parameter header: {e}")))?;
    let mut params = ModelParams::zeros(&header.config, header.kind);
    let count = read_u32(&mut r)? as usize;
    let mut tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Format(format!("expected {} tensors, file has {count}", tensors.len())));
    }
    for t in tensors.iter_mut() {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name, "tensor name")?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        if name != t.name || shape != t.shape {
            return Err(Error::Format(format!(
                "tensor {name} {shape:?} does not match expected {} {:?}",
                t.name, t.shape
            )));
        }
        let mut buf = vec![0u8; t.data.len() * 4];
        read_exact(&mut r, &mut buf, "tensor payload")?;
        for (v, b) in t.data.iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    drop(tensors);
    Ok(params)
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &ModelParams, opt: &OptimizerState) -> Result<()> {
    write_params(&mut out, params)?;
    out.write_all(OPT_MAGIC)?;
    out.write_all(&opt.step.to_le_bytes())?;
    out.write_all(&(opt.first_moment.len() as u32).to_le_bytes())?;
    for v in opt.first_moment.iter().chain(&opt.second_moment) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads parameters and, if present, the optimizer section.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, Option<OptimizerState>)> {
    let params = read_params(&mut r)?;
    let mut magic = [0u8; 4];
    match r.read(&mut magic)? {
        0 => return Ok((params, None)),
        4 => {}
        n => {
            r.read_exact(&mut magic[n..]).map_err(|e| Error::Format(format!("truncated optimizer magic: {e}")))?;
        }
    }
    if &magic != OPT_MAGIC {
        return Err(Error::Format("unknown trailing section".into()));
    }
    let mut step = [0u8; 8];
    read_exact(&mut r, &mut step, "optimizer step")?;
    let len = read_u32(&mut r)? as usize;
    if len != params.parameter_count() {
        return Err(Error::Format("optimizer state does not match parameter count".into()));
    }
    let mut buf = vec![0u8; len * 16];
    read_exact(&mut r, &mut buf, "optimizer moments")?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let (m, v) = vals.split_at(len);
    Ok((
        params,
        Some(OptimizerState { step: u64::from_le_bytes(step), first_moment: m.to_vec(), second_moment: v.to_vec() }),
    ))
}

/// Writes to a sibling temp file, then renames over `path`.
fn atomic_write(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write(&mut out)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_params(path: impl AsRef<Path>, params: &ModelParams, opt: Option<&OptimizerState>) -> Result<()> {
    atomic_write(path.as_ref(), |out| match opt {
        Some(o) => write_checkpoint(out, params, o),
        None => write_params(out, params),
    })
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(ModelParams, Option<OptimizerState>)> {
    read_checkpoint(BufReader::new(File::open(path.as_ref())?))
}
