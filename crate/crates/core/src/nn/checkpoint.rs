//! `VPRW` checkpoints: metadata, a named-tensor table and optional AdamW
//! state.
//!
//! ```text
//! "VPRW" | version u32
//! meta count u32 | (key: u16 len + utf8, value: u32 len + utf8)*
//! tensor count u32 | (name: u16 len + utf8, ndims u32, dims u64*, data f64*)*
//! has_optimizer u8 | [step u64, lr, beta1, beta2, eps, wd f64, (m f64*, v f64*) per tensor]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adamw::{AdamWConfig, AdamWState};
use super::tensor::Tensor;
use crate::binio::{put_f64, put_f64_slice, put_long_str, put_short_str, put_u32, put_u64, LeReader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VPRW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
    pub optimizer: Option<AdamWState>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, ckpt.meta.len() as u32)?;
    for (k, v) in &ckpt.meta {
        put_short_str(w, k)?;
        put_long_str(w, v)?;
    }
    put_u32(w, ckpt.tensors.len() as u32)?;
    for (name, t) in &ckpt.tensors {
        put_short_str(w, name)?;
        put_u32(w, t.shape().len() as u32)?;
        for &d in t.shape() {
            put_u64(w, d as u64)?;
        }
        put_f64_slice(w, t.data())?;
    }
    match &ckpt.optimizer {
        None => w.write_all(&[0])?,
        Some(opt) => {
            if opt.m.len() != ckpt.tensors.len() {
                return Err(Error::shape("optimizer state does not cover the tensor table"));
            }
            w.write_all(&[1])?;
            put_u64(w, opt.step)?;
            let c = opt.config;
            for v in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
                put_f64(w, v)?;
            }
            for (m, v) in opt.m.iter().zip(&opt.v) {
                put_f64_slice(w, m)?;
                put_f64_slice(w, v)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut r = LeReader::new(r);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let meta_count = r.u32()?;
    let mut meta = Vec::with_capacity(meta_count as usize);
    for _ in 0..meta_count {
        let k = r.short_str()?;
        let v = r.long_str()?;
        meta.push((k, v));
    }
    let tensor_count = r.u32()?;
    let mut tensors = Vec::with_capacity(tensor_count as usize);
    for _ in 0..tensor_count {
        let name = r.short_str()?;
        let ndims = r.u32()?;
        let mut shape = Vec::with_capacity(ndims as usize);
        for _ in 0..ndims {
            shape.push(r.u64()? as usize);
        }
        let n = shape.iter().product();
        let data = r.f64_vec(n)?;
        tensors.push((name, Tensor::new(shape, data)?));
    }
    let at = r.offset();
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let config =
                AdamWConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()?, weight_decay: r.f64()? };
            let mut m = Vec::with_capacity(tensors.len());
            let mut v = Vec::with_capacity(tensors.len());
            for (_, t) in &tensors {
                m.push(r.f64_vec(t.len())?);
                v.push(r.f64_vec(t.len())?);
            }
            Some(AdamWState { config, step, m, v })
        }
        other => return Err(Error::format(at, format!("bad optimizer flag {other}"))),
    };
    Ok(Checkpoint { meta, tensors, optimizer })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
