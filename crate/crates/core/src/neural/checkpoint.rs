//! Binary model container.
//!
//! Layout (little-endian): magic `PFCK`, `u32` version, `u32` entry count,
//! then per entry `u32` name length, UTF-8 name, `u32` rank, `u32` dims,
//! `f64` values. Batch-norm running statistics are stored as
//! `<prefix>.running_mean` / `<prefix>.running_var` entries and metadata as
//! `meta.*` scalars. A trailing `u8` flags an optimiser section: `u64` step,
//! then first and second moments in parameter order (values only).

use super::{NeuralError, ParamSet};
use crate::tensor::{AdamState, BatchNormStats, Tensor};
use indexmap::IndexMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"PFCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub adam: Option<AdamState>,
    pub meta: IndexMap<String, f64>,
}

impl Checkpoint {
    pub fn new(params: ParamSet) -> Self {
        Self {
            params,
            adam: None,
            meta: IndexMap::new(),
        }
    }

    pub fn meta_usize(&self, key: &str) -> Option<usize> {
        self.meta.get(key).map(|v| *v as usize)
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_entry(w: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    put_u32(w, name.len() as u32);
    w.extend_from_slice(name.as_bytes());
    put_u32(w, shape.len() as u32);
    for &d in shape {
        put_u32(w, d as u32);
    }
    for v in values {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    put_u32(&mut w, VERSION);
    let count = ck.params.tensors.len() + 2 * ck.params.running.len() + ck.meta.len();
    put_u32(&mut w, count as u32);
    for (name, t) in &ck.params.tensors {
        put_entry(&mut w, name, t.shape(), t.data());
    }
    for (name, s) in &ck.params.running {
        put_entry(&mut w, &format!("{name}.running_mean"), &[s.mean.len()], &s.mean);
        put_entry(&mut w, &format!("{name}.running_var"), &[s.var.len()], &s.var);
    }
    for (k, v) in &ck.meta {
        put_entry(&mut w, &format!("meta.{k}"), &[], &[*v]);
    }
    match &ck.adam {
        None => w.push(0),
        Some(a) => {
            w.push(1);
            w.extend_from_slice(&a.step.to_le_bytes());
            for t in a.m.iter().chain(&a.v) {
                for v in t.data() {
                    w.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    w
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        if self.pos + n > self.buf.len() {
            return Err(NeuralError::Checkpoint(format!("truncated file at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NeuralError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NeuralError::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint, NeuralError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NeuralError::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let count = r.u32()? as usize;
    let mut params = ParamSet::default();
    let mut run_mean: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut run_var: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut meta = IndexMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| NeuralError::Checkpoint("entry name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let values = r.f64s(shape.iter().product())?;
        if let Some(k) = name.strip_prefix("meta.") {
            meta.insert(k.to_string(), values[0]);
        } else if let Some(k) = name.strip_suffix(".running_mean") {
            run_mean.insert(k.to_string(), values);
        } else if let Some(k) = name.strip_suffix(".running_var") {
            run_var.insert(k.to_string(), values);
        } else {
            params.insert(name, Tensor::new(shape, values)?);
        }
    }
    for (k, mean) in run_mean {
        let var = run_var
            .shift_remove(&k)
            .ok_or_else(|| NeuralError::Checkpoint(format!("{k}: running mean without variance")))?;
        params.running.insert(k, BatchNormStats { mean, var });
    }
    if let Some(k) = run_var.keys().next() {
        return Err(NeuralError::Checkpoint(format!("{k}: running variance without mean")));
    }
    let adam = match r.take(1)?[0] {
        0 => None,
        1 => {
            let step = r.u64()?;
            let read = |r: &mut Reader| -> Result<Vec<Tensor>, NeuralError> {
                params
                    .tensors
                    .values()
                    .map(|t| Ok(Tensor::new(t.shape().to_vec(), r.f64s(t.numel())?)?))
                    .collect()
            };
            let m = read(&mut r)?;
            let v = read(&mut r)?;
            Some(AdamState { step, m, v })
        }
        f => return Err(NeuralError::Checkpoint(format!("bad optimiser flag {f}"))),
    };
    if r.pos != buf.len() {
        return Err(NeuralError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Checkpoint { params, adam, meta })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), NeuralError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NeuralError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}
