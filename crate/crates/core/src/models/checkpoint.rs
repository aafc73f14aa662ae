//! Binary checkpoint format.
//!
//! ```text
//! "IMX1" | version u16 | config len u32 | config utf-8
//! | tensor count u32 | per tensor: name len u32, name, rank u8, dims u32*, f32 data
//! ```
//! All integers and floats little-endian. Tensors are parameters followed by
//! non-trainable buffers (batch-norm running statistics).
//!
//! Datasets use the same primitives:
//!
//! ```text
//! "IMXD" | version u16 | task name | n u32 | n x (es_n0 f64, sir f64)
//! | inputs tensor | target tag u8 (0 waveforms, 1 bits, 2 labels) | tensor or n x u32
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::arch::Architecture;
use crate::models::dataset::{Condition, Dataset, Targets, Task};
use crate::nn::{Model, Tensor};
use crate::signal::RngStream;

pub const MAGIC: &[u8; 4] = b"IMX1";
pub const FORMAT_VERSION: u16 = 1;
pub const DATASET_MAGIC: &[u8; 4] = b"IMXD";

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, model.config());
    let tensors = model.named_tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        put_str(&mut out, name);
        put_tensor(&mut out, t);
    }
    out
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated file while reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, what: &str) -> Result<Tensor<f32>> {
        let rank = self.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32("dims")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = n.and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Checkpoint(format!("{what}: tensor too large")))?;
        let data = self.take(bytes, what)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{what}: {e}")))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4, "magic")? != magic {
            return Err(Error::Checkpoint(format!("bad magic, not an {} file", String::from_utf8_lossy(magic))));
        }
        let version = u16::from_le_bytes(self.take(2, "version")?.try_into().expect("2 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}, expected {FORMAT_VERSION}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(MAGIC)?;
    let config = r.string("config")?;
    let arch = Architecture::parse(&config)?;
    let mut model: Model<f32> = arch.build(&RngStream::new(0, 0))?;
    let count = r.u32("tensor count")? as usize;
    let expected = model.named_tensors().len();
    if count != expected {
        return Err(Error::Checkpoint(format!("{count} tensors stored, architecture declares {expected}")));
    }
    let mut seen = std::collections::HashSet::new();
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let t = r.tensor(&name)?;
        if !seen.insert(name.clone()) {
            return Err(Error::Checkpoint(format!("tensor {name} stored twice")));
        }
        model.set_tensor(&name, t).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
    }
    r.finish()?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    from_bytes(&std::fs::read(path)?)
}

pub fn dataset_to_bytes(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, data.task.name());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    for c in &data.conditions {
        out.extend_from_slice(&c.es_n0_db.to_le_bytes());
        out.extend_from_slice(&c.sir_db.to_le_bytes());
    }
    put_tensor(&mut out, &data.inputs);
    match &data.targets {
        Targets::Waveforms(t) => {
            out.push(0);
            put_tensor(&mut out, t);
        }
        Targets::Bits(t) => {
            out.push(1);
            put_tensor(&mut out, t);
        }
        Targets::Labels(l) => {
            out.push(2);
            for &k in l {
                out.extend_from_slice(&(k as u32).to_le_bytes());
            }
        }
    }
    out
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(DATASET_MAGIC)?;
    let task = Task::parse(&r.string("task")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let n = r.u32("example count")? as usize;
    let mut conditions = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        conditions.push(Condition { es_n0_db: r.f64("condition")?, sir_db: r.f64("condition")? });
    }
    let inputs = r.tensor("inputs")?;
    let targets = match r.take(1, "target tag")?[0] {
        0 => Targets::Waveforms(r.tensor("targets")?),
        1 => Targets::Bits(r.tensor("targets")?),
        2 => Targets::Labels((0..n).map(|_| r.u32("labels").map(|k| k as usize)).collect::<Result<_>>()?),
        t => return Err(Error::Checkpoint(format!("unknown target tag {t}"))),
    };
    r.finish()?;
    let ok_rows = inputs.rank() == 3 && inputs.shape()[0] == n && inputs.shape()[1] == 2 && targets.len() == n;
    let ok_kind = match (&targets, task) {
        (Targets::Labels(l), t) if t.is_classification() => l.iter().all(|&k| k < t.labels().len()),
        (Targets::Bits(_), Task::DemodBits) => true,
        (Targets::Waveforms(w), Task::DenoiseSoi | Task::EstimateInt) => w.shape() == inputs.shape(),
        _ => false,
    };
    if !ok_rows || !ok_kind {
        return Err(Error::Checkpoint(format!("dataset contents do not match task {}", task.name())));
    }
    Ok(Dataset { task, inputs, targets, conditions })
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(data))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}
