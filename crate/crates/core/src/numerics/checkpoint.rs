//! `MMCK` checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MMCK" | u32 version | u32 blob_len | blob (UTF-8 config)
//! u32 param_count | param_count × entry
//! u32 state_count | state_count × entry
//! u64 seed | u64 step
//!
//! entry = u32 name_len | name | u32 rank | rank × u32 dim | Π dim × f32
//! ```
//!
//! Values are stored as 32-bit floats; loading widens them back to `f64`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{NumericsError, OptimizerState, ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"MMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub params: Vec<NamedTensor>,
    pub optimizer: Vec<NamedTensor>,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn capture(
        config: String,
        params: &ParamSet,
        optimizer: Option<&OptimizerState>,
        seed: u64,
    ) -> Self {
        let named: Vec<NamedTensor> = params
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                tensor: p.value.clone(),
            })
            .collect();
        let mut state = Vec::new();
        if let Some(opt) = optimizer {
            for (p, m) in params.iter().zip(&opt.first_moment) {
                state.push(NamedTensor {
                    name: format!("{}.m", p.name),
                    tensor: m.clone(),
                });
            }
            for (p, v) in params.iter().zip(&opt.second_moment) {
                state.push(NamedTensor {
                    name: format!("{}.v", p.name),
                    tensor: v.clone(),
                });
            }
        }
        Self {
            config,
            params: named,
            optimizer: state,
            seed,
            step: optimizer.map_or(0, |o| o.step),
        }
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn restore_into(&self, params: &mut ParamSet) -> Result<(), NumericsError> {
        if self.params.len() != params.len() {
            return Err(NumericsError::Config(format!(
                "checkpoint has {} parameters, model expects {}",
                self.params.len(),
                params.len()
            )));
        }
        for nt in &self.params {
            let id = params.id(&nt.name).ok_or_else(|| {
                NumericsError::Config(format!("unknown parameter `{}` in checkpoint", nt.name))
            })?;
            if params[id].shape() != nt.tensor.shape() {
                return Err(NumericsError::Config(format!(
                    "parameter `{}` has shape {:?} in checkpoint, model expects {:?}",
                    nt.name,
                    nt.tensor.shape(),
                    params[id].shape()
                )));
            }
            params[id] = nt.tensor.clone();
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_bytes(&mut w, self.config.as_bytes())?;
        for group in [&self.params, &self.optimizer] {
            w.write_all(&(group.len() as u32).to_le_bytes())?;
            for nt in group.iter() {
                write_entry(&mut w, nt)?;
            }
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), NumericsError> {
        fs::write(path, self.to_bytes()).map_err(|e| NumericsError::Io(path.display().to_string(), e))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NumericsError> {
        let fmt = |m: &str| NumericsError::Format(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
        if &magic != MAGIC {
            return Err(fmt("bad magic, expected MMCK"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(NumericsError::Format(format!("unsupported version {version}")));
        }
        let blob = read_bytes(&mut r)?;
        let config = String::from_utf8(blob).map_err(|_| fmt("config blob is not UTF-8"))?;
        let mut groups = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = read_u32(&mut r)? as usize;
            let mut group = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                group.push(read_entry(&mut r)?);
            }
            groups.push(group);
        }
        let seed = read_u64(&mut r)?;
        let step = read_u64(&mut r)?;
        let optimizer = groups.pop().unwrap_or_default();
        let params = groups.pop().unwrap_or_default();
        Ok(Self {
            config,
            params,
            optimizer,
            seed,
            step,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NumericsError> {
        let bytes = fs::read(path).map_err(|e| NumericsError::Io(path.display().to_string(), e))?;
        Self::read_from(bytes.as_slice())
    }
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> io::Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)
}

fn write_entry<W: Write>(w: &mut W, nt: &NamedTensor) -> io::Result<()> {
    write_bytes(w, nt.name.as_bytes())?;
    let shape = nt.tensor.shape();
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in nt.tensor.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn truncated() -> NumericsError {
    NumericsError::Format("truncated checkpoint".into())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NumericsError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| truncated())?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NumericsError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| truncated())?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, NumericsError> {
    let n = read_u32(r)? as usize;
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf).map_err(|_| truncated())?;
    if buf.len() != n {
        return Err(truncated());
    }
    Ok(buf)
}

fn read_entry<R: Read>(r: &mut R) -> Result<NamedTensor, NumericsError> {
    let name = String::from_utf8(read_bytes(r)?)
        .map_err(|_| NumericsError::Format("parameter name is not UTF-8".into()))?;
    let rank = read_u32(r)? as usize;
    if rank == 0 || rank > 8 {
        return Err(NumericsError::Format(format!("bad rank {rank} for `{name}`")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut raw = Vec::new();
    r.take((n * 4) as u64).read_to_end(&mut raw).map_err(|_| truncated())?;
    if raw.len() != n * 4 {
        return Err(truncated());
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let tensor = Tensor::from_vec(&shape, data)
        .map_err(|_| NumericsError::Format(format!("bad shape {shape:?} for `{name}`")))?;
    Ok(NamedTensor { name, tensor })
}
