//! Binary checkpoint archive.
//!
//! Layout (little-endian): magic `ADCS`, `u32` version, `u32` entry count,
//! then per entry `u16` name length, name bytes, `u8` rank, `rank × u32`
//! dims, `u8` dtype tag and the values. Tag 0 holds `f32` tensors; tag 1
//! holds raw bytes and is used for the JSON metadata entry.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{Adam, Moments};
use super::TrainMode;
use crate::error::{shape_err, Error, Result};
use crate::model::{Adcsr, ModelConfig};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ADCS";
pub const VERSION: u32 = 1;
pub const META_ENTRY: &str = "__meta__";
pub const ADAM_M_PREFIX: &str = "adam.m.";
pub const ADAM_V_PREFIX: &str = "adam.v.";

const DTYPE_F32: u8 = 0;
const DTYPE_BYTES: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PretrainSkip,
    Joint,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PretrainSkip => "pretrain_skip",
            Phase::Joint => "joint",
        }
    }
}

/// Where a run stands; enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    pub mode: TrainMode,
    pub phase: Phase,
    /// Steps completed within `phase`.
    pub phase_step: u64,
    /// Steps completed over all phases; indexes the patch stream.
    pub global_step: u64,
    pub adam_t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub step: u64,
    pub train: Option<TrainState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// Model parameters followed by optimizer moments, in file order.
    pub tensors: Vec<(String, Tensor<f32>)>,
}

/// Outcome of [`Checkpoint::apply`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Checkpoint entries with no matching parameter (permissive loads only).
    pub ignored: Vec<String>,
}

impl Checkpoint {
    pub fn from_model(model: &Adcsr<f32>, step: u64) -> Self {
        let tensors = model.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        Checkpoint { meta: CheckpointMeta { model: model.config().clone(), step, train: None }, tensors }
    }

    /// Model parameters plus optimizer moments and run state.
    pub fn with_optimizer(model: &Adcsr<f32>, adam: &Adam<f32>, state: TrainState) -> Self {
        let mut ck = Self::from_model(model, state.global_step);
        let mut m = Vec::new();
        let mut v = Vec::new();
        for id in model.params().ids() {
            if let Some(mo) = adam.moments(id) {
                let name = &model.params().get(id).name;
                m.push((format!("{ADAM_M_PREFIX}{name}"), mo.m.clone()));
                v.push((format!("{ADAM_V_PREFIX}{name}"), mo.v.clone()));
            }
        }
        ck.tensors.extend(m);
        ck.tensors.extend(v);
        ck.meta.train = Some(state);
        ck
    }

    fn is_optimizer(name: &str) -> bool {
        name.starts_with(ADAM_M_PREFIX) || name.starts_with(ADAM_V_PREFIX)
    }

    /// Parameter entries (optimizer moments excluded).
    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.tensors.iter().filter(|(n, _)| !Self::is_optimizer(n)).map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// A fresh model of the recorded configuration holding these weights.
    pub fn build_model(&self) -> Result<Adcsr<f32>> {
        let mut model = Adcsr::new(self.meta.model.clone(), 0)?;
        self.apply(&mut model, false)?;
        Ok(model)
    }

    /// Copies weights into `model`. Every model parameter must be present with
    /// its exact shape; entries the model lacks are an error unless
    /// `permissive`. Nothing is written unless all checks pass.
    pub fn apply(&self, model: &mut Adcsr<f32>, permissive: bool) -> Result<LoadReport> {
        let mut report = LoadReport::default();
        let mut updates = Vec::new();
        for p in model.params().iter() {
            let t = self.get(&p.name).ok_or_else(|| {
                shape_err!("checkpoint has no entry for model parameter {} {:?}", p.name, p.value.shape())
            })?;
            if t.shape() != p.value.shape() {
                return Err(shape_err!(
                    "{}: checkpoint shape {:?} does not match model shape {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                ));
            }
            updates.push((model.params().id(&p.name).expect("present"), t.clone()));
        }
        for (name, _) in self.params() {
            if model.params().id(name).is_none() {
                if !permissive {
                    return Err(shape_err!("checkpoint entry {name} is not a parameter of this model"));
                }
                report.ignored.push(name.to_string());
            }
        }
        for (id, t) in updates {
            report.loaded.push(model.params().get(id).name.clone());
            model.params_mut().set_value(id, t)?;
        }
        Ok(report)
    }

    /// Rebuilds the optimizer recorded alongside the weights.
    pub fn optimizer(&self, model: &Adcsr<f32>) -> Result<Option<Adam<f32>>> {
        let Some(st) = &self.meta.train else { return Ok(None) };
        let mut adam = Adam::new(st.beta1, st.beta2, st.eps);
        adam.t = st.adam_t;
        for (name, m) in &self.tensors {
            let Some(pname) = name.strip_prefix(ADAM_M_PREFIX) else { continue };
            let id = model
                .params()
                .id(pname)
                .ok_or_else(|| shape_err!("optimizer state for unknown parameter {pname}"))?;
            let v = self
                .get(&format!("{ADAM_V_PREFIX}{pname}"))
                .ok_or_else(|| Error::Corrupt(format!("missing second moment for {pname}")))?;
            let shape = model.params().get(id).value.shape();
            if m.shape() != shape || v.shape() != shape {
                return Err(shape_err!("optimizer moments of {pname} do not match {shape:?}"));
            }
            adam.set_moments(id, Moments { m: m.clone(), v: v.clone() });
        }
        Ok(Some(adam))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32 + 1).to_le_bytes());
        write_header(&mut out, META_ENTRY, &[meta.len() as u32], DTYPE_BYTES);
        out.extend_from_slice(&meta);
        for (name, t) in &self.tensors {
            let dims = t.shape().map(|d| d as u32);
            write_header(&mut out, name, &dims, DTYPE_F32);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Corrupt("bad magic (not a checkpoint file)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Corrupt(format!("unsupported version {version} (expected {VERSION})")));
        }
        let count = r.u32("entry count")?;
        let mut meta = None;
        let mut tensors = Vec::new();
        let mut seen = HashSet::new();
        for _ in 0..count {
            let len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Corrupt("entry name is not UTF-8".into()))?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(Error::Corrupt(format!("duplicate entry {name}")));
            }
            let rank = r.u8("rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("dims")? as usize);
            }
            let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = numel.ok_or_else(|| Error::Corrupt(format!("{name}: dims overflow")))?;
            match r.u8("dtype")? {
                DTYPE_BYTES if name == META_ENTRY && rank == 1 => {
                    let raw = r.take(numel, "metadata")?;
                    meta = Some(
                        serde_json::from_slice(raw).map_err(|e| Error::Corrupt(format!("metadata: {e}")))?,
                    );
                }
                DTYPE_F32 if rank == 4 => {
                    let byte_len = numel.checked_mul(4).ok_or_else(|| Error::Corrupt(format!("{name}: too large")))?;
                    let raw = r.take(byte_len, &name)?;
                    let data =
                        raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                    let shape = [dims[0], dims[1], dims[2], dims[3]];
                    tensors.push((name, Tensor::from_vec(shape, data)?));
                }
                tag => return Err(Error::Corrupt(format!("{name}: dtype {tag} with rank {rank} is not supported"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let meta = meta.ok_or_else(|| Error::Corrupt("missing metadata entry".into()))?;
        Ok(Checkpoint { meta, tensors })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn write_header(out: &mut Vec<u8>, name: &str, dims: &[u32], dtype: u8) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(dtype);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
