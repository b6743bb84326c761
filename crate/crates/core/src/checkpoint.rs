/*
Copyright 2026 The admm-prune Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! `ADMMCKPT` binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ADMMCKPT" (8 bytes) | version u32 (= 1) | tensor count u32
//! per tensor: name length u16 | UTF-8 name | rank u8 | rank x dim u32 | f32 values, row-major
//! CRC-32 (IEEE) u32 of every preceding byte
//! ```
//!
//! Metadata travels as the first tensor, `__meta__`, a rank-1 tensor whose
//! values are the bytes of a JSON object.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admm::AdmmState;
use crate::error::{Error, Result};
use crate::mask::PruneMask;
use crate::model::{Arch, Model};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ADMMCKPT";
pub const VERSION: u32 = 1;
pub const META_TENSOR: &str = "__meta__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Baseline,
    Pruned,
    Retrained,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub arch: Arch,
    pub seed: u64,
    pub phase: Phase,
    pub admm_iterations: usize,
    pub train_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    tensors: Vec<(String, Tensor)>,
}

fn z_name(layer: &str) -> String {
    format!("admm.z.{layer}")
}

fn u_name(layer: &str) -> String {
    format!("admm.u.{layer}")
}

fn mask_name(layer: &str) -> String {
    format!("mask.{layer}")
}

fn allowed_names(arch: Arch) -> HashSet<String> {
    let model = Model::build(arch, 0);
    let mut names: HashSet<String> = model.param_infos().iter().map(|i| i.name.clone()).collect();
    for layer in model.prunable_names() {
        names.insert(z_name(&layer));
        names.insert(u_name(&layer));
        names.insert(mask_name(&layer));
    }
    names
}

impl Checkpoint {
    /// Snapshot of every weight and bias of a reference-architecture model.
    pub fn from_model(model: &Model, meta: CheckpointMeta) -> Result<Self> {
        match model.arch() {
            Some(a) if a == meta.arch => {}
            _ => {
                return Err(Error::input(format!(
                    "checkpoint metadata says {} but the model is not that architecture",
                    meta.arch
                )))
            }
        }
        let tensors = model
            .param_infos()
            .iter()
            .zip(model.all_params())
            .map(|(info, t)| (info.name.clone(), t.clone()))
            .collect();
        Ok(Checkpoint { meta, tensors })
    }

    fn layer_names(&self) -> Vec<String> {
        Model::build(self.meta.arch, 0).prunable_names()
    }

    fn replace(&mut self, name: String, t: Tensor) {
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name, t)),
        }
    }

    /// Adds the ADMM auxiliary variables and duals.
    pub fn with_admm_state(mut self, state: &AdmmState) -> Result<Self> {
        let layers = self.layer_names();
        if state.z().len() != layers.len() {
            return Err(Error::input("ADMM state does not match the checkpoint architecture"));
        }
        for ((layer, z), u) in layers.iter().zip(state.z()).zip(state.u()) {
            self.replace(z_name(layer), z.clone());
            self.replace(u_name(layer), u.clone());
        }
        self.meta.admm_iterations = state.k();
        Ok(self)
    }

    pub fn with_mask(mut self, mask: &PruneMask) -> Result<Self> {
        let layers = self.layer_names();
        if mask.layers().len() != layers.len() {
            return Err(Error::input("mask does not match the checkpoint architecture"));
        }
        for (layer, (_, m)) in layers.iter().zip(mask.layers()) {
            self.replace(mask_name(layer), m.clone());
        }
        Ok(self)
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Prunable weights `(layer, tensor)` in architecture order.
    pub fn prunable(&self) -> Result<Vec<(String, &Tensor)>> {
        self.layer_names()
            .into_iter()
            .map(|layer| {
                let t = self
                    .tensor(&format!("{layer}.weight"))
                    .ok_or_else(|| Error::input(format!("checkpoint lacks {layer}.weight")))?;
                Ok((layer, t))
            })
            .collect()
    }

    /// Rebuilds the model. Every weight and bias must be present with its expected shape.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::build(self.meta.arch, 0);
        let infos = model.param_infos().to_vec();
        for (info, p) in infos.iter().zip(model.all_params_mut()) {
            let t = self
                .tensor(&info.name)
                .ok_or_else(|| Error::input(format!("checkpoint lacks {}", info.name)))?;
            if !t.same_shape(p) {
                return Err(Error::input(format!(
                    "{} has shape {}, expected {}",
                    info.name,
                    t.shape(),
                    p.shape()
                )));
            }
            *p = t.clone();
        }
        model.set_arch(self.meta.arch);
        Ok(model)
    }

    pub fn mask(&self) -> Result<Option<PruneMask>> {
        let layers = self.layer_names();
        let found: Vec<Option<&Tensor>> = layers.iter().map(|l| self.tensor(&mask_name(l))).collect();
        if found.iter().all(Option::is_none) {
            return Ok(None);
        }
        let layers = layers
            .into_iter()
            .zip(found)
            .map(|(l, t)| {
                t.cloned()
                    .map(|t| (l.clone(), t))
                    .ok_or_else(|| Error::input(format!("checkpoint lacks {}", mask_name(&l))))
            })
            .collect::<Result<Vec<_>>>()?;
        PruneMask::new(layers).map(Some)
    }

    pub fn admm_state(&self) -> Result<Option<AdmmState>> {
        let layers = self.layer_names();
        let z: Vec<Option<&Tensor>> = layers.iter().map(|l| self.tensor(&z_name(l))).collect();
        let u: Vec<Option<&Tensor>> = layers.iter().map(|l| self.tensor(&u_name(l))).collect();
        if z.iter().chain(&u).all(Option::is_none) {
            return Ok(None);
        }
        let collect = |v: Vec<Option<&Tensor>>| -> Result<Vec<Tensor>> {
            v.into_iter()
                .map(|t| t.cloned().ok_or_else(|| Error::input("checkpoint has partial ADMM state")))
                .collect()
        };
        AdmmState::from_parts(collect(z)?, collect(u)?, self.meta.admm_iterations).map(Some)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta_json = serde_json::to_vec(&self.meta).expect("metadata serialises");
        let meta_tensor = Tensor::from_vec(
            &[meta_json.len()],
            meta_json.iter().map(|&b| b as f32).collect(),
        )
        .expect("metadata is non-empty");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&((self.tensors.len() + 1) as u32).to_le_bytes());
        let all = std::iter::once((META_TENSOR, &meta_tensor))
            .chain(self.tensors.iter().map(|(n, t)| (n.as_str(), t)));
        for (name, t) in all {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses checkpoint bytes; `source` names the origin in error messages.
    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Format {
            source_name: source.to_string(),
            offset: offset as u64,
            message,
        };
        if bytes.len() < MAGIC.len() + 12 {
            return Err(err(bytes.len(), "file too short for a checkpoint".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(err(0, "bad magic, not an ADMMCKPT file".into()));
        }
        let body_len = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(&bytes[..body_len]);
        if stored != actual {
            return Err(err(
                body_len,
                format!("CRC mismatch: stored 0x{stored:08x}, computed 0x{actual:08x}"),
            ));
        }
        let body = &bytes[..body_len];
        let mut pos = 8;
        let take = |len: usize, pos: &mut usize| -> Result<&[u8]> {
            let chunk = body
                .get(*pos..*pos + len)
                .ok_or_else(|| err(*pos, format!("truncated: need {len} more bytes")))?;
            *pos += len;
            Ok(chunk)
        };
        let version = u32::from_le_bytes(take(4, &mut pos)?.try_into().expect("4"));
        if version != VERSION {
            return Err(err(8, format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(take(4, &mut pos)?.try_into().expect("4")) as usize;
        let mut raw: Vec<(usize, String, Tensor)> = Vec::with_capacity(count);
        for _ in 0..count {
            let at = pos;
            let name_len = u16::from_le_bytes(take(2, &mut pos)?.try_into().expect("2")) as usize;
            let name = std::str::from_utf8(take(name_len, &mut pos)?)
                .map_err(|_| err(at + 2, "tensor name is not UTF-8".into()))?
                .to_string();
            let rank = take(1, &mut pos)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(take(4, &mut pos)?.try_into().expect("4")) as usize);
            }
            let numel: usize = dims.iter().product();
            let data_at = pos;
            let data: Vec<f32> = take(numel * 4, &mut pos)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
                .collect();
            let t = Tensor::from_vec(&dims, data)
                .map_err(|e| err(data_at, format!("tensor {name}: {e}")))?;
            raw.push((at, name, t));
        }
        if pos != body.len() {
            return Err(err(pos, "trailing bytes before CRC".into()));
        }

        let mut iter = raw.into_iter();
        let (at, name, meta_t) = iter
            .next()
            .ok_or_else(|| err(16, "checkpoint has no metadata tensor".into()))?;
        if name != META_TENSOR {
            return Err(err(at, format!("first tensor is {name:?}, expected {META_TENSOR}")));
        }
        let meta_bytes: Vec<u8> = meta_t
            .data()
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(err(at, "metadata tensor holds a non-byte value".into()))
                }
            })
            .collect::<Result<_>>()?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| err(at, format!("bad metadata: {e}")))?;

        let allowed = allowed_names(meta.arch);
        let mut seen = HashSet::new();
        let mut tensors = Vec::with_capacity(count - 1);
        for (at, name, t) in iter {
            if !allowed.contains(&name) {
                return Err(err(at, format!("unknown tensor name {name:?} for {}", meta.arch)));
            }
            if !seen.insert(name.clone()) {
                return Err(err(at, format!("duplicate tensor {name:?}")));
            }
            tensors.push((name, t));
        }
        Ok(Checkpoint { meta, tensors })
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// Writes `bytes` next to `path` and renames into place, so a failed write
/// never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
