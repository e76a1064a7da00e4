//! Binary checkpoints: magic, a length-prefixed JSON header, then raw
//! little-endian `f64` arrays.
//!
//! Array order: for each model, its parameters in declaration order, then
//! (when saved) the Adam first moments and second moments in the same order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::arch::FieldArchitecture;
use super::model::{FieldModel, FrozenOpacity, ParamArray};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NRFPCKPT";
pub const FORMAT_VERSION: u32 = 1;
/// Upper bound on the JSON header, to reject garbage lengths early.
const MAX_HEADER: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointModel {
    /// Role of the model in its field set, e.g. `fg_coarse`.
    pub role: String,
    pub model: FieldModel,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub iteration: usize,
    pub models: Vec<CheckpointModel>,
    /// Free-form run metadata (training configuration).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    role: String,
    arch: FieldArchitecture,
    frozen_opacity: Option<FrozenOpacity>,
    params: Vec<ParamHeader>,
    adam_step: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    iteration: usize,
    models: Vec<ModelHeader>,
    #[serde(default)]
    meta: serde_json::Value,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedCheckpoint(msg.into())
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let header = Header {
        version: FORMAT_VERSION,
        seed: ckpt.seed,
        iteration: ckpt.iteration,
        models: ckpt
            .models
            .iter()
            .map(|m| ModelHeader {
                role: m.role.clone(),
                arch: m.model.arch.clone(),
                frozen_opacity: m.model.frozen_opacity,
                params: m
                    .model
                    .params
                    .iter()
                    .map(|p| ParamHeader {
                        name: p.name.clone(),
                        shape: p.shape.clone(),
                    })
                    .collect(),
                adam_step: m.adam.as_ref().map(|a| a.step),
            })
            .collect(),
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let mut push = |arrays: &mut dyn Iterator<Item = &Vec<f64>>| {
        for a in arrays {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    for m in &ckpt.models {
        push(&mut m.model.params.iter().map(|p| &p.data));
        if let Some(adam) = &m.adam {
            push(&mut adam.m.iter());
            push(&mut adam.v.iter());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(malformed("truncated payload"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn array(&mut self, len: usize) -> Result<Vec<f64>> {
        let n = len.checked_mul(8).ok_or_else(|| malformed("array too large"))?;
        Ok(self
            .take(n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(malformed("bad magic"));
    }
    let len = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
    if len > MAX_HEADER {
        return Err(malformed("header too large"));
    }
    let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| malformed(format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(malformed(format!("unsupported version {}", header.version)));
    }

    let mut models = Vec::with_capacity(header.models.len());
    for mh in header.models {
        let mut params = Vec::with_capacity(mh.params.len());
        let mut sizes = Vec::with_capacity(mh.params.len());
        for ph in mh.params {
            let len = ph
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| malformed("shape overflows"))?;
            sizes.push(len);
            params.push(ParamArray {
                name: ph.name,
                shape: ph.shape,
                data: r.array(len)?,
            });
        }
        let model = FieldModel {
            arch: mh.arch,
            params,
            frozen_opacity: mh.frozen_opacity,
        };
        model
            .check_consistent()
            .map_err(|e| malformed(format!("model {}: {e}", mh.role)))?;
        let adam = match mh.adam_step {
            Some(step) => {
                let m = sizes.iter().map(|&n| r.array(n)).collect::<Result<Vec<_>>>()?;
                let v = sizes.iter().map(|&n| r.array(n)).collect::<Result<Vec<_>>>()?;
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        models.push(CheckpointModel {
            role: mh.role,
            model,
            adam,
        });
    }
    if !r.bytes.is_empty() {
        return Err(malformed("trailing bytes"));
    }
    Ok(Checkpoint {
        seed: header.seed,
        iteration: header.iteration,
        models,
        meta: header.meta,
    })
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
