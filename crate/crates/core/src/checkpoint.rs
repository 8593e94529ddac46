//! Versioned binary container for models and datasets.
//!
//! Layout: the 8-byte magic `REGDSTL\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a UTF-8 JSON header, then
//! the payload: every tensor listed in the header, in order, as row-major
//! little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{AdamConfig, AdamState, Architecture, SequentialModel, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"REGDSTL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Header {
    Model {
        endianness: String,
        architecture: Architecture,
        seed: u64,
        epochs_completed: u64,
        optimizer: Option<OptimizerHeader>,
        tensors: Vec<TensorEntry>,
    },
    Dataset {
        endianness: String,
        name: String,
        classes: usize,
        labels: Vec<usize>,
        tensors: Vec<TensorEntry>,
    },
}

/// A trained model with its optimiser state and RNG bookkeeping.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SequentialModel,
    pub optimizer: Option<AdamState>,
    /// Seed that initialised the parameters and drives the batch shuffles.
    pub seed: u64,
    /// Epochs already consumed from the shuffle stream.
    pub epochs_completed: u64,
}

fn encode(header: &Header, tensors: &[&Tensor]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serialises");
    let payload: usize = tensors.iter().map(|t| t.len() * 8).sum();
    let mut out = Vec::with_capacity(20 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> std::result::Result<(Header, Vec<Tensor>), String> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err("not a regdistill container".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format!("unsupported container version {version}"));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes
        .get(20..20usize.saturating_add(hlen))
        .ok_or("truncated header")?;
    let header: Header = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let (endianness, entries) = match &header {
        Header::Model {
            endianness,
            tensors,
            ..
        }
        | Header::Dataset {
            endianness,
            tensors,
            ..
        } => (endianness, tensors),
    };
    if endianness != "little" {
        return Err(format!("unsupported endianness {endianness:?}"));
    }
    let mut at = 20 + hlen;
    let mut tensors = Vec::with_capacity(entries.len());
    for e in entries {
        let n: usize = e.shape.iter().product();
        let chunk = bytes
            .get(at..at + n * 8)
            .ok_or_else(|| format!("payload truncated in tensor {}", e.name))?;
        let data = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(e.shape.clone(), data).map_err(|err| err.to_string())?);
        at += n * 8;
    }
    if at != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - at));
    }
    Ok((header, tensors))
}

fn entries(prefix: &str, ts: &[Tensor]) -> Vec<TensorEntry> {
    ts.iter()
        .enumerate()
        .map(|(i, t)| TensorEntry {
            name: format!("{prefix}.{i}"),
            shape: t.shape().to_vec(),
        })
        .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.model.params();
        let mut tensors = entries("param", params);
        let mut refs: Vec<&Tensor> = params.iter().collect();
        if let Some(opt) = &self.optimizer {
            tensors.extend(entries("adam_m", &opt.first));
            tensors.extend(entries("adam_v", &opt.second));
            refs.extend(opt.first.iter());
            refs.extend(opt.second.iter());
        }
        let header = Header::Model {
            endianness: "little".into(),
            architecture: self.model.architecture().clone(),
            seed: self.seed,
            epochs_completed: self.epochs_completed,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                config: o.config,
                step: o.step,
            }),
            tensors,
        };
        encode(&header, &refs)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let (header, mut tensors) = decode(bytes)?;
        let Header::Model {
            architecture,
            seed,
            epochs_completed,
            optimizer,
            ..
        } = header
        else {
            return Err("container holds a dataset, not a model".into());
        };
        let n_params: usize = architecture
            .layers
            .iter()
            .map(|l| l.param_shapes().len())
            .sum();
        let expected = if optimizer.is_some() { 3 * n_params } else { n_params };
        if tensors.len() != expected {
            return Err(format!("expected {expected} tensors, found {}", tensors.len()));
        }
        let rest = tensors.split_off(n_params);
        let model = SequentialModel::with_params(architecture, tensors).map_err(|e| e.to_string())?;
        let optimizer = optimizer.map(|o| {
            let mut rest = rest;
            let second = rest.split_off(n_params);
            AdamState {
                config: o.config,
                step: o.step,
                first: rest,
                second,
            }
        });
        Ok(Self {
            model,
            optimizer,
            seed,
            epochs_completed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::file(path, e))
    }
}

pub fn dataset_to_bytes(dataset: &Dataset) -> Vec<u8> {
    let header = Header::Dataset {
        endianness: "little".into(),
        name: dataset.name().to_string(),
        classes: dataset.classes(),
        labels: dataset.labels().to_vec(),
        tensors: vec![TensorEntry {
            name: "images".into(),
            shape: dataset.images().shape().to_vec(),
        }],
    };
    encode(&header, &[dataset.images()])
}

pub fn dataset_from_bytes(bytes: &[u8]) -> std::result::Result<Dataset, String> {
    let (header, mut tensors) = decode(bytes)?;
    let Header::Dataset {
        name,
        classes,
        labels,
        ..
    } = header
    else {
        return Err("container holds a model, not a dataset".into());
    };
    if tensors.len() != 1 {
        return Err("dataset container must hold exactly one tensor".into());
    }
    Dataset::new(name, classes, tensors.remove(0), labels).map_err(|e| e.to_string())
}
