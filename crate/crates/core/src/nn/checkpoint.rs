//! Checkpoints and their on-disk container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "UNLRNCKP"
//! version    u32
//! header     u64 length + UTF-8 JSON {architecture, train_config, provenance}
//! arrays     u32 count, then per array:
//!              u32 name length, name bytes,
//!              u32 rank, u64 per dimension,
//!              f64 values
//! ```
//!
//! Parameters come first in architecture order, followed by
//! `<layer>.running_mean` / `<layer>.running_var` for each batch-norm layer.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::ArchitectureConfig;
use super::network::init_params;
use super::tensor::TensorBuffer;
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"UNLRNCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: TensorBuffer,
}

/// Running per-channel statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Where a checkpoint's weights came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_id: String,
    pub split_seed: u64,
    pub split_with_replacement: bool,
    pub split_complemented: bool,
    /// Training records drawn (multiset size) after exclusions.
    pub member_count: usize,
    /// Members deliberately left out of training.
    pub excluded_records: Vec<usize>,
    pub epochs: usize,
    pub parent: Option<String>,
    /// Ids of every ancestor, root first.
    pub ancestry: Vec<String>,
    /// Human-readable log of incremental updates applied after training.
    pub events: Vec<String>,
}

impl Provenance {
    /// Provenance for a checkpoint not tied to any dataset.
    pub fn detached() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub architecture: ArchitectureConfig,
    pub params: Vec<NamedTensor>,
    pub running: Vec<RunningStats>,
    pub train_config: TrainConfig,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: ArchitectureConfig,
    train_config: TrainConfig,
    provenance: Provenance,
}

impl Checkpoint {
    /// Freshly initialized weights, seeded by `train_config.init_seed`.
    pub fn initialize(
        architecture: ArchitectureConfig,
        train_config: TrainConfig,
        provenance: Provenance,
    ) -> Result<Self> {
        architecture.validate()?;
        let (params, running) = init_params(&architecture, train_config.init_seed);
        Ok(Self {
            architecture,
            params,
            running,
            train_config,
            provenance,
        })
    }

    pub fn param(&self, name: &str) -> Option<&TensorBuffer> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    /// Content hash of the encoded checkpoint.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.encode());
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// A copy whose provenance names `self` as parent.
    pub fn child(&self, event: String) -> Checkpoint {
        let id = self.id();
        let mut next = self.clone();
        next.provenance.ancestry.push(id.clone());
        next.provenance.parent = Some(id);
        next.provenance.events.push(event);
        next
    }

    /// Whether `ancestor_id` appears anywhere in this checkpoint's lineage.
    pub fn descends_from(&self, ancestor_id: &str) -> bool {
        self.provenance.ancestry.iter().any(|a| a == ancestor_id)
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            architecture: self.architecture.clone(),
            train_config: self.train_config.clone(),
            provenance: self.provenance.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);

        let mut arrays: Vec<(String, &[usize], &[f64])> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape(), p.tensor.values()))
            .collect();
        let shapes: Vec<[usize; 1]> = self.running.iter().map(|r| [r.mean.len()]).collect();
        for (r, shape) in self.running.iter().zip(&shapes) {
            arrays.push((format!("{}.running_mean", r.name), shape, &r.mean));
            arrays.push((format!("{}.running_var", r.name), shape, &r.var));
        }
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, shape, values) in arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        header.architecture.validate()?;

        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CheckpointFormat("array name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let len = len.ok_or_else(|| Error::CheckpointFormat(format!("{name}: shape overflow")))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| {
                Error::CheckpointFormat(format!("{name}: shape overflow"))
            })?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name, shape, values));
        }
        if r.pos != bytes.len() {
            return Err(Error::CheckpointFormat("trailing bytes".into()));
        }

        let expected_params = header.architecture.param_shapes();
        let bn_layers = header.architecture.batchnorm_layers();
        if arrays.len() != expected_params.len() + 2 * bn_layers.len() {
            return Err(Error::CheckpointFormat(format!(
                "expected {} arrays, found {}",
                expected_params.len() + 2 * bn_layers.len(),
                arrays.len()
            )));
        }
        let mut arrays = arrays.into_iter();
        let mut params = Vec::with_capacity(expected_params.len());
        for (name, shape) in expected_params {
            let (got_name, got_shape, values) = arrays.next().expect("count checked");
            if got_name != name || got_shape != shape {
                return Err(Error::CheckpointFormat(format!(
                    "expected {name} {shape:?}, found {got_name} {got_shape:?}"
                )));
            }
            params.push(NamedTensor {
                name,
                tensor: TensorBuffer::new(shape, values)?,
            });
        }
        let mut running = Vec::with_capacity(bn_layers.len());
        for (name, channels) in bn_layers {
            let mut next = |suffix: &str| -> Result<Vec<f64>> {
                let (got_name, got_shape, values) = arrays.next().expect("count checked");
                let want = format!("{name}.{suffix}");
                if got_name != want || got_shape != [channels] {
                    return Err(Error::CheckpointFormat(format!(
                        "expected {want} [{channels}], found {got_name} {got_shape:?}"
                    )));
                }
                Ok(values)
            };
            let mean = next("running_mean")?;
            let var = next("running_var")?;
            running.push(RunningStats { name, mean, var });
        }
        Ok(Self {
            architecture: header.architecture,
            params,
            running,
            train_config: header.train_config,
            provenance: header.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CheckpointFormat("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
