use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, NnError};
use crate::archive::{self, Archive, ArchiveError};
use crate::tensor::ops::RunningStats;
use crate::tensor::Tensor;

const RUNNING_MEAN: &str = ".running_mean";
const RUNNING_VAR: &str = ".running_var";

/// Header stored as the archive's JSON block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: NetworkSpec,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Seed the network was initialized from.
    pub seed: u64,
    /// Free-form run context (task, dataset id, preprocessing) written by
    /// the trainer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<serde_json::Value>,
}

/// A network plus its header and any auxiliary tensors (optimizer moments).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub network: Network,
    /// Extra named tensors, e.g. `adam.m.<param>`. Names must not collide
    /// with network parameters.
    pub extra: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(network: Network, step: u64, seed: u64) -> Self {
        Self {
            meta: CheckpointMeta {
                spec: network.spec().clone(),
                step,
                seed,
                context: None,
            },
            network,
            extra: Vec::new(),
        }
    }

    pub fn to_archive(&self) -> Result<Archive, NnError> {
        let header = serde_json::to_string(&self.meta).map_err(ArchiveError::from)?;
        let mut tensors: Vec<(String, Tensor<f32>)> = self
            .network
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        for (name, rs) in self.network.bn_stats() {
            let c = rs.mean.len();
            tensors.push((
                format!("{name}{RUNNING_MEAN}"),
                Tensor::new(&[c], rs.mean.clone()).expect("c>0"),
            ));
            tensors.push((
                format!("{name}{RUNNING_VAR}"),
                Tensor::new(&[c], rs.var.clone()).expect("c>0"),
            ));
        }
        tensors.extend(self.extra.iter().cloned());
        Ok(Archive { header, tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        Ok(self.to_archive()?.encode()?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let archive = Archive::decode(bytes)?;
        let meta: CheckpointMeta =
            serde_json::from_str(&archive.header).map_err(ArchiveError::from)?;
        let mut params = Vec::new();
        let mut extra = Vec::new();
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for (name, t) in archive.tensors {
            if let Some(base) = name.strip_suffix(RUNNING_MEAN) {
                means.push((base.to_owned(), t.into_vec()));
            } else if let Some(base) = name.strip_suffix(RUNNING_VAR) {
                vars.push((base.to_owned(), t.into_vec()));
            } else if name.starts_with("adam.") || name.starts_with("extra.") {
                extra.push((name, t));
            } else {
                params.push((name, t));
            }
        }
        let mut stats = Vec::new();
        for (name, mean) in means {
            let var = vars
                .iter()
                .position(|(n, _)| *n == name)
                .map(|i| vars.swap_remove(i).1)
                .ok_or_else(|| NnError::SpecMismatch(format!("missing running variance for `{name}`")))?;
            stats.push((name, RunningStats { mean, var }));
        }
        if let Some((name, _)) = vars.first() {
            return Err(NnError::SpecMismatch(format!("missing running mean for `{name}`")));
        }
        let network = Network::from_parts(meta.spec.clone(), params, stats)?;
        Ok(Self {
            meta,
            network,
            extra,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), NnError> {
    let bytes = ckpt.to_bytes()?;
    archive::write_atomic(path, &bytes).map_err(ArchiveError::from)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = std::fs::read(path).map_err(ArchiveError::from)?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads a checkpoint and rejects it unless its stored spec equals `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &NetworkSpec) -> Result<Checkpoint, NnError> {
    let ckpt = load_checkpoint(path)?;
    if &ckpt.meta.spec != expected {
        return Err(NnError::SpecMismatch(format!(
            "checkpoint spec {:?} differs from expected {:?}",
            ckpt.meta.spec, expected
        )));
    }
    Ok(ckpt)
}
