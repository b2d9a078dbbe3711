use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OrderedPartition, SearchMode};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::subspace::CenterRef;

/// JSON form of an accepted partition. Stages list their centers, and each center is
/// the list of its member vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub k: usize,
    pub mode: SearchMode,
    pub seed: Seed,
    pub config_hash: String,
    pub graph: Option<String>,
    pub oracle: Option<String>,
    pub stages: Vec<Vec<Vec<u32>>>,
}

impl PartitionFile {
    pub fn from_partition(p: &OrderedPartition, mode: SearchMode, seed: Seed, config_hash: String) -> Result<Self> {
        if !p.is_final() {
            return Err(Error::usage("only final partitions are serialized"));
        }
        let stages = p
            .stages
            .iter()
            .map(|s| s.iter().map(|&c| p.centers[c].members().to_vec()).collect())
            .collect();
        Ok(PartitionFile { k: p.k(), mode, seed, config_hash, graph: None, oracle: None, stages })
    }

    /// Partition with centers numbered in stage order.
    pub fn partition(&self) -> Result<OrderedPartition> {
        let mut centers = Vec::new();
        let mut stages = Vec::new();
        for s in &self.stages {
            let mut ids = Vec::new();
            for members in s {
                ids.push(centers.len());
                centers.push(CenterRef::new(members.clone()).map_err(|_| Error::format("empty center in partition file"))?);
            }
            stages.push(ids);
        }
        if centers.len() != self.k {
            return Err(Error::format(format!("partition file lists {} centers for k={}", centers.len(), self.k)));
        }
        OrderedPartition::new(centers, stages)
    }
}

pub fn write_partition_file(path: &Path, file: &PartitionFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_partition_file(path: &Path) -> Result<PartitionFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
