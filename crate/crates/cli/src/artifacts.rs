//! Fixed artifact names inside a working directory.

use std::path::{Path, PathBuf};

use tma_core::experiment::{Dataset, ExperimentConfig};
use tma_core::graph::{
    load_features, load_graph, load_labels, load_splits, save_features, save_graph, save_labels,
    save_splits, FeatureMatrix, Graph, NodeLabels,
};
use tma_core::partition::Partition;

use crate::CliError;

pub const GRAPH: &str = "graph.bin";
pub const FEATURES: &str = "features.bin";
pub const LABELS: &str = "labels.bin";
pub const TRAIN_GRAPH: &str = "train_graph.bin";
pub const SPLITS: &str = "splits.bin";
pub const PARTITION: &str = "partition.bin";

pub struct Dir(pub PathBuf);

impl Dir {
    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path).map_err(|e| CliError::msg(format!("{}: {e}", path.display())))?;
        Ok(Self(path.to_path_buf()))
    }

    fn need(&self, name: &str, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::msg(format!("{} is missing; run `tma {producer}` first", p.display())))
        }
    }

    pub fn save_generated(&self, g: &Graph, x: &FeatureMatrix, y: &NodeLabels) -> Result<(), CliError> {
        save_graph(g, &self.path(GRAPH))?;
        save_features(x, &self.path(FEATURES))?;
        save_labels(y, &self.path(LABELS))?;
        Ok(())
    }

    pub fn load_graph(&self) -> Result<Graph, CliError> {
        Ok(load_graph(&self.need(GRAPH, "generate")?)?)
    }

    pub fn load_train_graph(&self) -> Result<Graph, CliError> {
        Ok(load_graph(&self.need(TRAIN_GRAPH, "split")?)?)
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        Ok(Dataset {
            graph: self.load_graph()?,
            features: load_features(&self.need(FEATURES, "generate")?)?,
            labels: load_labels(&self.need(LABELS, "generate")?)?,
            train_graph: self.load_train_graph()?,
            splits: load_splits(&self.need(SPLITS, "split")?)?,
        })
    }

    pub fn load_labels(&self) -> Result<NodeLabels, CliError> {
        Ok(load_labels(&self.need(LABELS, "generate")?)?)
    }

    pub fn save_split(&self, train: &Graph, splits: &tma_core::graph::EdgeSplits) -> Result<(), CliError> {
        save_graph(train, &self.path(TRAIN_GRAPH))?;
        save_splits(splits, &self.path(SPLITS))?;
        Ok(())
    }

    /// The stored partition if it matches the config's scheme and trainer
    /// count.
    pub fn matching_partition(&self, cfg: &ExperimentConfig) -> Result<Option<Partition>, CliError> {
        let p = self.path(PARTITION);
        if !p.exists() {
            return Ok(None);
        }
        let part = Partition::load(&p)?;
        let fits = part.num_parts() == cfg.trainers && part.scheme() == Some(cfg.partition_scheme());
        if !fits {
            log::warn!("{} does not match the config; partitioning again", p.display());
        }
        Ok(fits.then_some(part))
    }
}
