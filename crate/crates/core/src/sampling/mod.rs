//! Mini-batches of local training edges and neighbor-sampled message flow
//! graphs (MFGs).
//!
//! Fanouts follow the usual outermost-first order: `fanouts[0]` bounds the
//! hop farthest from the seeds and the last entry bounds the seeds' own
//! neighbors.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use thiserror::Error;

use crate::graph::{FeatureMatrix, Graph, NodeId};
use crate::nn::{BlockRef, Tensor};
use crate::partition::Subgraph;
use crate::rng::Rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("trainer has no local edges")]
    NoLocalEdges,
    #[error("batch size must be positive")]
    EmptyBatch,
}

/// Per-hop neighbor limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fanout {
    All,
    Limit(usize),
}

impl fmt::Display for Fanout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fanout::All => f.write_str("all"),
            Fanout::Limit(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Fanout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all" | "inf" | "-1" => Ok(Fanout::All),
            t => t
                .parse()
                .map(Fanout::Limit)
                .map_err(|_| format!("bad fanout {t:?}: expected a count or \"all\"")),
        }
    }
}

/// One hop of an MFG, stored like a CSR graph from destination rows to
/// source rows. Destinations are the first `num_dst` sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MfgBlock {
    pub num_dst: usize,
    pub num_src: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<u32>,
}

impl MfgBlock {
    pub fn as_ref(&self) -> BlockRef<'_> {
        BlockRef {
            num_dst: self.num_dst,
            num_src: self.num_src,
            offsets: &self.offsets,
            indices: &self.indices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mfg {
    /// Graph ids of the outermost sources, in row order.
    pub input_nodes: Vec<NodeId>,
    /// Graph ids of the seeds, in row order of the final output.
    pub seeds: Vec<NodeId>,
    /// Outermost hop first.
    pub blocks: Vec<MfgBlock>,
}

impl Mfg {
    pub fn block_refs(&self) -> Vec<BlockRef<'_>> {
        self.blocks.iter().map(MfgBlock::as_ref).collect()
    }

    /// Feature rows of the input nodes.
    pub fn gather(&self, features: &FeatureMatrix) -> Tensor {
        gather_rows(features, &self.input_nodes)
    }
}

pub fn gather_rows(features: &FeatureMatrix, nodes: &[NodeId]) -> Tensor {
    let cols = features.cols();
    let mut data = Vec::with_capacity(nodes.len() * cols);
    for &v in nodes {
        data.extend(features.row(v as usize).iter().map(|&x| x as f64));
    }
    Tensor::new(nodes.len(), cols, data)
}

/// All features as a tensor, for full-graph encoding.
pub fn features_tensor(features: &FeatureMatrix) -> Tensor {
    Tensor::new(
        features.rows(),
        features.cols(),
        features.values().iter().map(|&x| x as f64).collect(),
    )
}

/// Samples an MFG rooted at `seeds` (distinct nodes of `g`).
pub fn build_mfg(g: &Graph, seeds: &[NodeId], fanouts: &[Fanout], rng: &mut Rng) -> Mfg {
    let mut frontier: Vec<NodeId> = seeds.to_vec();
    let mut blocks = Vec::with_capacity(fanouts.len());
    for &fanout in fanouts.iter().rev() {
        let mut pos: HashMap<NodeId, u32> = frontier
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();
        let mut src = frontier.clone();
        let mut offsets = Vec::with_capacity(frontier.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for &v in &frontier {
            let nbrs = g.neighbors(v);
            let mut take = |u: NodeId, indices: &mut Vec<u32>| {
                let next = src.len() as u32;
                let row = *pos.entry(u).or_insert_with(|| {
                    src.push(u);
                    next
                });
                indices.push(row);
            };
            match fanout {
                Fanout::Limit(k) if k < nbrs.len() => {
                    for i in index::sample(rng, nbrs.len(), k).into_iter() {
                        take(nbrs[i], &mut indices);
                    }
                }
                _ => nbrs.iter().for_each(|&u| take(u, &mut indices)),
            }
            offsets.push(indices.len());
        }
        blocks.push(MfgBlock {
            num_dst: frontier.len(),
            num_src: src.len(),
            offsets,
            indices,
        });
        frontier = src;
    }
    blocks.reverse();
    Mfg {
        input_nodes: frontier,
        seeds: seeds.to_vec(),
        blocks,
    }
}

/// Positive edges, one corrupted-tail negative per positive, and the MFG
/// covering every endpoint. Node ids are local to the subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub positives: Vec<(NodeId, NodeId)>,
    pub negatives: Vec<(NodeId, NodeId)>,
    pub mfg: Mfg,
    /// Seed-row pairs, positives first.
    pub pairs: Vec<(u32, u32)>,
    pub labels: Vec<f64>,
}

/// Draws `min(batch_size, |E_local|)` distinct local edges with a random
/// orientation, pairs each with a tail drawn uniformly from the other local
/// nodes, and samples the MFG over all endpoints.
pub fn sample_minibatch(
    sub: &Subgraph,
    batch_size: usize,
    fanouts: &[Fanout],
    rng: &mut Rng,
) -> Result<Minibatch, SamplingError> {
    if batch_size == 0 {
        return Err(SamplingError::EmptyBatch);
    }
    let edges = &sub.train_edges;
    if edges.is_empty() {
        return Err(SamplingError::NoLocalEdges);
    }
    let n = sub.graph.num_nodes() as u32;
    let b = batch_size.min(edges.len());
    let mut positives = Vec::with_capacity(b);
    let mut negatives = Vec::with_capacity(b);
    for i in index::sample(rng, edges.len(), b).into_iter() {
        let (a, c) = edges[i];
        let (u, v) = if rng.random_bool(0.5) { (a, c) } else { (c, a) };
        let mut t = rng.random_range(0..n - 1);
        if t >= v {
            t += 1;
        }
        positives.push((u, v));
        negatives.push((u, t));
    }

    let mut row: HashMap<NodeId, u32> = HashMap::with_capacity(4 * b);
    let mut seeds = Vec::with_capacity(3 * b);
    let mut slot = |v: NodeId| {
        *row.entry(v).or_insert_with(|| {
            seeds.push(v);
            (seeds.len() - 1) as u32
        })
    };
    let mut pairs = Vec::with_capacity(2 * b);
    for &(u, v) in positives.iter().chain(&negatives) {
        let (ru, rv) = (slot(u), slot(v));
        pairs.push((ru, rv));
    }
    let mut labels = vec![1.0; b];
    labels.resize(2 * b, 0.0);
    let mfg = build_mfg(&sub.graph, &seeds, fanouts, rng);
    Ok(Minibatch {
        positives,
        negatives,
        mfg,
        pairs,
        labels,
    })
}

#[cfg(test)]
mod tests;
