//! Node partitions, the three assignment schemes, induced subgraphs and
//! partition statistics.
//!
//! Trainer ids are zero-based internally; user-facing surfaces (CLI flags,
//! metrics headers) number trainers from one.

mod cluster;

pub use cluster::{cluster, edge_cut, ClusterConfig};

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::graph::{FeatureMatrix, Graph, NodeId, NodeLabels};
use crate::io::{invalid, read_file, write_file, FormatError, Reader, Writer};
use crate::rng;

pub type TrainerId = u16;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("invalid count: {0}")]
    InvalidCount(String),
    #[error("partition covers {partition} nodes, graph has {graph}")]
    SizeMismatch { partition: usize, graph: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    RandomNode,
    SuperNode { clusters: usize },
    MinCut,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::RandomNode => write!(f, "random"),
            Scheme::SuperNode { clusters } => write!(f, "super({clusters})"),
            Scheme::MinCut => write!(f, "mincut"),
        }
    }
}

/// The node-to-trainer map together with the scheme that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<TrainerId>,
    num_parts: usize,
    scheme: Option<Scheme>,
}

impl Partition {
    pub fn new(
        assignment: Vec<TrainerId>,
        num_parts: usize,
        scheme: Option<Scheme>,
    ) -> Result<Self, PartitionError> {
        if num_parts == 0 || num_parts > TrainerId::MAX as usize {
            return Err(PartitionError::InvalidCount(format!(
                "trainer count {num_parts} out of range"
            )));
        }
        if let Some(v) = assignment.iter().position(|&a| a as usize >= num_parts) {
            return Err(PartitionError::InvalidCount(format!(
                "node {v} assigned to trainer {} of {num_parts}",
                assignment[v]
            )));
        }
        Ok(Self {
            assignment,
            num_parts,
            scheme,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn scheme(&self) -> Option<Scheme> {
        self.scheme
    }

    pub fn trainer_of(&self, v: NodeId) -> TrainerId {
        self.assignment[v as usize]
    }

    pub fn assignment(&self) -> &[TrainerId] {
        &self.assignment
    }

    /// Sorted node lists, one per trainer.
    pub fn parts(&self) -> Vec<Vec<NodeId>> {
        let mut parts = vec![Vec::new(); self.num_parts];
        for (v, &a) in self.assignment.iter().enumerate() {
            parts[a as usize].push(v as NodeId);
        }
        parts
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_parts];
        for &a in &self.assignment {
            sizes[a as usize] += 1;
        }
        sizes
    }

    /// True if every part is within `slack` of the average size.
    pub fn is_balanced(&self, slack: f64) -> bool {
        let avg = self.num_nodes() as f64 / self.num_parts as f64;
        self.sizes()
            .iter()
            .all(|&s| (s as f64 - avg).abs() <= (avg * slack).max(1.0))
    }

    pub fn save(&self, path: &Path) -> Result<(), PartitionError> {
        let mut w = Writer::default();
        w.bytes(b"TMAP");
        w.u64(self.assignment.len() as u64);
        w.u16(self.num_parts as u16);
        for &a in &self.assignment {
            w.u16(a);
        }
        Ok(write_file(path, &w.buf)?)
    }

    pub fn load(path: &Path) -> Result<Self, PartitionError> {
        let buf = read_file(path)?;
        let mut r = Reader::new(&buf);
        r.magic(b"TMAP")?;
        let n = r.u64()? as usize;
        let m = r.u16()? as usize;
        let at = r.offset();
        let mut assignment = Vec::with_capacity(n.min(r.remaining() / 2));
        for _ in 0..n {
            assignment.push(r.u16()?);
        }
        r.finish()?;
        if m == 0 {
            return Err(invalid(at - 2, "trainer count is zero").into());
        }
        if let Some(v) = assignment.iter().position(|&a| a as usize >= m) {
            return Err(invalid(at + 2 * v, format!("node {v}: trainer id out of range")).into());
        }
        Ok(Self {
            assignment,
            num_parts: m,
            scheme: None,
        })
    }
}

/// Every node independently and uniformly assigned to one of `m` trainers.
pub fn partition_random_node(g: &Graph, m: usize, seed: u64) -> Result<Partition, PartitionError> {
    check_trainers(m)?;
    let mut rng = rng::seeded(seed, rng::stream::PARTITION);
    let assignment = (0..g.num_nodes())
        .map(|_| rng.random_range(0..m) as TrainerId)
        .collect();
    Partition::new(assignment, m, Some(Scheme::RandomNode))
}

/// Clusters the graph into `n` super-nodes and deals them to trainers in a
/// random order. Dealing keeps each cluster's trainer uniform while holding
/// part sizes balanced; with `n == m` it is a random bijection.
pub fn partition_super_node(
    g: &Graph,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    partition_super_node_with(g, m, n, seed, &ClusterConfig::default())
}

pub fn partition_super_node_with(
    g: &Graph,
    m: usize,
    n: usize,
    seed: u64,
    cfg: &ClusterConfig,
) -> Result<Partition, PartitionError> {
    check_trainers(m)?;
    if n < m {
        return Err(PartitionError::InvalidCount(format!(
            "super-node count {n} below trainer count {m}"
        )));
    }
    let clusters = cluster(g, n, seed, cfg)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, rng::stream::PARTITION));
    let mut owner = vec![0 as TrainerId; n];
    for (pos, &c) in order.iter().enumerate() {
        owner[c] = (pos % m) as TrainerId;
    }
    let assignment = clusters.iter().map(|&c| owner[c as usize]).collect();
    Partition::new(assignment, m, Some(Scheme::SuperNode { clusters: n }))
}

/// `m` balanced low-cut clusters mapped one-to-one onto trainers.
pub fn partition_min_cut(g: &Graph, m: usize, seed: u64) -> Result<Partition, PartitionError> {
    partition_min_cut_with(g, m, seed, &ClusterConfig::default())
}

pub fn partition_min_cut_with(
    g: &Graph,
    m: usize,
    seed: u64,
    cfg: &ClusterConfig,
) -> Result<Partition, PartitionError> {
    check_trainers(m)?;
    let clusters = cluster(g, m, seed, cfg)?;
    let assignment = clusters.iter().map(|&c| c as TrainerId).collect();
    Partition::new(assignment, m, Some(Scheme::MinCut))
}

pub fn partition_with_scheme(
    g: &Graph,
    scheme: Scheme,
    m: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    match scheme {
        Scheme::RandomNode => partition_random_node(g, m, seed),
        Scheme::SuperNode { clusters } => partition_super_node(g, m, clusters, seed),
        Scheme::MinCut => partition_min_cut(g, m, seed),
    }
}

fn check_trainers(m: usize) -> Result<(), PartitionError> {
    if m == 0 || m > TrainerId::MAX as usize {
        return Err(PartitionError::InvalidCount(format!(
            "trainer count {m} out of range"
        )));
    }
    Ok(())
}

/// One trainer's node-induced training subgraph.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub trainer: TrainerId,
    /// Local graph; local node `i` is global node `global_ids[i]`.
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub global_ids: Vec<NodeId>,
    /// Local training edges, each once with `u < v`.
    pub train_edges: Vec<(NodeId, NodeId)>,
}

impl Subgraph {
    /// The whole training graph as a single trainer's subgraph.
    pub fn whole(train_graph: &Graph, features: &FeatureMatrix) -> Self {
        Self {
            trainer: 0,
            graph: train_graph.clone(),
            features: features.clone(),
            global_ids: (0..train_graph.num_nodes() as NodeId).collect(),
            train_edges: train_graph.edges().collect(),
        }
    }
}

/// Node-induced subgraphs of the training graph. Cross-partition edges are
/// dropped; held-out edges never appear because they are absent from
/// `train_graph`.
pub fn induce_subgraphs(
    train_graph: &Graph,
    features: &FeatureMatrix,
    p: &Partition,
) -> Result<Vec<Subgraph>, PartitionError> {
    if p.num_nodes() != train_graph.num_nodes() {
        return Err(PartitionError::SizeMismatch {
            partition: p.num_nodes(),
            graph: train_graph.num_nodes(),
        });
    }
    Ok(p.parts()
        .into_iter()
        .enumerate()
        .map(|(i, nodes)| {
            let graph = train_graph.induced(&nodes);
            Subgraph {
                trainer: i as TrainerId,
                train_edges: graph.edges().collect(),
                features: features.select_rows(&nodes),
                graph,
                global_ids: nodes,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    /// Fraction of training edges kept inside some part.
    pub edge_ratio: f64,
    pub node_counts: Vec<usize>,
    pub edge_counts: Vec<usize>,
    /// Normalized label histogram per part (all zeros for an empty part).
    pub class_distribution: Vec<Vec<f64>>,
    /// Largest L2 distance between the class distributions of two
    /// non-empty parts.
    pub max_disparity: f64,
}

pub fn partition_stats(
    train_graph: &Graph,
    labels: &NodeLabels,
    p: &Partition,
) -> Result<PartitionStats, PartitionError> {
    if p.num_nodes() != train_graph.num_nodes() || labels.len() != train_graph.num_nodes() {
        return Err(PartitionError::SizeMismatch {
            partition: p.num_nodes(),
            graph: train_graph.num_nodes(),
        });
    }
    let m = p.num_parts();
    let k = labels.num_classes();
    let mut edge_counts = vec![0usize; m];
    for (u, v) in train_graph.edges() {
        let (a, b) = (p.trainer_of(u), p.trainer_of(v));
        if a == b {
            edge_counts[a as usize] += 1;
        }
    }
    let node_counts = p.sizes();
    let mut class_distribution = vec![vec![0.0; k]; m];
    for (v, &y) in labels.as_slice().iter().enumerate() {
        class_distribution[p.trainer_of(v as NodeId) as usize][y as usize] += 1.0;
    }
    for (dist, &count) in class_distribution.iter_mut().zip(&node_counts) {
        if count > 0 {
            dist.iter_mut().for_each(|x| *x /= count as f64);
        }
    }
    let mut max_disparity: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            if node_counts[i] > 0 && node_counts[j] > 0 {
                let d: f64 = class_distribution[i]
                    .iter()
                    .zip(&class_distribution[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                max_disparity = max_disparity.max(d);
            }
        }
    }
    let retained: usize = edge_counts.iter().sum();
    let edge_ratio = if train_graph.num_edges() == 0 {
        1.0
    } else {
        retained as f64 / train_graph.num_edges() as f64
    };
    Ok(PartitionStats {
        edge_ratio,
        node_counts,
        edge_counts,
        class_distribution,
        max_disparity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticSpec};

    fn synth(n: usize, h: f64, seed: u64) -> crate::graph::SyntheticGraph {
        generate_synthetic(&SyntheticSpec {
            num_nodes: n,
            mean_degree: 10.0,
            homophily: h,
            classes: 2,
            seed,
        })
        .unwrap()
    }

    fn path() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn single_trainer_keeps_everything() {
        let s = synth(500, 0.8, 0);
        for p in [
            partition_random_node(&s.graph, 1, 0).unwrap(),
            partition_min_cut(&s.graph, 1, 0).unwrap(),
            partition_super_node(&s.graph, 1, 10, 0).unwrap(),
        ] {
            let st = partition_stats(&s.graph, &s.labels, &p).unwrap();
            assert_eq!(st.edge_ratio, 1.0);
            let subs = induce_subgraphs(&s.graph, &s.features, &p).unwrap();
            assert_eq!(subs.len(), 1);
            assert_eq!(subs[0].graph, s.graph);
        }
    }

    #[test]
    fn random_node_ratio_near_one_over_m() {
        let s = synth(4000, 0.8, 1);
        let e = s.graph.num_edges() as f64;
        let sigma = (e * (1.0 / 3.0) * (2.0 / 3.0)).sqrt() / e;
        for seed in 0..5 {
            let p = partition_random_node(&s.graph, 3, seed).unwrap();
            let r = partition_stats(&s.graph, &s.labels, &p).unwrap().edge_ratio;
            // Edges sharing endpoints are correlated; allow a generous band.
            assert!((r - 1.0 / 3.0).abs() < 6.0 * sigma, "{r}");
        }
    }

    #[test]
    fn one_trainer_per_node_drops_all_edges() {
        let s = synth(200, 0.8, 2);
        let p = partition_random_node(&s.graph, 200, 0).unwrap();
        let r = partition_stats(&s.graph, &s.labels, &p).unwrap().edge_ratio;
        assert!(r < 0.03, "{r}");
    }

    #[test]
    fn super_node_with_m_clusters_matches_min_cut_up_to_relabeling() {
        let s = synth(1000, 0.9, 3);
        for seed in 0..3 {
            let a = partition_super_node(&s.graph, 3, 3, seed).unwrap();
            let b = partition_min_cut(&s.graph, 3, seed).unwrap();
            let mut map = [None; 3];
            for v in 0..1000 {
                let (x, y) = (a.assignment()[v] as usize, b.assignment()[v]);
                match map[x] {
                    None => map[x] = Some(y),
                    Some(prev) => assert_eq!(prev, y),
                }
            }
            let mut images: Vec<_> = map.iter().map(|m| m.unwrap()).collect();
            images.sort();
            assert_eq!(images, vec![0, 1, 2]);
        }
    }

    #[test]
    fn super_node_rejects_fewer_clusters_than_trainers() {
        let s = synth(100, 0.9, 3);
        assert!(partition_super_node(&s.graph, 3, 2, 0).is_err());
    }

    #[test]
    fn path_induced_subgraphs() {
        let g = path();
        let x = FeatureMatrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let p = Partition::new(vec![0, 1, 0], 2, None).unwrap();
        let subs = induce_subgraphs(&g, &x, &p).unwrap();
        assert_eq!(subs[0].global_ids, vec![0, 2]);
        assert_eq!(subs[0].graph.num_edges(), 0);
        assert_eq!(subs[0].features.row(1), &[2.0]);
        assert_eq!(subs[1].global_ids, vec![1]);
        assert_eq!(subs[1].graph.num_edges(), 0);
    }

    #[test]
    fn subgraph_edges_match_edge_ratio() {
        let s = synth(1500, 0.9, 4);
        for p in [
            partition_random_node(&s.graph, 3, 1).unwrap(),
            partition_min_cut(&s.graph, 3, 1).unwrap(),
            partition_super_node(&s.graph, 3, 30, 1).unwrap(),
        ] {
            let subs = induce_subgraphs(&s.graph, &s.features, &p).unwrap();
            let kept: usize = subs.iter().map(|s| s.graph.num_edges()).sum();
            let st = partition_stats(&s.graph, &s.labels, &p).unwrap();
            assert_eq!(kept as f64 / s.graph.num_edges() as f64, st.edge_ratio);
            let mut covered: Vec<NodeId> = subs.iter().flat_map(|s| s.global_ids.clone()).collect();
            covered.sort();
            assert_eq!(covered, (0..1500).collect::<Vec<_>>());
            for sub in &subs {
                for &(u, v) in &sub.train_edges {
                    let (gu, gv) = (sub.global_ids[u as usize], sub.global_ids[v as usize]);
                    assert!(s.graph.has_edge(gu, gv));
                    assert_eq!(p.trainer_of(gu), p.trainer_of(gv));
                }
            }
        }
    }

    #[test]
    fn min_cut_separates_classes_at_full_homophily() {
        let s = synth(2000, 1.0, 5);
        let p = partition_min_cut(&s.graph, 2, 0).unwrap();
        let st = partition_stats(&s.graph, &s.labels, &p).unwrap();
        assert!((st.max_disparity - 2f64.sqrt()).abs() < 1e-12, "{:?}", st);
        assert!(p.is_balanced(0.05));
    }

    #[test]
    fn single_class_distributions_identical() {
        let g = synth(600, 0.8, 6).graph;
        let labels = NodeLabels::new(vec![0; 600], 1).unwrap();
        for p in [
            partition_random_node(&g, 3, 0).unwrap(),
            partition_min_cut(&g, 3, 0).unwrap(),
        ] {
            let st = partition_stats(&g, &labels, &p).unwrap();
            assert_eq!(st.max_disparity, 0.0);
        }
    }

    #[test]
    fn partition_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Partition::new(vec![0, 2, 1, 1], 3, Some(Scheme::MinCut)).unwrap();
        let path = dir.path().join("p.tmap");
        p.save(&path).unwrap();
        let back = Partition::load(&path).unwrap();
        assert_eq!(back.assignment(), p.assignment());
        assert_eq!(back.num_parts(), 3);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        std::fs::write(&path, &bytes).unwrap();
        assert!(Partition::load(&path).is_err());
    }
}
