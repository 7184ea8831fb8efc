//! Immutable undirected graphs in compressed sparse row form, node
//! attributes, synthetic generation and edge splits.

mod format;
mod generate;
mod splits;

pub use format::{
    load_features, load_graph, load_labels, load_splits, read_edge_list, save_features,
    save_graph, save_labels, save_splits,
};
pub use generate::{add_feature_noise, generate_synthetic, CompatibilityMatrix, SyntheticGraph, SyntheticSpec};
pub use splits::{build_splits, EdgeSplits, SplitSpec, SplitTag};

use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: u64, num_nodes: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("undefined homophily: graph has no edges")]
    UndefinedHomophily,
    #[error("label vector covers {labels} nodes, graph has {nodes}")]
    LabelMismatch { labels: usize, nodes: usize },
    #[error("cannot build splits: {0}")]
    Splits(String),
    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

/// Undirected simple graph. Both directions of every edge are stored and
/// each neighbor list is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
}

impl Graph {
    /// Builds a graph from undirected edges given in any orientation.
    /// Duplicate edges collapse; self-loops are rejected.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            for x in [u, v] {
                if x as usize >= num_nodes {
                    return Err(GraphError::NodeOutOfRange {
                        node: x as u64,
                        num_nodes,
                    });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            pairs.push((u, v));
            pairs.push((v, u));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, v)| v).collect();
        Ok(Self { offsets, neighbors })
    }

    /// Graph with `num_nodes` nodes and no edges.
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            offsets: vec![0; num_nodes + 1],
            neighbors: Vec::new(),
        }
    }

    /// Wraps raw CSR arrays after checking every structural invariant.
    pub fn from_csr(offsets: Vec<usize>, neighbors: Vec<NodeId>) -> Result<Self, String> {
        let g = Self { offsets, neighbors };
        g.validate()?;
        Ok(g)
    }

    /// Checks sortedness, simplicity, range and symmetry. The error names the
    /// first offending node.
    pub fn validate(&self) -> Result<(), String> {
        if self.offsets.is_empty() || self.offsets[0] != 0 {
            return Err("offsets must start at 0".into());
        }
        let n = self.num_nodes();
        if *self.offsets.last().unwrap() != self.neighbors.len() {
            return Err(format!(
                "last offset {} does not match neighbor array length {}",
                self.offsets.last().unwrap(),
                self.neighbors.len()
            ));
        }
        for v in 0..n {
            if self.offsets[v + 1] < self.offsets[v] {
                return Err(format!("node {v}: offsets decrease"));
            }
            let list = self.neighbors(v as NodeId);
            for (i, &u) in list.iter().enumerate() {
                if u as usize >= n {
                    return Err(format!("node {v}: neighbor {u} out of range"));
                }
                if u as usize == v {
                    return Err(format!("node {v}: self-loop"));
                }
                if i > 0 && list[i - 1] >= u {
                    return Err(format!("node {v}: neighbor list not sorted"));
                }
            }
        }
        for v in 0..n {
            for &u in self.neighbors(v as NodeId) {
                if !self.has_edge(u, v as NodeId) {
                    return Err(format!("node {v}: edge to {u} has no reverse entry"));
                }
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[NodeId] {
        &self.neighbors
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes() as NodeId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Node-induced subgraph over `nodes` (which must be sorted and unique).
    /// Local node `i` corresponds to `nodes[i]`.
    pub fn induced(&self, nodes: &[NodeId]) -> Graph {
        let mut local = vec![u32::MAX; self.num_nodes()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v as usize] = i as u32;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for &v in nodes {
            // Global order is preserved by the sorted node list, so local
            // neighbor lists come out sorted too.
            neighbors.extend(
                self.neighbors(v)
                    .iter()
                    .map(|&u| local[u as usize])
                    .filter(|&l| l != u32::MAX),
            );
            offsets.push(neighbors.len());
        }
        Graph { offsets, neighbors }
    }
}

/// Dense node feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self, GraphError> {
        if values.len() != rows * cols {
            return Err(GraphError::InvalidParameters(format!(
                "feature buffer has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(GraphError::InvalidParameters(format!(
                "non-finite feature at row {} column {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// One-hot encoding of node labels.
    pub fn one_hot(labels: &NodeLabels) -> Self {
        let k = labels.num_classes();
        let mut values = vec![0.0f32; labels.len() * k];
        for (v, &y) in labels.as_slice().iter().enumerate() {
            values[v * k + y as usize] = 1.0;
        }
        Self {
            rows: labels.len(),
            cols: k,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.values[v * self.cols..(v + 1) * self.cols]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Copies the rows named by `nodes` into a new matrix.
    pub fn select_rows(&self, nodes: &[NodeId]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(nodes.len() * self.cols);
        for &v in nodes {
            values.extend_from_slice(self.row(v as usize));
        }
        FeatureMatrix {
            rows: nodes.len(),
            cols: self.cols,
            values,
        }
    }
}

/// Per-node class ids in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels {
    labels: Vec<u16>,
    k: u16,
}

impl NodeLabels {
    pub fn new(labels: Vec<u16>, k: u16) -> Result<Self, GraphError> {
        if let Some(v) = labels.iter().position(|&y| y >= k) {
            return Err(GraphError::InvalidParameters(format!(
                "label {} of node {v} is not below class count {k}",
                labels[v]
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.k as usize
    }

    pub fn get(&self, v: NodeId) -> u16 {
        self.labels[v as usize]
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.labels
    }
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn measure_homophily(g: &Graph, labels: &NodeLabels) -> Result<f64, GraphError> {
    if labels.len() != g.num_nodes() {
        return Err(GraphError::LabelMismatch {
            labels: labels.len(),
            nodes: g.num_nodes(),
        });
    }
    if g.num_edges() == 0 {
        return Err(GraphError::UndefinedHomophily);
    }
    let same = g
        .edges()
        .filter(|&(u, v)| labels.get(u) == labels.get(v))
        .count();
    Ok(same as f64 / g.num_edges() as f64)
}
