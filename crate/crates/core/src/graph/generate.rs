//! Synthetic homophilic graphs drawn from a class compatibility matrix.
//!
//! Every unordered pair `(i, j)` is an edge independently with probability
//! `q * H(y_i, y_j)`. Within one class block the probability is constant, so
//! pairs are enumerated with geometric skips and generation costs
//! `O(|V| + |E|)` rather than `O(|V|^2)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{FeatureMatrix, Graph, GraphError, NodeId, NodeLabels};
use crate::rng::{self, Rng};

/// `H(a, b) = h` on the diagonal and `(1 - h) / (k - 1)` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityMatrix {
    h: f64,
    k: usize,
}

impl CompatibilityMatrix {
    pub fn new(h: f64, k: usize) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&h) {
            return Err(GraphError::InvalidParameters(format!(
                "homophily {h} outside [0, 1]"
            )));
        }
        if k < 2 {
            return Err(GraphError::InvalidParameters(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        Ok(Self { h, k })
    }

    pub fn homophily(&self) -> f64 {
        self.h
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.h
        } else {
            (1.0 - self.h) / (self.k - 1) as f64
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.get(0, 0).max(self.get(0, 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub mean_degree: f64,
    pub homophily: f64,
    pub classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub graph: Graph,
    /// One-hot labels.
    pub features: FeatureMatrix,
    pub labels: NodeLabels,
    /// Pair scale `q`; an edge appears with probability `q * H(y_i, y_j)`.
    pub edge_scale: f64,
    pub compatibility: CompatibilityMatrix,
}

/// Draws a graph with exactly balanced classes.
///
/// Labels are assigned by a seeded shuffle, so node ids carry no class
/// information. `q` is chosen so the expected degree of every node equals
/// `mean_degree`:
/// `q * (h * (s - 1) + (1 - h) / (k - 1) * (n - s)) = mean_degree` with
/// class size `s = n / k`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticGraph, GraphError> {
    let &SyntheticSpec {
        num_nodes: n,
        mean_degree,
        homophily,
        classes: k,
        seed,
    } = spec;
    let compat = CompatibilityMatrix::new(homophily, k)?;
    if n == 0 || n % 2 != 0 || n % k != 0 {
        return Err(GraphError::InvalidParameters(format!(
            "num_nodes {n} must be positive, even and divisible by {k}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(GraphError::InvalidParameters("num_nodes exceeds u32".into()));
    }
    if !(mean_degree >= 0.0) || mean_degree * n as f64 > (n as f64) * (n as f64) / 4.0 {
        return Err(GraphError::InvalidParameters(format!(
            "mean degree {mean_degree} is negative or too large for {n} nodes"
        )));
    }
    let s = n / k;
    let weighted = compat.get(0, 0) * (s as f64 - 1.0) + compat.get(0, 1) * (n - s) as f64;
    let q = if mean_degree == 0.0 {
        0.0
    } else if weighted <= 0.0 {
        return Err(GraphError::InvalidParameters(
            "compatibility matrix admits no edges".into(),
        ));
    } else {
        mean_degree / weighted
    };
    if q * compat.max_entry() > 1.0 {
        return Err(GraphError::InvalidParameters(format!(
            "mean degree {mean_degree} needs pair probability {} > 1 at h = {homophily}",
            q * compat.max_entry()
        )));
    }

    let mut rng = rng::seeded(seed, rng::stream::GENERATOR);
    let mut labels: Vec<u16> = (0..n).map(|v| (v / s) as u16).collect();
    labels.shuffle(&mut rng);
    let mut members: Vec<Vec<NodeId>> = vec![Vec::with_capacity(s); k];
    for (v, &y) in labels.iter().enumerate() {
        members[y as usize].push(v as NodeId);
    }

    let mut edges = Vec::with_capacity((mean_degree * n as f64 / 2.0 * 1.1) as usize + 16);
    for a in 0..k {
        for b in a..k {
            let p = q * compat.get(a, b);
            if a == b {
                sample_triangle(&members[a], p, &mut rng, &mut edges);
            } else {
                sample_rectangle(&members[a], &members[b], p, &mut rng, &mut edges);
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?;
    let labels = NodeLabels::new(labels, k as u16)?;
    Ok(SyntheticGraph {
        features: FeatureMatrix::one_hot(&labels),
        graph,
        labels,
        edge_scale: q,
        compatibility: compat,
    })
}

/// Number of failures before the next success of a Bernoulli(p) sequence.
fn geometric_skip(p: f64, rng: &mut Rng) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let skip = (u.ln() / (1.0 - p).ln()).floor();
    if skip >= u64::MAX as f64 {
        u64::MAX
    } else {
        skip as u64
    }
}

fn sample_rectangle(
    left: &[NodeId],
    right: &[NodeId],
    p: f64,
    rng: &mut Rng,
    out: &mut Vec<(NodeId, NodeId)>,
) {
    if p <= 0.0 || left.is_empty() || right.is_empty() {
        return;
    }
    let total = left.len() as u64 * right.len() as u64;
    let mut idx = geometric_skip(p, rng);
    while idx < total {
        let i = (idx / right.len() as u64) as usize;
        let j = (idx % right.len() as u64) as usize;
        out.push((left[i], right[j]));
        idx = idx.saturating_add(1).saturating_add(geometric_skip(p, rng));
    }
}

fn sample_triangle(nodes: &[NodeId], p: f64, rng: &mut Rng, out: &mut Vec<(NodeId, NodeId)>) {
    let s = nodes.len() as u64;
    if p <= 0.0 || s < 2 {
        return;
    }
    let total = s * (s - 1) / 2;
    // Row i holds pairs (i, i+1..s); `row_start` is the linear index of its
    // first pair.
    let mut row = 0u64;
    let mut row_start = 0u64;
    let mut idx = geometric_skip(p, rng);
    while idx < total {
        while idx >= row_start + (s - 1 - row) {
            row_start += s - 1 - row;
            row += 1;
        }
        let col = row + 1 + (idx - row_start);
        out.push((nodes[row as usize], nodes[col as usize]));
        idx = idx.saturating_add(1).saturating_add(geometric_skip(p, rng));
    }
}

/// Appends `noise_dims` i.i.d. `N(0, scale^2)` columns to a feature matrix.
pub fn add_feature_noise(
    features: &FeatureMatrix,
    noise_dims: usize,
    scale: f64,
    seed: u64,
) -> Result<FeatureMatrix, GraphError> {
    if noise_dims == 0 {
        return Ok(features.clone());
    }
    let normal = Normal::new(0.0, scale)
        .map_err(|e| GraphError::InvalidParameters(format!("noise scale: {e}")))?;
    let mut rng = rng::seeded(seed, rng::stream::FEATURE_NOISE);
    let cols = features.cols() + noise_dims;
    let mut values = Vec::with_capacity(features.rows() * cols);
    for v in 0..features.rows() {
        values.extend_from_slice(features.row(v));
        values.extend((0..noise_dims).map(|_| normal.sample(&mut rng) as f32));
    }
    FeatureMatrix::new(features.rows(), cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::measure_homophily;

    fn spec(n: usize, d: f64, h: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_nodes: n,
            mean_degree: d,
            homophily: h,
            classes: 2,
            seed,
        }
    }

    #[test]
    fn perfect_homophily_has_no_cross_edges() {
        let g = generate_synthetic(&spec(1000, 10.0, 1.0, 3)).unwrap();
        assert_eq!(measure_homophily(&g.graph, &g.labels).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&spec(1000, 10.0, 0.8, 7)).unwrap();
        let b = generate_synthetic(&spec(1000, 10.0, 0.8, 7)).unwrap();
        assert_eq!(a.graph.edges().collect::<Vec<_>>(), b.graph.edges().collect::<Vec<_>>());
        assert_eq!(a.labels, b.labels);
        let c = generate_synthetic(&spec(1000, 10.0, 0.8, 8)).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn classes_exactly_balanced_and_features_one_hot() {
        let g = generate_synthetic(&SyntheticSpec {
            classes: 4,
            ..spec(1000, 6.0, 0.7, 1)
        })
        .unwrap();
        let mut counts = [0usize; 4];
        for &y in g.labels.as_slice() {
            counts[y as usize] += 1;
        }
        assert_eq!(counts, [250; 4]);
        for v in 0..1000 {
            let row = g.features.row(v);
            assert_eq!(row[g.labels.get(v as u32) as usize], 1.0);
            assert_eq!(row.iter().sum::<f32>(), 1.0);
        }
        g.graph.validate().unwrap();
    }

    #[test]
    fn mean_degree_matches_target() {
        let mut total = 0.0;
        for seed in 0..10 {
            let g = generate_synthetic(&spec(2000, 10.0, 0.8, seed)).unwrap();
            total += 2.0 * g.graph.num_edges() as f64 / 2000.0;
        }
        // std of the mean degree of one graph is about sqrt(2 * 10 / 2000) = 0.1.
        assert!((total / 10.0 - 10.0).abs() < 0.15, "{}", total / 10.0);
    }

    #[test]
    fn half_homophily_is_unbiased() {
        let mut sum = 0.0;
        for seed in 0..20 {
            let g = generate_synthetic(&spec(1000, 10.0, 0.5, seed)).unwrap();
            let h = measure_homophily(&g.graph, &g.labels).unwrap();
            assert!((h - 0.5).abs() < 0.05, "seed {seed}: {h}");
            sum += h;
        }
        assert!((sum / 20.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_synthetic(&SyntheticSpec { classes: 1, ..spec(10, 1.0, 0.5, 0) }).is_err());
        assert!(generate_synthetic(&spec(11, 1.0, 0.5, 0)).is_err());
        assert!(generate_synthetic(&spec(10, 1.0, 1.5, 0)).is_err());
        // h = 1 keeps all edges inside classes of 5 nodes: q = 2.5 / 4.
        assert!(generate_synthetic(&spec(10, 2.5, 1.0, 0)).is_ok());
        assert!(generate_synthetic(&spec(10, 2.5, 0.0, 0)).is_ok());
        let err = generate_synthetic(&SyntheticSpec { classes: 4, ..spec(8, 2.0, 1.0, 0) }).unwrap_err();
        assert!(err.to_string().contains("probability"), "{err}");
    }

    #[test]
    fn dense_block_samples_every_pair() {
        // Four classes of two nodes at h = 1: degree 1 needs p = 1 exactly.
        let g = generate_synthetic(&SyntheticSpec { classes: 4, ..spec(8, 1.0, 1.0, 0) }).unwrap();
        assert_eq!(g.graph.num_edges(), 4);
    }

    #[test]
    fn noise_columns_appended() {
        let g = generate_synthetic(&spec(100, 4.0, 0.9, 0)).unwrap();
        let x = add_feature_noise(&g.features, 3, 0.5, 0).unwrap();
        assert_eq!(x.cols(), 5);
        assert_eq!(&x.row(7)[..2], g.features.row(7));
    }
}
