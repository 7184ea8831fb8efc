//! Train / validation / test edge splits with fixed evaluation negatives.

use rand::seq::{index, SliceRandom};

use super::{Graph, GraphError, NodeId};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub val_frac: f64,
    pub test_frac: f64,
    /// Negative candidates per evaluation positive.
    pub negatives: usize,
    pub seed: u64,
}

/// Disjoint edge splits. Evaluation negatives are stored flat, `k` per
/// positive, in the same order as the positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplits {
    pub train: Vec<(NodeId, NodeId)>,
    pub val: Vec<(NodeId, NodeId)>,
    pub test: Vec<(NodeId, NodeId)>,
    pub k: usize,
    pub val_negatives: Vec<NodeId>,
    pub test_negatives: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl EdgeSplits {
    pub fn positives(&self, tag: SplitTag) -> &[(NodeId, NodeId)] {
        match tag {
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    /// Negative tails for positive `i` of split `tag`.
    pub fn negatives(&self, tag: SplitTag, i: usize) -> &[NodeId] {
        let all = match tag {
            SplitTag::Val => &self.val_negatives,
            SplitTag::Test => &self.test_negatives,
        };
        &all[i * self.k..(i + 1) * self.k]
    }
}

/// Samples validation and test positives uniformly without replacement,
/// removes them from the training graph, and draws `negatives` distinct
/// corrupted tails per positive.
///
/// A positive is only accepted if both endpoints keep at least one training
/// edge; rejected candidates are skipped and the next edge of the shuffled
/// order is tried instead.
pub fn build_splits(g: &Graph, spec: &SplitSpec) -> Result<(Graph, EdgeSplits), GraphError> {
    let SplitSpec {
        val_frac,
        test_frac,
        negatives: k,
        seed,
    } = *spec;
    if !(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 0.5) {
        return Err(GraphError::Splits(format!(
            "val_frac + test_frac must be below 0.5, got {val_frac} + {test_frac}"
        )));
    }
    let n = g.num_nodes();
    if k + 2 > n && (val_frac > 0.0 || test_frac > 0.0) {
        return Err(GraphError::Splits(format!(
            "{k} negatives need at least {} nodes, graph has {n}",
            k + 2
        )));
    }
    let edges: Vec<(NodeId, NodeId)> = g.edges().collect();
    let n_val = (val_frac * edges.len() as f64).round() as usize;
    let n_test = (test_frac * edges.len() as f64).round() as usize;

    let mut rng = rng::seeded(seed, rng::stream::SPLITS);
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut rng);

    let mut degree: Vec<usize> = (0..n).map(|v| g.degree(v as NodeId)).collect();
    let mut held_out = vec![false; edges.len()];
    let mut picked = Vec::with_capacity(n_val + n_test);
    for &e in &order {
        if picked.len() == n_val + n_test {
            break;
        }
        let (u, v) = edges[e];
        if degree[u as usize] >= 2 && degree[v as usize] >= 2 {
            degree[u as usize] -= 1;
            degree[v as usize] -= 1;
            held_out[e] = true;
            picked.push(edges[e]);
        }
    }
    if picked.len() < n_val + n_test {
        return Err(GraphError::Splits(format!(
            "only {} of {} held-out edges keep both endpoints connected",
            picked.len(),
            n_val + n_test
        )));
    }
    let test = picked.split_off(n_val);
    let val = picked;
    let train: Vec<(NodeId, NodeId)> = edges
        .iter()
        .zip(&held_out)
        .filter(|(_, &h)| !h)
        .map(|(&e, _)| e)
        .collect();

    let mut draw = |positives: &[(NodeId, NodeId)]| -> Vec<NodeId> {
        let mut out = Vec::with_capacity(positives.len() * k);
        for &(u, v) in positives {
            let (lo, hi) = if u < v { (u, v) } else { (v, u) };
            for i in index::sample(&mut rng, n - 2, k).into_iter() {
                // Map 0..n-2 onto V \ {lo, hi}.
                let mut x = i as NodeId;
                if x >= lo {
                    x += 1;
                }
                if x >= hi {
                    x += 1;
                }
                out.push(x);
            }
        }
        out
    };
    let val_negatives = draw(&val);
    let test_negatives = draw(&test);

    let train_graph = Graph::from_edges(n, train.iter().copied())?;
    Ok((
        train_graph,
        EdgeSplits {
            train,
            val,
            test,
            k,
            val_negatives,
            test_negatives,
        },
    ))
}
