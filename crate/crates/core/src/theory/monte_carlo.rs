//! Estimators that measure the closed-form quantities on generated graphs,
//! using the nn crate's backward pass for the gradients.

use std::thread;

use super::{expected_edge_cut, expected_initial_gradients, l2, InitialGradients, TheoryError, TwoClassSetup};
use crate::graph::{generate_synthetic, Graph, NodeId, NodeLabels, SyntheticSpec};
use crate::nn::{BlockRef, Model, ModelConfig, Tensor};
use crate::partition::{partition_min_cut, partition_random_node, Partition, Scheme};

/// Two-way partition with a `beta` share of class 0 and a `1 - beta` share of
/// class 1 on trainer 0. Nodes are taken in id order, which is random with
/// respect to the shuffled labels.
pub fn aligned_partition(labels: &NodeLabels, beta: f64) -> Result<Partition, TheoryError> {
    if labels.num_classes() != 2 {
        return Err(TheoryError::OutOfRange(format!(
            "aligned partitions need two classes, got {}",
            labels.num_classes()
        )));
    }
    let count = |c| labels.as_slice().iter().filter(|&&y| y == c).count();
    let quota = [
        (beta * count(0) as f64).round() as usize,
        ((1.0 - beta) * count(1) as f64).round() as usize,
    ];
    let mut taken = [0usize; 2];
    let assignment = labels
        .as_slice()
        .iter()
        .map(|&y| {
            let c = y as usize;
            if taken[c] < quota[c] {
                taken[c] += 1;
                0
            } else {
                1
            }
        })
        .collect();
    Ok(Partition::new(assignment, 2, None)?)
}

/// Mean gradient of the squared loss with respect to `W` for the sigmoid GCN
/// layer at `W = 0`, over class-1 nodes with at least one neighbor. `None`
/// if there are no such nodes.
pub fn mean_initial_gradient(g: &Graph, labels: &[u16]) -> Result<Option<[f64; 2]>, TheoryError> {
    let n = g.num_nodes();
    let model = Model::new(&ModelConfig::theory(2))?;
    let mut w = model.init();
    w.tensor_mut(0).fill(0.0);
    let x = Tensor::from_fn(n, 2, |v, c| f64::from(u8::from(labels[v] as usize == c)));
    let blocks = [BlockRef::full(g)];
    let trace = model.encode_forward(&w, &blocks, x)?;
    let z = trace.output();
    let mut d = Tensor::zeros(n, 1);
    let mut count = 0usize;
    for v in 0..n {
        if labels[v] == 1 && g.degree(v as NodeId) > 0 {
            d.data_mut()[v] = z.data()[v] - 1.0;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let mut grads = w.zeros_like();
    model.encode_backward(&w, &blocks, &trace, d, &mut grads);
    let gw = grads.tensor(0).data();
    Ok(Some([gw[0] / count as f64, gw[1] / count as f64]))
}

fn part_gradients(g: &Graph, labels: &NodeLabels, p: &Partition) -> Result<Vec<Option<[f64; 2]>>, TheoryError> {
    p.parts()
        .iter()
        .map(|nodes| {
            let local = g.induced(nodes);
            let y: Vec<u16> = nodes.iter().map(|&v| labels.get(v)).collect();
            mean_initial_gradient(&local, &y)
        })
        .collect()
}

fn cut_edges(g: &Graph, p: &Partition) -> usize {
    g.edges().filter(|&(u, v)| p.trainer_of(u) != p.trainer_of(v)).count()
}

/// Runs `f` over `seeds` on up to `available_parallelism` threads and
/// returns results in seed order.
fn par_map<T: Send>(seeds: &[u64], f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len()).max(1);
    if workers == 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| scope.spawn(|| c.iter().map(|&s| f(s)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("monte carlo worker panicked"))
            .collect()
    })
}

/// Closed form next to its Monte Carlo estimate for one `(h, beta)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingReport {
    pub h: f64,
    pub beta: f64,
    pub seeds: usize,
    pub lambda_theory: f64,
    pub lambda_empirical: f64,
    /// `None` where the closed form is singular.
    pub theory: Option<InitialGradients>,
    pub empirical_global: [f64; 2],
    /// `None` if no seed had an eligible class-1 node on that instance.
    pub empirical_local1: Option<[f64; 2]>,
    pub empirical_local2: Option<[f64; 2]>,
}

impl BindingReport {
    pub fn lambda_rel_error(&self) -> f64 {
        rel(self.lambda_empirical, self.lambda_theory)
    }

    /// Relative l2 errors of the global and the two local gradients; `None`
    /// for vectors that cannot be compared.
    pub fn gradient_rel_errors(&self) -> [Option<f64>; 3] {
        let Some(t) = self.theory else {
            return [None; 3];
        };
        let err = |e: Option<[f64; 2]>, t: [f64; 2]| e.map(|e| l2(e, t) / l2(t, [0.0; 2]));
        [
            err(Some(self.empirical_global), t.global),
            err(self.empirical_local1, t.local1),
            err(self.empirical_local2, t.local2),
        ]
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn mean_of(vs: impl Iterator<Item = [f64; 2]>) -> Option<[f64; 2]> {
    let mut acc = [0.0; 2];
    let mut n = 0usize;
    for v in vs {
        acc[0] += v[0];
        acc[1] += v[1];
        n += 1;
    }
    (n > 0).then(|| [acc[0] / n as f64, acc[1] / n as f64])
}

/// Generates one graph per seed, splits it with [`aligned_partition`], and
/// averages the cut size and the per-instance mean initial gradients.
pub fn binding_check(
    num_nodes: usize,
    mean_degree: f64,
    h: f64,
    beta: f64,
    seeds: &[u64],
) -> Result<BindingReport, TheoryError> {
    if seeds.is_empty() {
        return Err(TheoryError::OutOfRange("at least one seed is required".into()));
    }
    let runs = par_map(seeds, |seed| -> Result<_, TheoryError> {
        let s = generate_synthetic(&SyntheticSpec {
            num_nodes,
            mean_degree,
            homophily: h,
            classes: 2,
            seed,
        })?;
        let p = aligned_partition(&s.labels, beta)?;
        let global = mean_initial_gradient(&s.graph, s.labels.as_slice())?;
        let local = part_gradients(&s.graph, &s.labels, &p)?;
        Ok((s.edge_scale, cut_edges(&s.graph, &p), global, local))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let edge_scale = runs[0].0;
    let setup = TwoClassSetup::for_generator(beta, h, num_nodes, edge_scale)?;
    let lambda_empirical = runs.iter().map(|r| r.1 as f64).sum::<f64>() / runs.len() as f64;
    let empirical_global = mean_of(runs.iter().filter_map(|r| r.2))
        .ok_or_else(|| TheoryError::OutOfRange("no class-1 node has a neighbor".into()))?;
    Ok(BindingReport {
        h,
        beta,
        seeds: seeds.len(),
        lambda_theory: expected_edge_cut(&setup),
        lambda_empirical,
        theory: expected_initial_gradients(&setup).ok(),
        empirical_global,
        empirical_local1: mean_of(runs.iter().filter_map(|r| r.3[0])),
        empirical_local2: mean_of(runs.iter().filter_map(|r| r.3[1])),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    /// Mean and standard error of the class-0 share gap between trainers 0
    /// and 1 under random-node partitioning.
    pub class_gap_mean: f64,
    pub class_gap_stderr: f64,
    /// Mean over seeds of the largest pairwise distance between per-trainer
    /// mean initial gradients.
    pub random_spread: f64,
    pub min_cut_spread: f64,
}

fn spread(grads: &[Option<[f64; 2]>]) -> f64 {
    let present: Vec<[f64; 2]> = grads.iter().flatten().copied().collect();
    let mut worst: f64 = 0.0;
    for (i, a) in present.iter().enumerate() {
        for b in &present[i + 1..] {
            worst = worst.max(l2(*a, *b));
        }
    }
    worst
}

/// Compares per-trainer class mixes and initial gradients under random-node
/// and min-cut partitioning of two-class generated graphs.
pub fn corollary_check(
    m: usize,
    num_nodes: usize,
    mean_degree: f64,
    h: f64,
    seeds: &[u64],
) -> Result<SpreadReport, TheoryError> {
    if seeds.is_empty() {
        return Err(TheoryError::OutOfRange("at least one seed is required".into()));
    }
    let runs = par_map(seeds, |seed| -> Result<_, TheoryError> {
        let s = generate_synthetic(&SyntheticSpec {
            num_nodes,
            mean_degree,
            homophily: h,
            classes: 2,
            seed,
        })?;
        let random = partition_random_node(&s.graph, m, seed)?;
        let min_cut = partition_min_cut(&s.graph, m, seed)?;
        debug_assert_eq!(min_cut.scheme(), Some(Scheme::MinCut));
        let share = |part: &[NodeId]| {
            part.iter().filter(|&&v| s.labels.get(v) == 0).count() as f64 / part.len().max(1) as f64
        };
        let parts = random.parts();
        let gap = if m > 1 { share(&parts[0]) - share(&parts[1]) } else { 0.0 };
        Ok((
            gap,
            spread(&part_gradients(&s.graph, &s.labels, &random)?),
            spread(&part_gradients(&s.graph, &s.labels, &min_cut)?),
        ))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.0).sum::<f64>() / n;
    let var = runs.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(SpreadReport {
        class_gap_mean: mean,
        class_gap_stderr: (var / n).sqrt(),
        random_spread: runs.iter().map(|r| r.1).sum::<f64>() / n,
        min_cut_spread: runs.iter().map(|r| r.2).sum::<f64>() / n,
    })
}
