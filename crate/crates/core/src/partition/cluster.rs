//! Balanced low-cut clustering used as a METIS stand-in.
//!
//! Seeds are placed by farthest-point BFS, regions grow round-robin by
//! absorbing the frontier node with the most links into the region, and
//! boundary sweeps then move nodes to the neighboring cluster with the best
//! positive gain while respecting the balance window.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::PartitionError;
use crate::graph::{Graph, NodeId};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Allowed relative deviation from the average cluster size.
    pub balance_slack: f64,
    /// Number of boundary refinement sweeps.
    pub refine_passes: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            balance_slack: 0.05,
            refine_passes: 8,
        }
    }
}

/// Number of edges whose endpoints carry different ids.
pub fn edge_cut(g: &Graph, assignment: &[u32]) -> usize {
    g.edges()
        .filter(|&(u, v)| assignment[u as usize] != assignment[v as usize])
        .count()
}

/// Groups the nodes of `g` into `n_clusters` non-empty clusters.
pub fn cluster(
    g: &Graph,
    n_clusters: usize,
    seed: u64,
    cfg: &ClusterConfig,
) -> Result<Vec<u32>, PartitionError> {
    let n = g.num_nodes();
    if n_clusters == 0 || n_clusters > n {
        return Err(PartitionError::InvalidCount(format!(
            "cluster count {n_clusters} must be in 1..={n}"
        )));
    }
    if n_clusters == 1 {
        return Ok(vec![0; n]);
    }
    if n_clusters == n {
        return Ok((0..n as u32).collect());
    }
    let mut rng = rng::seeded(seed, rng::stream::CLUSTER);

    // Isolated nodes never influence the cut; they are dealt out last to
    // even out sizes.
    let connected: Vec<NodeId> = (0..n as NodeId).filter(|&v| g.degree(v) > 0).collect();
    let isolated: Vec<NodeId> = (0..n as NodeId).filter(|&v| g.degree(v) == 0).collect();
    let seed_pool: &[NodeId] = if connected.len() >= n_clusters {
        &connected
    } else {
        // Too few connected nodes to seed every cluster.
        &[]
    };

    let mut assignment = vec![u32::MAX; n];
    let mut sizes = vec![0usize; n_clusters];
    if seed_pool.is_empty() {
        let mut order: Vec<NodeId> = (0..n as NodeId).collect();
        order.shuffle(&mut rng);
        for (i, v) in order.into_iter().enumerate() {
            assignment[v as usize] = (i % n_clusters) as u32;
            sizes[i % n_clusters] += 1;
        }
        return Ok(assignment);
    }

    let seeds = farthest_point_seeds(g, seed_pool, n_clusters, &mut rng);
    grow_regions(g, &seeds, &connected, &mut assignment, &mut sizes, &mut rng);

    // Round-robin isolated nodes onto the currently smallest clusters.
    for v in isolated {
        let c = (0..n_clusters).min_by_key(|&c| (sizes[c], c)).unwrap();
        assignment[v as usize] = c as u32;
        sizes[c] += 1;
    }

    let avg = n as f64 / n_clusters as f64;
    let max_size = ((avg * (1.0 + cfg.balance_slack)).ceil() as usize).max(1);
    let min_size = ((avg * (1.0 - cfg.balance_slack)).floor() as usize).max(1);
    for _ in 0..cfg.refine_passes {
        if refine_sweep(g, &mut assignment, &mut sizes, min_size, max_size) == 0 {
            break;
        }
    }
    Ok(assignment)
}

fn bfs_distances(g: &Graph, source: NodeId, dist: &mut [u32]) {
    let mut local = vec![u32::MAX; g.num_nodes()];
    let mut queue = VecDeque::new();
    local[source as usize] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        let d = local[v as usize] + 1;
        for &u in g.neighbors(v) {
            if local[u as usize] == u32::MAX {
                local[u as usize] = d;
                queue.push_back(u);
            }
        }
    }
    for (a, b) in dist.iter_mut().zip(local) {
        *a = (*a).min(b);
    }
}

/// First seed uniform over the pool, every further seed the pool node
/// farthest (in hops) from all chosen seeds. Unreachable nodes count as
/// infinitely far, so each component receives a seed before any component
/// receives a second one. Ties go to the lower node id.
fn farthest_point_seeds(
    g: &Graph,
    pool: &[NodeId],
    count: usize,
    rng: &mut rng::Rng,
) -> Vec<NodeId> {
    let mut dist = vec![u32::MAX; g.num_nodes()];
    let mut seeds = Vec::with_capacity(count);
    let mut is_seed = vec![false; g.num_nodes()];
    let first = pool[rng.random_range(0..pool.len())];
    seeds.push(first);
    is_seed[first as usize] = true;
    bfs_distances(g, first, &mut dist);
    while seeds.len() < count {
        let next = *pool
            .iter()
            .filter(|&&v| !is_seed[v as usize])
            .max_by_key(|&&v| (dist[v as usize], Reverse(v)))
            .expect("pool holds at least `count` nodes");
        seeds.push(next);
        is_seed[next as usize] = true;
        bfs_distances(g, next, &mut dist);
    }
    seeds
}

/// Round-robin region growing. A frontier node's gain for region `r` is its
/// links into `r` minus its links into every other region, so regions avoid
/// nodes already claimed by a neighbor.
fn grow_regions(
    g: &Graph,
    seeds: &[NodeId],
    active: &[NodeId],
    assignment: &mut [u32],
    sizes: &mut [usize],
    rng: &mut rng::Rng,
) {
    let k = seeds.len();
    let mut links: Vec<HashMap<NodeId, i64>> = vec![HashMap::new(); k];
    let mut assigned_degree = vec![0i64; g.num_nodes()];
    let mut frontier: Vec<BinaryHeap<(i64, Reverse<NodeId>)>> = vec![BinaryHeap::new(); k];
    let mut fallback: Vec<NodeId> = active.to_vec();
    fallback.shuffle(rng);
    let mut fallback_pos = 0;
    let mut remaining = active.len();

    let mut absorb = |v: NodeId,
                      r: usize,
                      assignment: &mut [u32],
                      links: &mut Vec<HashMap<NodeId, i64>>,
                      assigned_degree: &mut [i64],
                      frontier: &mut Vec<BinaryHeap<(i64, Reverse<NodeId>)>>| {
        assignment[v as usize] = r as u32;
        sizes[r] += 1;
        links[r].remove(&v);
        for &u in g.neighbors(v) {
            if assignment[u as usize] == u32::MAX {
                assigned_degree[u as usize] += 1;
                let c = links[r].entry(u).or_insert(0);
                *c += 1;
                let gain = 2 * *c - assigned_degree[u as usize];
                frontier[r].push((gain, Reverse(u)));
            }
        }
    };

    for (r, &s) in seeds.iter().enumerate() {
        absorb(s, r, assignment, &mut links, &mut assigned_degree, &mut frontier);
        remaining -= 1;
    }
    while remaining > 0 {
        for r in 0..k {
            if remaining == 0 {
                break;
            }
            let mut pick = None;
            while let Some((key, Reverse(v))) = frontier[r].pop() {
                if assignment[v as usize] != u32::MAX {
                    continue;
                }
                let Some(&c) = links[r].get(&v) else { continue };
                let gain = 2 * c - assigned_degree[v as usize];
                if gain == key {
                    pick = Some(v);
                    break;
                }
                if gain < key {
                    // Other regions claimed neighbors since this entry was
                    // pushed; requeue at the lower gain.
                    frontier[r].push((gain, Reverse(v)));
                }
                // gain > key: a fresher entry for `v` is already queued.
            }
            let v = match pick {
                Some(v) => v,
                None => {
                    // Frontier exhausted: jump to a random unassigned node.
                    while assignment[fallback[fallback_pos] as usize] != u32::MAX {
                        fallback_pos += 1;
                    }
                    fallback[fallback_pos]
                }
            };
            absorb(v, r, assignment, &mut links, &mut assigned_degree, &mut frontier);
            remaining -= 1;
        }
    }
}

/// One sweep over all nodes in id order; returns the number of moves.
fn refine_sweep(
    g: &Graph,
    assignment: &mut [u32],
    sizes: &mut [usize],
    min_size: usize,
    max_size: usize,
) -> usize {
    let mut moves = 0;
    let mut counts: Vec<(u32, u32)> = Vec::new();
    for v in 0..g.num_nodes() as NodeId {
        let own = assignment[v as usize];
        counts.clear();
        for &u in g.neighbors(v) {
            let c = assignment[u as usize];
            match counts.iter_mut().find(|(p, _)| *p == c) {
                Some(e) => e.1 += 1,
                None => counts.push((c, 1)),
            }
        }
        let internal = counts.iter().find(|(p, _)| *p == own).map_or(0, |e| e.1);
        let best = counts
            .iter()
            .filter(|(p, _)| *p != own && sizes[*p as usize] < max_size)
            .max_by_key(|(p, c)| (*c, Reverse(*p)));
        if let Some(&(target, ext)) = best {
            if ext > internal && sizes[own as usize] > min_size {
                assignment[v as usize] = target;
                sizes[own as usize] -= 1;
                sizes[target as usize] += 1;
                moves += 1;
            }
        }
    }
    moves
}
