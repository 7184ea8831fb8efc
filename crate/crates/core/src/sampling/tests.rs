use std::collections::HashSet;

use super::*;
use crate::graph::{generate_synthetic, add_feature_noise, SyntheticSpec};
use crate::nn::{EncoderKind, Model, ModelConfig};
use crate::rng;

fn synthetic(n: usize) -> (Graph, FeatureMatrix) {
    let s = generate_synthetic(&SyntheticSpec {
        num_nodes: n,
        mean_degree: 6.0,
        homophily: 0.8,
        classes: 2,
        seed: 3,
    })
    .unwrap();
    let x = add_feature_noise(&s.features, 3, 0.5, 1).unwrap();
    (s.graph, x)
}

fn path(n: usize) -> Graph {
    Graph::from_edges(n, (0..n as NodeId - 1).map(|i| (i, i + 1))).unwrap()
}

#[test]
fn full_fanout_mfg_matches_full_graph_encode() {
    let (g, x) = synthetic(200);
    let sub = Subgraph::whole(&g, &x);
    let mut r = rng::seeded(0, 0);
    for encoder in [EncoderKind::Gcn, EncoderKind::Sage, EncoderKind::Mlp] {
        let model = Model::new(&ModelConfig {
            encoder,
            in_dim: x.cols(),
            hidden: 8,
            ..ModelConfig::default()
        })
        .unwrap();
        let w = model.init();
        let full = model.encode(&w, &g, &features_tensor(&x)).unwrap();
        let batch = sample_minibatch(&sub, 64, &[Fanout::All, Fanout::All], &mut r).unwrap();
        let out = model
            .encode_forward(&w, &batch.mfg.block_refs(), batch.mfg.gather(&x))
            .unwrap()
            .into_output();
        assert_eq!(out.rows(), batch.mfg.seeds.len());
        for (i, &v) in batch.mfg.seeds.iter().enumerate() {
            for (a, b) in out.row(i).iter().zip(full.row(v as usize)) {
                assert!((a - b).abs() < 1e-6, "{encoder} node {v}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn sampled_blocks_respect_graph_and_fanout() {
    let (g, _) = synthetic(300);
    let mut r = rng::seeded(1, 0);
    let seeds: Vec<NodeId> = (0..40).map(|i| i * 7).collect();
    let mfg = build_mfg(&g, &seeds, &[Fanout::Limit(3), Fanout::Limit(2)], &mut r);
    assert_eq!(mfg.blocks.len(), 2);
    assert_eq!(mfg.blocks[1].num_dst, 40);
    assert_eq!(mfg.blocks[0].num_dst, mfg.blocks[1].num_src);
    assert_eq!(mfg.input_nodes.len(), mfg.blocks[0].num_src);
    // Recover graph ids of every block's source rows.
    let mut src_ids = vec![mfg.input_nodes.clone()];
    src_ids.push(mfg.input_nodes[..mfg.blocks[0].num_dst].to_vec());
    for (l, (block, limit)) in mfg.blocks.iter().zip([3, 2]).enumerate() {
        let ids = &src_ids[l];
        let unique: HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len(), "duplicate source rows");
        for i in 0..block.num_dst {
            let nbrs = &block.indices[block.offsets[i]..block.offsets[i + 1]];
            assert!(nbrs.len() <= limit);
            assert_eq!(nbrs.len(), limit.min(g.degree(ids[i])));
            for &j in nbrs {
                assert!(g.has_edge(ids[i], ids[j as usize]));
            }
        }
    }
    assert_eq!(&mfg.input_nodes[..40], &seeds[..]);
}

#[test]
fn fanout_zero_keeps_only_seeds() {
    let g = path(6);
    let mut r = rng::seeded(0, 0);
    let mfg = build_mfg(&g, &[2, 4], &[Fanout::Limit(0)], &mut r);
    assert_eq!(mfg.input_nodes, vec![2, 4]);
    assert!(mfg.blocks[0].indices.is_empty());
}

#[test]
fn fanout_one_on_path_and_dedup() {
    let g = path(5);
    let mut r = rng::seeded(2, 0);
    let mfg = build_mfg(&g, &[1, 2, 3], &[Fanout::Limit(1)], &mut r);
    let b = &mfg.blocks[0];
    for i in 0..3 {
        assert_eq!(b.offsets[i + 1] - b.offsets[i], 1);
    }
    // Node 2 neighbors both 1 and 3, which are seeds: no new rows for it.
    let full = build_mfg(&g, &[1, 3], &[Fanout::All], &mut r);
    assert_eq!(full.input_nodes, vec![1, 3, 0, 2, 4]);
    assert_eq!(full.blocks[0].indices, vec![2, 3, 3, 4]);
}

#[test]
fn large_batch_uses_every_edge_once() {
    let (g, x) = synthetic(100);
    let sub = Subgraph::whole(&g, &x);
    let mut r = rng::seeded(5, 0);
    let batch = sample_minibatch(&sub, 1_000_000, &[Fanout::Limit(2)], &mut r).unwrap();
    let mut seen: Vec<(NodeId, NodeId)> = batch
        .positives
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    seen.sort_unstable();
    let mut all = sub.train_edges.clone();
    all.sort_unstable();
    assert_eq!(seen, all);
    assert_eq!(batch.negatives.len(), batch.positives.len());
    assert_eq!(batch.labels.iter().filter(|&&l| l == 1.0).count(), all.len());
    for (p, n) in batch.positives.iter().zip(&batch.negatives) {
        assert_eq!(p.0, n.0);
        assert_ne!(p.1, n.1);
    }
    for (&(ru, rv), &(u, v)) in batch.pairs.iter().zip(batch.positives.iter().chain(&batch.negatives)) {
        assert_eq!(batch.mfg.seeds[ru as usize], u);
        assert_eq!(batch.mfg.seeds[rv as usize], v);
    }
}

#[test]
fn negative_tails_are_uniform() {
    // Single edge 0-1 plus three further nodes: for a positive with tail v
    // the four other nodes must each appear a quarter of the time.
    let g = Graph::from_edges(5, [(0, 1)]).unwrap();
    let x = FeatureMatrix::new(5, 1, vec![0.0; 5]).unwrap();
    let sub = Subgraph::whole(&g, &x);
    let mut r = rng::seeded(9, 0);
    let draws = 100_000;
    let mut counts = [[0usize; 5]; 2];
    for _ in 0..draws {
        let b = sample_minibatch(&sub, 1, &[], &mut r).unwrap();
        let (_, v) = b.positives[0];
        let (_, t) = b.negatives[0];
        assert_ne!(t, v);
        counts[v as usize][t as usize] += 1;
    }
    for (v, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let p = 0.25;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        for (t, &c) in row.iter().enumerate() {
            if t == v {
                assert_eq!(c, 0);
            } else {
                assert!((c as f64 - total as f64 * p).abs() < 3.0 * sigma, "tail {t} for {v}: {c}/{total}");
            }
        }
    }
}

#[test]
fn edgeless_subgraph_is_an_error() {
    let g = Graph::empty(3);
    let x = FeatureMatrix::new(3, 1, vec![0.0; 3]).unwrap();
    let sub = Subgraph::whole(&g, &x);
    let mut r = rng::seeded(0, 0);
    let err = sample_minibatch(&sub, 8, &[Fanout::All], &mut r).unwrap_err();
    assert_eq!(err.to_string(), "trainer has no local edges");
}

#[test]
fn deterministic_given_rng_state() {
    let (g, x) = synthetic(100);
    let sub = Subgraph::whole(&g, &x);
    let a = sample_minibatch(&sub, 16, &[Fanout::Limit(3), Fanout::Limit(2)], &mut rng::seeded(4, 1)).unwrap();
    let b = sample_minibatch(&sub, 16, &[Fanout::Limit(3), Fanout::Limit(2)], &mut rng::seeded(4, 1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fanout_parsing() {
    assert_eq!("all".parse::<Fanout>().unwrap(), Fanout::All);
    assert_eq!(" 10".parse::<Fanout>().unwrap(), Fanout::Limit(10));
    assert!("x".parse::<Fanout>().is_err());
}
