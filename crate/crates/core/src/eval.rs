//! MRR over fixed negative candidates, computed on full-graph embeddings.

use thiserror::Error;

use crate::graph::{EdgeSplits, Graph, SplitTag};
use crate::nn::{Model, ModelWeights, NnError, Tensor};

/// Positives scored per decoder call.
const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{split} split has no positives")]
    NoPositives { split: &'static str },
    #[error("{split} split has {found} negatives for {positives} positives with k = {k}")]
    MissingNegatives {
        split: &'static str,
        positives: usize,
        k: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub split: SplitTag,
    pub round: u64,
    pub mrr: f64,
    pub reciprocal_ranks: Vec<f64>,
}

/// `1 + #{neg > pos} + #{neg == pos} / 2`.
pub fn rank_of(positive: f64, negatives: &[f64]) -> f64 {
    let mut above = 0usize;
    let mut ties = 0usize;
    for &n in negatives {
        if n > positive {
            above += 1;
        } else if n == positive {
            ties += 1;
        }
    }
    1.0 + above as f64 + ties as f64 / 2.0
}

/// MRR of uniformly random scores with `k` negatives: the mean of `1/r`
/// over `r = 1..=k+1`.
pub fn random_mrr(k: usize) -> f64 {
    (1..=k + 1).map(|r| 1.0 / r as f64).sum::<f64>() / (k + 1) as f64
}

/// Encodes the full graph once and ranks the split's positives.
pub fn evaluate(
    model: &Model,
    w: &ModelWeights,
    g: &Graph,
    x: &Tensor,
    splits: &EdgeSplits,
    tag: SplitTag,
    round: u64,
) -> Result<EvalResult, EvalError> {
    let emb = model.encode(w, g, x)?;
    evaluate_embeddings(model, w, &emb, splits, tag, round)
}

/// Ranks the split's positives against their negatives using precomputed
/// embeddings.
pub fn evaluate_embeddings(
    model: &Model,
    w: &ModelWeights,
    emb: &Tensor,
    splits: &EdgeSplits,
    tag: SplitTag,
    round: u64,
) -> Result<EvalResult, EvalError> {
    let positives = splits.positives(tag);
    let k = splits.k;
    let found = match tag {
        SplitTag::Val => splits.val_negatives.len(),
        SplitTag::Test => splits.test_negatives.len(),
    };
    if positives.is_empty() {
        return Err(EvalError::NoPositives {
            split: tag.as_str(),
        });
    }
    if k == 0 || found != positives.len() * k {
        return Err(EvalError::MissingNegatives {
            split: tag.as_str(),
            positives: positives.len(),
            k,
            found,
        });
    }
    let mut reciprocal_ranks = Vec::with_capacity(positives.len());
    let mut pairs = Vec::with_capacity(CHUNK * (k + 1));
    for start in (0..positives.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(positives.len());
        pairs.clear();
        for (i, &(u, v)) in positives.iter().enumerate().take(end).skip(start) {
            pairs.push((u, v));
            pairs.extend(splits.negatives(tag, i).iter().map(|&t| (u, t)));
        }
        let scores = model.score(w, emb, &pairs)?;
        for group in scores.chunks(k + 1) {
            reciprocal_ranks.push(1.0 / rank_of(group[0], &group[1..]));
        }
    }
    let mrr = reciprocal_ranks.iter().sum::<f64>() / reciprocal_ranks.len() as f64;
    Ok(EvalResult {
        split: tag,
        round,
        mrr,
        reciprocal_ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_splits, generate_synthetic, SplitSpec, SyntheticSpec};
    use crate::nn::ModelConfig;
    use crate::rng;
    use crate::sampling::features_tensor;
    use rand::Rng as _;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of(5.0, &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(rank_of(0.0, &[1.0, 2.0, 3.0]), 4.0);
        assert_eq!(rank_of(2.0, &[2.0, 1.0, 0.0]), 1.5);
        assert_eq!(1.0 / rank_of(2.0, &[2.0, 1.0, 0.0]), 2.0 / 3.0);
        assert_eq!(rank_of(1.0, &[1.0; 6]), 4.0);
    }

    #[test]
    fn random_scores_match_the_uniform_rank_expectation() {
        let k = 1000;
        let expected = random_mrr(k);
        assert!((expected - 0.0074).abs() < 1e-4);
        let mut r = rng::seeded(0, 77);
        let trials = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut negs = vec![0.0; k];
        for _ in 0..trials {
            negs.iter_mut().for_each(|x| *x = r.random::<f64>());
            let rr = 1.0 / rank_of(r.random::<f64>(), &negs);
            sum += rr;
            sum_sq += rr * rr;
        }
        let mean = sum / trials as f64;
        let sd = ((sum_sq / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sd, "{mean} vs {expected} (sd {sd})");
    }

    fn fixture() -> (Model, ModelWeights, Graph, Tensor, EdgeSplits) {
        let s = generate_synthetic(&SyntheticSpec {
            num_nodes: 300,
            mean_degree: 6.0,
            homophily: 0.8,
            classes: 2,
            seed: 1,
        })
        .unwrap();
        let (train, splits) = build_splits(
            &s.graph,
            &SplitSpec {
                val_frac: 0.05,
                test_frac: 0.05,
                negatives: 20,
                seed: 2,
            },
        )
        .unwrap();
        let model = Model::new(&ModelConfig {
            in_dim: 2,
            hidden: 8,
            ..ModelConfig::default()
        })
        .unwrap();
        let w = model.init();
        (model, w, train, features_tensor(&s.features), splits)
    }

    #[test]
    fn evaluate_is_deterministic_and_bounded() {
        let (model, w, g, x, splits) = fixture();
        let a = evaluate(&model, &w, &g, &x, &splits, SplitTag::Val, 3).unwrap();
        let b = evaluate(&model, &w, &g, &x, &splits, SplitTag::Val, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reciprocal_ranks.len(), splits.val.len());
        assert!(a.mrr > 0.0 && a.mrr <= 1.0);
        for rr in &a.reciprocal_ranks {
            assert!(*rr >= 1.0 / 21.0 && *rr <= 1.0);
        }
    }

    #[test]
    fn duplicated_evaluation_set_keeps_mrr() {
        let (model, w, g, x, mut splits) = fixture();
        let base = evaluate(&model, &w, &g, &x, &splits, SplitTag::Test, 0).unwrap().mrr;
        splits.test = splits.test.repeat(2);
        splits.test_negatives = splits.test_negatives.repeat(2);
        let twice = evaluate(&model, &w, &g, &x, &splits, SplitTag::Test, 0).unwrap().mrr;
        assert!((base - twice).abs() < 1e-12);
    }

    #[test]
    fn missing_negatives_error() {
        let (model, w, g, x, mut splits) = fixture();
        splits.val_negatives.pop();
        let err = evaluate(&model, &w, &g, &x, &splits, SplitTag::Val, 0).unwrap_err();
        assert!(matches!(err, EvalError::MissingNegatives { .. }));
    }

    #[test]
    fn mrr_is_invariant_under_monotone_transforms() {
        let mut r = rng::seeded(3, 0);
        for _ in 0..100 {
            let pos: f64 = r.random_range(-2.0..2.0);
            let negs: Vec<f64> = (0..30).map(|_| (r.random_range(-8..8) as f64) / 4.0).collect();
            let f = |x: f64| (x * 0.7).exp() + 3.0;
            let mapped: Vec<f64> = negs.iter().map(|&x| f(x)).collect();
            assert_eq!(rank_of(pos, &negs), rank_of(f(pos), &mapped));
        }
    }
}
