//! Failure sweeps: every choice of `F` failed trainers, averaged.

use std::sync::Arc;

use super::config::{ExperimentConfig, Mode};
use super::pipeline::{make_partition, train, Dataset};
use super::ExperimentError;
use crate::partition::Partition;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub f: usize,
    /// Failed trainers, numbered from 1.
    pub failed: Vec<usize>,
    pub test_mrr: Option<f64>,
    pub best_val_mrr: Option<f64>,
    pub convergence_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub f: usize,
    pub runs: usize,
    pub mean_test_mrr: Option<f64>,
    pub mean_val_mrr: Option<f64>,
    pub mean_convergence_s: Option<f64>,
}

/// All `f`-subsets of `1..=m` in lexicographic order.
pub fn failure_sets(m: usize, f: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, f: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == f {
            out.push(cur.clone());
            return;
        }
        for i in start..=m {
            cur.push(i);
            rec(i + 1, m, f, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if f <= m {
        rec(1, m, f, &mut Vec::new(), &mut out);
    }
    out
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trains once per failure set for each `f` in `f_list`, on one shared
/// partition. Summaries average over the failure sets of each `f`.
pub fn failure_sweep(
    cfg: &ExperimentConfig,
    dataset: &Arc<Dataset>,
    partition: Option<&Partition>,
    f_list: &[usize],
) -> Result<(Vec<SweepRow>, Vec<SweepSummary>), ExperimentError> {
    if cfg.mode != Mode::Tma {
        return Err(ExperimentError::Config(vec!["failure sweeps need tma mode".into()]));
    }
    let bad: Vec<String> = f_list
        .iter()
        .filter(|&&f| f >= cfg.trainers)
        .map(|f| format!("F={f} leaves no live trainer out of {}", cfg.trainers))
        .collect();
    if !bad.is_empty() {
        return Err(ExperimentError::Config(bad));
    }
    let owned;
    let partition = match partition {
        Some(p) => p,
        None => {
            owned = make_partition(cfg, &dataset.train_graph)?;
            &owned
        }
    };
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &f in f_list {
        let start = rows.len();
        for failed in failure_sets(cfg.trainers, f) {
            let run_cfg = ExperimentConfig {
                fail_ids: failed.clone(),
                ..cfg.clone()
            };
            let r = train(&run_cfg, dataset, Some(partition))?;
            rows.push(SweepRow {
                f,
                failed,
                test_mrr: r.outcome.test_mrr,
                best_val_mrr: r.outcome.best_val_mrr,
                convergence_s: r.convergence_s,
            });
        }
        let group = &rows[start..];
        summaries.push(SweepSummary {
            f,
            runs: group.len(),
            mean_test_mrr: mean(group.iter().map(|r| r.test_mrr)),
            mean_val_mrr: mean(group.iter().map(|r| r.best_val_mrr)),
            mean_convergence_s: mean(group.iter().map(|r| r.convergence_s)),
        });
    }
    Ok((rows, summaries))
}
