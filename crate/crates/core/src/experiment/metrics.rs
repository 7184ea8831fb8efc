//! Metrics CSV output and summary statistics of finished runs.

use std::io::Write;

use super::config::ExperimentConfig;
use super::pipeline::TrainResult;
use super::ExperimentError;
use crate::coordination::{EvalRecord, RoundRecord};

/// Time of the first evaluation within 1% (relative) of the run's best
/// validation MRR.
pub fn convergence_time(evals: &[EvalRecord]) -> Option<f64> {
    let best = evals.iter().map(|e| e.mrr).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let band = best - 0.01 * best.abs();
    evals.iter().find(|e| e.mrr >= band).map(|e| e.time_s)
}

/// Mean reported window loss per trainer over the last `tail` fraction of
/// rounds, or `None` for trainers without finite reports there.
pub fn converged_losses(rounds: &[RoundRecord], trainers: usize, tail: f64) -> Vec<Option<f64>> {
    let keep = ((rounds.len() as f64 * tail).ceil() as usize).clamp(1.min(rounds.len()), rounds.len());
    let mut sums = vec![(0.0, 0usize); trainers];
    for r in &rounds[rounds.len() - keep..] {
        for rep in &r.reports {
            if let Some(s) = sums.get_mut(rep.trainer as usize) {
                if rep.window_loss.is_finite() {
                    s.0 += rep.window_loss;
                    s.1 += 1;
                }
            }
        }
    }
    sums.into_iter()
        .map(|(s, n)| (n > 0).then(|| s / n as f64))
        .collect()
}

/// Largest pairwise difference between available per-trainer losses.
pub fn max_pairwise_gap(losses: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = losses.iter().flatten().copied().collect();
    if v.len() < 2 {
        return None;
    }
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    Some(hi - lo)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Writes the effective config as `#` comment lines, then one row per
/// validated round and a final test row.
///
/// Columns: `wall_s, round, split, mrr, steps_1..steps_M, loss_1..loss_M`.
pub fn write_metrics<W: Write>(out: W, cfg: &ExperimentConfig, result: &TrainResult) -> Result<(), ExperimentError> {
    let mut out = out;
    for line in cfg.to_toml().lines() {
        writeln!(out, "# {line}").map_err(io_err)?;
    }
    let m = cfg.trainers;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["wall_s", "round", "split", "mrr"].map(String::from).to_vec();
    header.extend((1..=m).map(|i| format!("steps_{i}")));
    header.extend((1..=m).map(|i| format!("loss_{i}")));
    w.write_record(&header).map_err(csv_err)?;

    let run = &result.outcome;
    let per_trainer = |round: u64| -> Vec<String> {
        let mut steps = vec![String::new(); m];
        let mut loss = vec![String::new(); m];
        if let Some(r) = run.rounds.iter().find(|r| r.round == round) {
            for rep in &r.reports {
                let i = rep.trainer as usize;
                if i < m {
                    steps[i] = rep.steps.to_string();
                    if rep.window_loss.is_finite() {
                        loss[i] = format!("{:.6}", rep.window_loss);
                    }
                }
            }
        } else if round == 0 {
            steps.iter_mut().for_each(|s| *s = "0".into());
        }
        steps.into_iter().chain(loss).collect()
    };
    for e in &run.evals {
        let mut row = vec![
            format!("{:.3}", e.time_s),
            e.round.to_string(),
            "val".into(),
            format!("{:.6}", e.mrr),
        ];
        row.extend(per_trainer(e.round));
        w.write_record(&row).map_err(csv_err)?;
    }
    if let (Some(round), Some(mrr)) = (run.best_round, run.test_mrr) {
        let at = run.evals.iter().find(|e| e.round == round).map_or(0.0, |e| e.time_s);
        let mut row = vec![format!("{at:.3}"), round.to_string(), "test".into(), format!("{mrr:.6}")];
        row.extend(per_trainer(round));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn io_err(e: std::io::Error) -> ExperimentError {
    ExperimentError::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(e.to_string())
}
