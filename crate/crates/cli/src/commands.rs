//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tma_core::eval::evaluate;
use tma_core::experiment::{
    self, converged_losses, max_pairwise_gap, median, write_metrics, ClockKind, Dataset,
    Evaluation, ExperimentConfig, TransportKind,
};
use tma_core::graph::{measure_homophily, SplitTag};
use tma_core::nn::ModelWeights;
use tma_core::partition::{partition_stats, Partition, TrainerId};
use tma_core::sampling::features_tensor;
use tma_core::theory::monte_carlo::binding_check;
use tma_core::theory::min_cut_argmin_check;

use crate::artifacts::{Dir, PARTITION};
use crate::{CliError, Command, ConfigArgs};

/// Gradient and edge-cut tolerances of `theory-check`.
const GRADIENT_TOL: f64 = 0.02;
const LAMBDA_TOL: f64 = 0.03;

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Generate { cfg, dir } => generate(&cfg.resolve()?, &Dir::create(&dir)?),
        Command::Split { cfg, dir } => split(&cfg.resolve()?, &Dir(dir)),
        Command::Partition { cfg, dir } => partition(&cfg.resolve()?, &Dir(dir)),
        Command::Train {
            cfg,
            dir,
            metrics,
            checkpoint,
        } => train(&cfg.resolve()?, dir, metrics, checkpoint),
        Command::Eval { cfg, dir, weights } => eval(&cfg.resolve()?, dir, &weights),
        Command::TheoryCheck {
            nodes,
            mean_degree,
            seeds,
            h,
            beta,
            report,
        } => theory_check(nodes, mean_degree, seeds, &h.0, &beta.0, report),
        Command::FailureSweep { cfg, dir, f, out } => failure_sweep(&cfg.resolve()?, dir, &f, out),
        Command::LossGap {
            cfg,
            schemes,
            seeds,
            out,
        } => loss_gap(&cfg, &schemes, &seeds, out),
        Command::Serve {
            cfg,
            dir,
            listen,
            metrics,
        } => serve(&networked(&cfg)?, dir, &listen, metrics),
        Command::Join {
            cfg,
            dir,
            connect,
            trainer,
        } => join(&networked(&cfg)?, dir, &connect, trainer),
    }
}

fn networked(args: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    let mut args = args.clone();
    args.clock = Some(ClockKind::Real);
    args.transport = Some(TransportKind::Tcp);
    args.resolve()
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::msg(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn dataset(cfg: &ExperimentConfig, dir: &Option<PathBuf>) -> Result<Arc<Dataset>, CliError> {
    Ok(Arc::new(match dir {
        Some(d) => Dir(d.clone()).load_dataset()?,
        None => experiment::build_dataset(cfg)?,
    }))
}

fn partition_for(cfg: &ExperimentConfig, dir: &Option<PathBuf>, ds: &Dataset) -> Result<Partition, CliError> {
    if let Some(d) = dir {
        if let Some(p) = Dir(d.clone()).matching_partition(cfg)? {
            return Ok(p);
        }
    }
    Ok(experiment::make_partition(cfg, &ds.train_graph)?)
}

fn generate(cfg: &ExperimentConfig, dir: &Dir) -> Result<(), CliError> {
    let (g, x, y) = experiment::generate(cfg)?;
    dir.save_generated(&g, &x, &y)?;
    println!(
        "nodes {} edges {} homophily {:.4} features {}",
        g.num_nodes(),
        g.num_edges(),
        measure_homophily(&g, &y).unwrap_or(f64::NAN),
        x.cols()
    );
    Ok(())
}

fn split(cfg: &ExperimentConfig, dir: &Dir) -> Result<(), CliError> {
    let g = dir.load_graph()?;
    let (train, s) = experiment::split(cfg, &g)?;
    dir.save_split(&train, &s)?;
    println!(
        "train {} val {} test {} negatives {}",
        s.train.len(),
        s.val.len(),
        s.test.len(),
        s.k
    );
    Ok(())
}

fn partition(cfg: &ExperimentConfig, dir: &Dir) -> Result<(), CliError> {
    let train = dir.load_train_graph()?;
    let labels = dir.load_labels()?;
    let p = experiment::make_partition(cfg, &train)?;
    p.save(&dir.path(PARTITION))?;
    let st = partition_stats(&train, &labels, &p)?;
    println!(
        "scheme {} trainers {} edge_ratio {:.4} max_class_disparity {:.4}",
        cfg.partition_scheme(),
        p.num_parts(),
        st.edge_ratio,
        st.max_disparity
    );
    for (i, (n, e)) in st.node_counts.iter().zip(&st.edge_counts).enumerate() {
        println!("trainer {} nodes {n} edges {e}", i + 1);
    }
    Ok(())
}

fn train(
    cfg: &ExperimentConfig,
    dir: Option<PathBuf>,
    metrics: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
) -> Result<(), CliError> {
    let ds = dataset(cfg, &dir)?;
    let part = match cfg.mode {
        experiment::Mode::Tma => Some(partition_for(cfg, &dir, &ds)?),
        experiment::Mode::Ggs => None,
    };
    let r = experiment::train(cfg, &ds, part.as_ref())?;
    if let Some(path) = &metrics {
        write_metrics(output(&Some(path.clone()))?, cfg, &r)?;
    }
    if let Some(path) = &checkpoint {
        r.outcome.best_weights.save(path).map_err(|e| CliError::msg(e.to_string()))?;
    }
    let o = &r.outcome;
    println!(
        "mode {} rounds {} best_round {} val_mrr {} test_mrr {} convergence_s {}",
        cfg.mode,
        o.rounds_completed(),
        o.best_round.map_or_else(String::new, |r| r.to_string()),
        fmt_opt(o.best_val_mrr),
        fmt_opt(o.test_mrr),
        fmt_opt(r.convergence_s)
    );
    for (i, t) in r.trainers.iter().enumerate() {
        if let Some(t) = t {
            println!("trainer {} steps {} exit {:?}", i + 1, t.steps, t.exit);
        }
    }
    for (id, e) in &r.trainer_errors {
        eprintln!("trainer {} failed: {e}", id + 1);
    }
    Ok(())
}

fn eval(cfg: &ExperimentConfig, dir: Option<PathBuf>, weights: &Path) -> Result<(), CliError> {
    let ds = dataset(cfg, &dir)?;
    let ev = Evaluation::new(cfg, Arc::clone(&ds))?;
    let w = ModelWeights::load(weights).map_err(|e| CliError::msg(format!("{}: {e}", weights.display())))?;
    w.check_compatible(&ev.model.init())?;
    let x = features_tensor(&ds.features);
    for tag in [SplitTag::Val, SplitTag::Test] {
        let r = evaluate(&ev.model, &w, &ds.train_graph, &x, &ds.splits, tag, 0)?;
        println!("{} mrr {:.6} positives {}", tag.as_str(), r.mrr, r.reciprocal_ranks.len());
    }
    Ok(())
}

fn theory_check(
    nodes: usize,
    mean_degree: f64,
    seeds: u64,
    hs: &[f64],
    betas: &[f64],
    report: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut failures = Vec::new();
    for h in [0.6, 0.7, 0.8, 0.9, 1.0] {
        let a = min_cut_argmin_check(h, 1000)?;
        println!("argmin h {h} beta* {}", a.beta_star);
        if a.beta_star != 1.0 {
            failures.push(format!("argmin at h={h} is {}", a.beta_star));
        }
    }
    let seed_list: Vec<u64> = (0..seeds).collect();
    let mut w = csv::Writer::from_writer(output(&report)?);
    w.write_record([
        "h", "beta", "lambda_theory", "lambda_empirical", "lambda_rel_err", "grad_err_global",
        "grad_err_local1", "grad_err_local2", "ok",
    ])?;
    for &h in hs {
        for &beta in betas {
            let r = binding_check(nodes, mean_degree, h, beta, &seed_list)?;
            let g = r.gradient_rel_errors();
            let ok = r.lambda_rel_error() <= LAMBDA_TOL
                && g.iter().flatten().all(|&e| e <= GRADIENT_TOL);
            if !ok {
                failures.push(format!("binding at h={h} beta={beta}"));
            }
            w.write_record([
                h.to_string(),
                beta.to_string(),
                format!("{:.6}", r.lambda_theory),
                format!("{:.6}", r.lambda_empirical),
                format!("{:.6}", r.lambda_rel_error()),
                fmt_opt(g[0]),
                fmt_opt(g[1]),
                fmt_opt(g[2]),
                ok.to_string(),
            ])?;
        }
    }
    w.flush()?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::msg(format!("theory check failed: {}", failures.join(", "))))
    }
}

fn failure_sweep(cfg: &ExperimentConfig, dir: Option<PathBuf>, f: &[usize], out: Option<PathBuf>) -> Result<(), CliError> {
    let ds = dataset(cfg, &dir)?;
    let part = partition_for(cfg, &dir, &ds)?;
    let (rows, summaries) = experiment::failure_sweep(cfg, &ds, Some(&part), f)?;
    let mut w = csv::Writer::from_writer(output(&out)?);
    w.write_record(["f", "failed", "test_mrr", "val_mrr", "convergence_s"])?;
    for r in &rows {
        let failed: Vec<String> = r.failed.iter().map(|i| i.to_string()).collect();
        w.write_record([
            r.f.to_string(),
            failed.join(" "),
            fmt_opt(r.test_mrr),
            fmt_opt(r.best_val_mrr),
            fmt_opt(r.convergence_s),
        ])?;
    }
    for s in &summaries {
        w.write_record([
            s.f.to_string(),
            format!("mean of {}", s.runs),
            fmt_opt(s.mean_test_mrr),
            fmt_opt(s.mean_val_mrr),
            fmt_opt(s.mean_convergence_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn loss_gap(args: &ConfigArgs, schemes: &[experiment::SchemeName], seeds: &[u64], out: Option<PathBuf>) -> Result<(), CliError> {
    let base = args.resolve()?;
    let m = base.trainers;
    let mut w = csv::Writer::from_writer(output(&out)?);
    let mut header = vec!["scheme".to_string(), "seed".into(), "gap".into()];
    header.extend((1..=m).map(|i| format!("loss_{i}")));
    w.write_record(&header)?;
    let mut gaps: Vec<(experiment::SchemeName, Vec<f64>)> = schemes.iter().map(|&s| (s, Vec::new())).collect();
    for &seed in seeds {
        let seeded = ExperimentConfig {
            seed,
            evaluate: false,
            ..base.clone()
        };
        let ds = Arc::new(experiment::build_dataset(&seeded)?);
        for (scheme, acc) in gaps.iter_mut() {
            let cfg = ExperimentConfig {
                scheme: *scheme,
                ..seeded.clone()
            };
            let r = experiment::train(&cfg, &ds, None)?;
            let losses = converged_losses(&r.outcome.rounds, m, 0.2);
            let gap = max_pairwise_gap(&losses);
            acc.extend(gap);
            let mut row = vec![scheme.to_string(), seed.to_string(), fmt_opt(gap)];
            row.extend(losses.into_iter().map(fmt_opt));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    drop(w);
    for (scheme, mut g) in gaps {
        eprintln!("median gap {scheme}: {}", fmt_opt(median(&mut g)));
    }
    Ok(())
}

fn serve(cfg: &ExperimentConfig, dir: Option<PathBuf>, listen: &str, metrics: Option<PathBuf>) -> Result<(), CliError> {
    let ds = dataset(cfg, &dir)?;
    let outcome = experiment::serve(cfg, &ds, listen, |addr| eprintln!("listening on {addr}"))?;
    let r = experiment::TrainResult {
        convergence_s: experiment::convergence_time(&outcome.evals),
        outcome,
        trainers: vec![None; cfg.trainers],
        trainer_errors: Vec::new(),
    };
    if metrics.is_some() {
        write_metrics(output(&metrics)?, cfg, &r)?;
    }
    println!(
        "rounds {} val_mrr {} test_mrr {}",
        r.outcome.rounds_completed(),
        fmt_opt(r.outcome.best_val_mrr),
        fmt_opt(r.outcome.test_mrr)
    );
    Ok(())
}

fn join(cfg: &ExperimentConfig, dir: Option<PathBuf>, connect: &str, trainer: usize) -> Result<(), CliError> {
    if trainer == 0 || trainer > cfg.trainers {
        return Err(CliError::msg(format!("--trainer must lie in 1..={}", cfg.trainers)));
    }
    let ds = dataset(cfg, &dir)?;
    let part = partition_for(cfg, &dir, &ds)?;
    let o = experiment::join(cfg, &ds, &part, connect, (trainer - 1) as TrainerId)?;
    println!("trainer {trainer} steps {} rounds {} exit {:?}", o.steps, o.rounds, o.exit);
    Ok(())
}
