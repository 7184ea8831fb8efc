//! Closed forms for the two-class, two-partition homophily analysis.
//!
//! Partition 1 holds a fraction `beta` of class 0 and `1 - beta` of class 1;
//! partition 2 holds the complement. Edges appear between a same-class pair
//! with weight `h` and a cross-class pair with weight `1 - h`, normalized by
//! `c`. Gradients are those of a single sigmoid GCN layer at `W = 0` under
//! the squared loss, for a node of class 1.
//!
//! [`monte_carlo`] measures the same quantities on generated graphs.

pub mod monte_carlo;

use thiserror::Error;

use crate::graph::GraphError;
use crate::nn::NnError;
use crate::partition::PartitionError;

const SINGULAR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("{0}")]
    OutOfRange(String),
    #[error("{what} is undefined at beta = {beta}, h = {h} (denominator vanishes)")]
    Singular { what: &'static str, beta: f64, h: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoClassSetup {
    pub beta: f64,
    pub h: f64,
    /// Nodes per partition (and per class).
    pub eta: f64,
    /// Edge normalization; a pair has edge probability proportional to `1/c`.
    pub c: f64,
}

impl TwoClassSetup {
    pub fn new(beta: f64, h: f64, eta: f64, c: f64) -> Result<Self, TheoryError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&beta) || !unit.contains(&h) {
            return Err(TheoryError::OutOfRange(format!(
                "beta and h must lie in [0, 1], got beta = {beta}, h = {h}"
            )));
        }
        if !(eta > 0.0 && c > 0.0 && eta.is_finite() && c.is_finite()) {
            return Err(TheoryError::OutOfRange(format!(
                "eta and c must be positive, got eta = {eta}, c = {c}"
            )));
        }
        Ok(Self { beta, h, eta, c })
    }

    /// Setup matching the Bernoulli generator on `num_nodes` nodes: the
    /// normalization is the inverse of the generator's pair scale.
    pub fn for_generator(beta: f64, h: f64, num_nodes: usize, edge_scale: f64) -> Result<Self, TheoryError> {
        Self::new(beta, h, num_nodes as f64 / 2.0, 1.0 / edge_scale)
    }

    /// Neighbor-class normalizers of a class-1 node on each instance.
    fn local_denominators(&self) -> (f64, f64) {
        let (b, h) = (self.beta, self.h);
        ((1.0 - h) * b + h * (1.0 - b), (1.0 - h) * (1.0 - b) + h * b)
    }

    fn guard(&self, what: &'static str, d: f64) -> Result<f64, TheoryError> {
        if d.abs() < SINGULAR {
            Err(TheoryError::Singular {
                what,
                beta: self.beta,
                h: self.h,
            })
        } else {
            Ok(d)
        }
    }
}

/// Expected number of edges between the two partitions.
pub fn expected_edge_cut(s: &TwoClassSetup) -> f64 {
    let (b, h) = (s.beta, s.h);
    (1.0 - 2.0 * (1.0 - b) * b - (2.0 * b - 1.0).powi(2) * h) * s.eta * s.eta / s.c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgminReport {
    pub beta_star: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Grid minimizer of [`expected_edge_cut`] over `beta` in `[0.5, 1]` with
/// `steps` intervals. Ties go to the larger `beta`.
pub fn min_cut_argmin_check(h: f64, steps: usize) -> Result<ArgminReport, TheoryError> {
    let steps = steps.max(1);
    let mut report = ArgminReport {
        beta_star: 0.5,
        lambda_min: f64::INFINITY,
        lambda_max: f64::NEG_INFINITY,
    };
    for i in 0..=steps {
        let beta = 0.5 + 0.5 * i as f64 / steps as f64;
        let l = expected_edge_cut(&TwoClassSetup::new(beta, h, 1.0, 1.0)?);
        if l <= report.lambda_min {
            report.lambda_min = l;
            report.beta_star = beta;
        }
        report.lambda_max = report.lambda_max.max(l);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialGradients {
    pub global: [f64; 2],
    pub local1: [f64; 2],
    pub local2: [f64; 2],
}

pub fn expected_initial_gradients(s: &TwoClassSetup) -> Result<InitialGradients, TheoryError> {
    let (b, h) = (s.beta, s.h);
    let (d1, d2) = s.local_denominators();
    let d1 = s.guard("instance 1 gradient", d1)?;
    let d2 = s.guard("instance 2 gradient", d2)?;
    Ok(InitialGradients {
        global: [-(1.0 - h) / 8.0, -h / 8.0],
        local1: [-(1.0 - h) * b / (8.0 * d1), -h * (1.0 - b) / (8.0 * d1)],
        local2: [-(1.0 - h) * (1.0 - b) / (8.0 * d2), -h * b / (8.0 * d2)],
    })
}

/// `(|global - local1|, |global - local2|, |local1 - local2|)` in the l2
/// norm, from their factored closed forms.
pub fn gradient_discrepancies(s: &TwoClassSetup) -> Result<[f64; 3], TheoryError> {
    let (b, h) = (s.beta, s.h);
    let (d1, d2) = s.local_denominators();
    s.guard("instance 1 gradient", d1)?;
    s.guard("instance 2 gradient", d2)?;
    let r2 = std::f64::consts::SQRT_2;
    Ok([
        r2 / 8.0 * ((1.0 - 2.0 * b) * (h - 1.0) * h / (b - 2.0 * b * h + h)).abs(),
        r2 / 8.0 * ((2.0 * b - 1.0) * (h - 1.0) * h / (1.0 - b + (2.0 * b - 1.0) * h)).abs(),
        ((2.0 * b - 1.0) * (h - 1.0) * h / (4.0 * r2) / ((b - 2.0 * b * h + h - 1.0) * (b - 2.0 * b * h + h)))
            .abs(),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instance {
    One,
    Two,
}

/// Expected squared residual `(1 - sigmoid(g(w)))^2` of a class-1 node on
/// one instance, where `g(w)` is its expected aggregated feature times `w`.
pub fn expected_local_loss(s: &TwoClassSetup, w0: f64, w1: f64, instance: Instance) -> Result<f64, TheoryError> {
    let (b, h) = (s.beta, s.h);
    let exponent = match instance {
        Instance::One => {
            let d = s.guard("instance 1 loss", (2.0 * b - 1.0) * h - b)?;
            (b * (h - 1.0) * w0 + (b - 1.0) * h * w1) / d
        }
        Instance::Two => {
            let d = s.guard("instance 2 loss", -b + (2.0 * b - 1.0) * h + 1.0)?;
            ((b - 1.0) * (h - 1.0) * w0 + b * h * w1) / d
        }
    };
    Ok((1.0 + exponent.exp()).powi(-2))
}

fn l2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
