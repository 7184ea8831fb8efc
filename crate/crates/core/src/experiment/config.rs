//! The flat experiment config.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::coordination::SessionConfig;
use crate::nn::{EncoderKind, ModelConfig};
use crate::partition::{Scheme, TrainerId};
use crate::sampling::Fanout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tma,
    Ggs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Random,
    Super,
    Mincut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    /// Deterministic virtual time; each step costs `step_cost_s`.
    Mock,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Local,
    Tcp,
}

macro_rules! lowercase_enum {
    ($t:ty { $($v:ident => $s:literal),* }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(Self::$v),)*
                    _ => Err(format!("unknown value {s:?}, expected one of: {}", [$($s),*].join(", "))),
                }
            }
        }
    };
}

lowercase_enum!(Mode { Tma => "tma", Ggs => "ggs" });
lowercase_enum!(SchemeName { Random => "random", Super => "super", Mincut => "mincut" });
lowercase_enum!(ClockKind { Mock => "mock", Real => "real" });
lowercase_enum!(TransportKind { Local => "local", Tcp => "tcp" });

/// Every knob of a run in one flat document. Missing keys take defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    pub num_nodes: usize,
    pub mean_degree: f64,
    pub homophily: f64,
    pub classes: usize,
    /// Gaussian columns appended to the one-hot label features.
    pub noise_dims: usize,
    pub noise_scale: f64,

    pub val_frac: f64,
    pub test_frac: f64,
    pub negatives: usize,

    pub scheme: SchemeName,
    pub trainers: usize,
    /// Super-node count for the `super` scheme.
    pub clusters: usize,

    pub encoder: EncoderKind,
    pub hidden: usize,
    pub layers: usize,
    pub decoder_layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Comma separated, outermost hop first; `all` keeps every neighbor.
    pub fanouts: String,

    pub mode: Mode,
    pub budget_s: f64,
    /// Aggregation interval; GGS evaluates on the same cadence.
    pub interval_s: f64,
    pub ready_timeout_s: f64,
    pub clock: ClockKind,
    pub transport: TransportKind,
    /// Virtual seconds per local step under the mock clock.
    pub step_cost_s: f64,
    /// Per-trainer step-time multipliers; empty means all 1.
    pub slowdowns: Vec<f64>,
    /// Relative jitter of the virtual step cost.
    pub jitter: f64,
    /// Trainers that never start, numbered from 1.
    pub fail_ids: Vec<usize>,
    /// Validate every round and test the best round.
    pub evaluate: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_nodes: 10_000,
            mean_degree: 10.0,
            homophily: 0.9,
            classes: 2,
            noise_dims: 8,
            noise_scale: 0.5,
            val_frac: 0.05,
            test_frac: 0.05,
            negatives: 100,
            scheme: SchemeName::Random,
            trainers: 3,
            clusters: 64,
            encoder: EncoderKind::Gcn,
            hidden: 32,
            layers: 2,
            decoder_layers: 2,
            lr: 1e-3,
            batch_size: 128,
            fanouts: "5,5".into(),
            mode: Mode::Tma,
            budget_s: 300.0,
            interval_s: 10.0,
            ready_timeout_s: 30.0,
            clock: ClockKind::Mock,
            transport: TransportKind::Local,
            step_cost_s: 0.1,
            slowdowns: Vec::new(),
            jitter: 0.0,
            fail_ids: Vec::new(),
            evaluate: true,
        }
    }
}

fn parse_fanouts(s: &str) -> Result<Vec<Fanout>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<Fanout>().map_err(|e| format!("fanout {p:?}: {e}")))
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every cross-field constraint and reports all violations.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut e: Vec<String> = Vec::new();
        let c = self;
        if c.classes < 2 {
            e.push(format!("classes must be at least 2, got {}", c.classes));
        } else if c.num_nodes == 0 || !c.num_nodes.is_multiple_of(2) || !c.num_nodes.is_multiple_of(c.classes) {
            e.push(format!(
                "num_nodes {} must be positive, even and divisible by classes {}",
                c.num_nodes, c.classes
            ));
        }
        if !(c.mean_degree > 0.0 && c.mean_degree.is_finite()) {
            e.push(format!("mean_degree must be positive, got {}", c.mean_degree));
        }
        if !(0.0..=1.0).contains(&c.homophily) {
            e.push(format!("homophily must lie in [0, 1], got {}", c.homophily));
        }
        if !(c.noise_scale >= 0.0 && c.noise_scale.is_finite()) {
            e.push(format!("noise_scale must be non-negative, got {}", c.noise_scale));
        }
        if !(c.val_frac >= 0.0 && c.test_frac >= 0.0 && c.val_frac + c.test_frac < 0.5) {
            e.push(format!(
                "val_frac + test_frac must be non-negative and below 0.5, got {} + {}",
                c.val_frac, c.test_frac
            ));
        }
        if c.evaluate && (c.val_frac <= 0.0 || c.test_frac <= 0.0) {
            e.push("evaluation needs positive val_frac and test_frac".into());
        }
        if c.negatives == 0 {
            e.push("negatives must be positive".into());
        }
        if c.trainers == 0 || c.trainers > TrainerId::MAX as usize {
            e.push(format!("trainers out of range: {}", c.trainers));
        }
        if c.scheme == SchemeName::Super && c.clusters < c.trainers {
            e.push(format!(
                "clusters ({}) must be at least trainers ({})",
                c.clusters, c.trainers
            ));
        }
        if let Err(err) = self.model_config(1).validate() {
            e.push(err.to_string());
        }
        if c.batch_size == 0 {
            e.push("batch_size must be positive".into());
        }
        match parse_fanouts(&c.fanouts) {
            Ok(f) if f.len() != c.layers => e.push(format!(
                "fanouts lists {} hops but layers is {}",
                f.len(),
                c.layers
            )),
            Ok(_) => {}
            Err(err) => e.push(err),
        }
        if !(c.interval_s > 0.0 && c.interval_s.is_finite()) {
            e.push(format!("interval_s must be positive, got {}", c.interval_s));
        }
        if !(c.budget_s.is_finite() && c.interval_s < c.budget_s) {
            e.push(format!(
                "interval_s ({}) must be shorter than budget_s ({})",
                c.interval_s, c.budget_s
            ));
        }
        if !(c.ready_timeout_s >= 0.0 && c.ready_timeout_s.is_finite()) {
            e.push(format!("ready_timeout_s must be non-negative, got {}", c.ready_timeout_s));
        }
        if c.clock == ClockKind::Mock && !(c.step_cost_s > 0.0 && c.step_cost_s.is_finite()) {
            e.push(format!("step_cost_s must be positive under the mock clock, got {}", c.step_cost_s));
        }
        if !c.slowdowns.is_empty() && c.slowdowns.len() != c.trainers {
            e.push(format!(
                "slowdowns lists {} trainers but trainers is {}",
                c.slowdowns.len(),
                c.trainers
            ));
        }
        if c.slowdowns.iter().any(|&s| !(s >= 1.0 && s.is_finite())) {
            e.push("every slowdown must be a finite factor of at least 1".into());
        }
        if !(0.0..1.0).contains(&c.jitter) {
            e.push(format!("jitter must lie in [0, 1), got {}", c.jitter));
        }
        let mut ids = c.fail_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != c.fail_ids.len() {
            e.push("fail_ids contains duplicates".into());
        }
        if let Some(&bad) = ids.iter().find(|&&i| i == 0 || i > c.trainers) {
            e.push(format!("fail id {bad} outside 1..={}", c.trainers));
        }
        if !ids.is_empty() && ids.len() >= c.trainers {
            e.push(format!("{} failures leave no live trainer out of {}", ids.len(), c.trainers));
        }
        if c.mode == Mode::Ggs && !ids.is_empty() {
            e.push("failure injection applies to tma mode only".into());
        }
        if c.transport == TransportKind::Tcp && c.clock == ClockKind::Mock {
            e.push("the tcp transport needs the real clock".into());
        }
        if c.transport == TransportKind::Tcp && c.mode == Mode::Ggs {
            e.push("ggs mode runs in process; use the local transport".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Config(e))
        }
    }

    pub fn fanout_list(&self) -> Result<Vec<Fanout>, ExperimentError> {
        parse_fanouts(&self.fanouts).map_err(|e| ExperimentError::Config(vec![e]))
    }

    pub fn partition_scheme(&self) -> Scheme {
        match self.scheme {
            SchemeName::Random => Scheme::RandomNode,
            SchemeName::Super => Scheme::SuperNode {
                clusters: self.clusters,
            },
            SchemeName::Mincut => Scheme::MinCut,
        }
    }

    pub fn model_config(&self, in_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder,
            in_dim,
            hidden: self.hidden,
            layers: self.layers,
            decoder_layers: self.decoder_layers,
            lr: self.lr,
            seed: self.seed,
            linear_theory: false,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.classes + self.noise_dims
    }

    pub fn slowdown(&self, i: usize) -> f64 {
        self.slowdowns.get(i).copied().unwrap_or(1.0)
    }

    /// Failed trainer slots, numbered from 0.
    pub fn failed_slots(&self) -> Vec<TrainerId> {
        self.fail_ids.iter().map(|&i| (i - 1) as TrainerId).collect()
    }

    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            budget_s: self.budget_s,
            interval_s: self.interval_s,
            ready_timeout_s: self.ready_timeout_s,
            eval_queue: 64,
            failed: self.failed_slots(),
            crashes: Vec::new(),
            trace: false,
        }
    }
}
