//! Encoders, the link decoder and their backward passes.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{loss, ModelWeights, NnError, Tensor};
use crate::graph::Graph;
use crate::rng;

const LN_EPS: f64 = 1e-5;
const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Sage,
    Mlp,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Gcn => "gcn",
            EncoderKind::Sage => "sage",
            EncoderKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "sage" => Ok(Self::Sage),
            "mlp" => Ok(Self::Mlp),
            other => Err(format!("unknown encoder {other:?} (expected gcn, sage or mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub in_dim: usize,
    pub hidden: usize,
    /// Encoder depth.
    pub layers: usize,
    /// Decoder depth.
    pub decoder_layers: usize,
    pub lr: f64,
    pub seed: u64,
    /// One GCN layer over neighbors only, no normalization or activation,
    /// sigmoid output and no decoder.
    pub linear_theory: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Gcn,
            in_dim: 1,
            hidden: 32,
            layers: 2,
            decoder_layers: 2,
            lr: 1e-3,
            seed: 0,
            linear_theory: false,
        }
    }
}

impl ModelConfig {
    /// The single-layer sigmoid GCN used by the gradient analysis.
    pub fn theory(in_dim: usize) -> Self {
        Self {
            in_dim,
            hidden: 1,
            layers: 1,
            decoder_layers: 0,
            linear_theory: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let mut problems = Vec::new();
        if self.layers == 0 {
            problems.push("layers must be at least 1".to_owned());
        }
        if self.in_dim == 0 || self.hidden == 0 {
            problems.push("in_dim and hidden must be positive".to_owned());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if self.linear_theory {
            if self.encoder != EncoderKind::Gcn || self.layers != 1 {
                problems.push("linear theory mode needs a single gcn layer".to_owned());
            }
        } else if self.decoder_layers == 0 {
            problems.push("decoder_layers must be at least 1".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(NnError::Config(problems.join("; ")))
        }
    }

    pub fn fingerprint(&self) -> u64 {
        let desc = format!(
            "encoder={};in={};hidden={};layers={};decoder={};theory={}",
            self.encoder,
            self.in_dim,
            self.hidden,
            self.layers,
            if self.linear_theory { 0 } else { self.decoder_layers },
            self.linear_theory
        );
        let digest = Sha256::digest(desc.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(head)
    }
}

/// One message-passing hop. Destination row `i` is also source row `i`;
/// its neighbors are `indices[offsets[i]..offsets[i + 1]]` in source rows.
#[derive(Debug, Clone, Copy)]
pub struct BlockRef<'a> {
    pub num_dst: usize,
    pub num_src: usize,
    pub offsets: &'a [usize],
    pub indices: &'a [u32],
}

impl<'a> BlockRef<'a> {
    pub fn full(g: &'a Graph) -> Self {
        Self {
            num_dst: g.num_nodes(),
            num_src: g.num_nodes(),
            offsets: g.offsets(),
            indices: g.neighbor_array(),
        }
    }

    fn neighbors(&self, i: usize) -> &'a [u32] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Debug, Clone)]
struct EncLayer {
    w: usize,
    w_neigh: Option<usize>,
    /// (gamma, beta, prelu) on hidden layers.
    norm: Option<(usize, usize, usize)>,
    in_dim: usize,
}

#[derive(Debug, Clone)]
struct DecLayer {
    w: usize,
    prelu: Option<usize>,
}

/// Parameter layout for a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    fingerprint: u64,
    enc: Vec<EncLayer>,
    dec: Vec<DecLayer>,
    names: Vec<(String, usize, usize)>,
}

#[derive(Debug, Default)]
struct LayerTrace {
    /// Mean-aggregated inputs (gcn: self and neighbors; sage: neighbors).
    agg: Option<Tensor>,
    /// Destination rows of the input (sage and mlp).
    self_rows: Option<Tensor>,
    xhat: Option<Tensor>,
    inv_std: Vec<f64>,
    /// LayerNorm output, the PReLU input.
    act_in: Option<Tensor>,
}

/// Saved activations of one encoder pass.
#[derive(Debug)]
pub struct EncoderTrace {
    /// `inputs[l]` feeds layer `l`; the last entry is the encoder output.
    inputs: Vec<Tensor>,
    layers: Vec<LayerTrace>,
}

impl EncoderTrace {
    pub fn output(&self) -> &Tensor {
        self.inputs.last().expect("trace has the input tensor")
    }

    pub fn into_output(mut self) -> Tensor {
        self.inputs.pop().expect("trace has the input tensor")
    }
}

/// Saved activations of one decoder pass.
#[derive(Debug)]
pub struct DecoderTrace {
    /// Input of every decoder layer; `e[0]` is the elementwise product.
    e: Vec<Tensor>,
    /// Pre-activation of every hidden decoder layer.
    pre: Vec<Tensor>,
    pub scores: Vec<f64>,
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut names = Vec::new();
        let push = |names: &mut Vec<(String, usize, usize)>, name: String, r, c| {
            names.push((name, r, c));
            names.len() - 1
        };
        let mut enc = Vec::new();
        for l in 0..cfg.layers {
            let in_dim = if l == 0 { cfg.in_dim } else { cfg.hidden };
            let out_dim = cfg.hidden;
            let (w, w_neigh) = match cfg.encoder {
                EncoderKind::Sage => (
                    push(&mut names, format!("enc.{l}.self"), in_dim, out_dim),
                    Some(push(&mut names, format!("enc.{l}.neigh"), in_dim, out_dim)),
                ),
                _ => (push(&mut names, format!("enc.{l}.weight"), in_dim, out_dim), None),
            };
            let norm = (l + 1 < cfg.layers && !cfg.linear_theory).then(|| {
                (
                    push(&mut names, format!("enc.{l}.ln.gamma"), 1, out_dim),
                    push(&mut names, format!("enc.{l}.ln.beta"), 1, out_dim),
                    push(&mut names, format!("enc.{l}.prelu"), 1, 1),
                )
            });
            enc.push(EncLayer {
                w,
                w_neigh,
                norm,
                in_dim,
            });
        }
        let mut dec = Vec::new();
        if !cfg.linear_theory {
            for k in 0..cfg.decoder_layers {
                let last = k + 1 == cfg.decoder_layers;
                let out = if last { 1 } else { cfg.hidden };
                let w = push(&mut names, format!("dec.{k}.weight"), cfg.hidden, out);
                let prelu = (!last).then(|| push(&mut names, format!("dec.{k}.prelu"), 1, 1));
                dec.push(DecLayer { w, prelu });
            }
        }
        Ok(Self {
            fingerprint: cfg.fingerprint(),
            cfg: cfg.clone(),
            enc,
            dec,
            names,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Glorot-uniform matrices, unit LayerNorm gains, zero shifts and PReLU
    /// slopes of 0.25, drawn from `cfg.seed`.
    pub fn init(&self) -> ModelWeights {
        let mut rng = rng::seeded(self.cfg.seed, rng::stream::MODEL_INIT);
        let params = self
            .names
            .iter()
            .map(|(name, r, c)| {
                let t = if name.ends_with(".prelu") {
                    Tensor::filled(*r, *c, PRELU_INIT)
                } else if name.ends_with(".gamma") {
                    Tensor::filled(*r, *c, 1.0)
                } else if name.ends_with(".beta") {
                    Tensor::zeros(*r, *c)
                } else {
                    let a = (6.0 / (*r + *c) as f64).sqrt();
                    let u = Uniform::new_inclusive(-a, a).expect("finite glorot bound");
                    Tensor::from_fn(*r, *c, |_, _| u.sample(&mut rng))
                };
                (name.clone(), t)
            })
            .collect();
        ModelWeights::new(self.fingerprint, params)
    }

    fn check_weights(&self, w: &ModelWeights) -> Result<(), NnError> {
        if w.fingerprint() != self.fingerprint {
            return Err(NnError::FingerprintMismatch {
                expected: self.fingerprint,
                found: w.fingerprint(),
            });
        }
        let shapes_ok = w.len() == self.names.len()
            && w
                .params()
                .iter()
                .zip(&self.names)
                .all(|((n, t), (name, r, c))| n == name && t.shape() == (*r, *c));
        if !shapes_ok {
            return Err(NnError::Shape(
                "weights do not match the model layout".to_owned(),
            ));
        }
        Ok(())
    }

    /// Runs the encoder over `blocks` (one per layer, outermost first).
    /// `x` holds the features of the first block's source nodes.
    pub fn encode_forward(
        &self,
        w: &ModelWeights,
        blocks: &[BlockRef<'_>],
        x: Tensor,
    ) -> Result<EncoderTrace, NnError> {
        self.check_weights(w)?;
        if blocks.len() != self.enc.len() {
            return Err(NnError::Shape(format!(
                "{} blocks for {} encoder layers",
                blocks.len(),
                self.enc.len()
            )));
        }
        let mut inputs = vec![x];
        let mut layers = Vec::with_capacity(self.enc.len());
        for (l, (layer, block)) in self.enc.iter().zip(blocks).enumerate() {
            let h = &inputs[l];
            if h.cols() != layer.in_dim || h.rows() != block.num_src || block.num_dst > block.num_src
            {
                return Err(NnError::Shape(format!(
                    "layer {l}: input {}x{}, block {}->{}, expected width {}",
                    h.rows(),
                    h.cols(),
                    block.num_src,
                    block.num_dst,
                    layer.in_dim
                )));
            }
            let mut trace = LayerTrace::default();
            let mut lin = match self.cfg.encoder {
                EncoderKind::Gcn => {
                    let agg = mean_aggregate(h, block, !self.cfg.linear_theory);
                    let lin = agg.matmul(w.tensor(layer.w));
                    trace.agg = Some(agg);
                    lin
                }
                EncoderKind::Sage => {
                    let own = prefix_rows(h, block.num_dst);
                    let agg = mean_aggregate(h, block, false);
                    let mut lin = own.matmul(w.tensor(layer.w));
                    lin.add_assign(&agg.matmul(w.tensor(layer.w_neigh.expect("sage layout"))));
                    trace.self_rows = Some(own);
                    trace.agg = Some(agg);
                    lin
                }
                EncoderKind::Mlp => {
                    let own = prefix_rows(h, block.num_dst);
                    let lin = own.matmul(w.tensor(layer.w));
                    trace.self_rows = Some(own);
                    lin
                }
            };
            if let Some((gamma, beta, prelu)) = layer.norm {
                let (xhat, inv_std) = layer_norm(&lin);
                let mut y = xhat.clone();
                let (g, b) = (w.tensor(gamma).data(), w.tensor(beta).data());
                for r in 0..y.rows() {
                    for ((v, g), b) in y.row_mut(r).iter_mut().zip(g).zip(b) {
                        *v = *v * g + b;
                    }
                }
                let a = w.tensor(prelu).data()[0];
                lin = y.clone();
                lin.data_mut().iter_mut().for_each(|v| *v = prelu_fwd(*v, a));
                trace.xhat = Some(xhat);
                trace.inv_std = inv_std;
                trace.act_in = Some(y);
            }
            if self.cfg.linear_theory {
                lin.data_mut().iter_mut().for_each(|v| *v = loss::sigmoid(*v));
            }
            if lin.first_non_finite().is_some() {
                return Err(NnError::NonFinite {
                    stage: "encoder",
                    layer: l,
                });
            }
            layers.push(trace);
            inputs.push(lin);
        }
        Ok(EncoderTrace { inputs, layers })
    }

    /// Accumulates parameter gradients into `grads` given the gradient of
    /// the encoder output. Returns the gradient of the first-layer input.
    pub fn encode_backward(
        &self,
        w: &ModelWeights,
        blocks: &[BlockRef<'_>],
        trace: &EncoderTrace,
        d_out: Tensor,
        grads: &mut ModelWeights,
    ) -> Tensor {
        let mut d = d_out;
        for l in (0..self.enc.len()).rev() {
            let layer = &self.enc[l];
            let lt = &trace.layers[l];
            let block = &blocks[l];
            if self.cfg.linear_theory {
                for (g, z) in d.data_mut().iter_mut().zip(trace.inputs[l + 1].data()) {
                    *g *= z * (1.0 - z);
                }
            }
            if let Some((gamma, beta, prelu)) = layer.norm {
                let y = lt.act_in.as_ref().expect("normed layer trace");
                let xhat = lt.xhat.as_ref().expect("normed layer trace");
                let a = w.tensor(prelu).data()[0];
                let mut d_a = 0.0;
                for (g, &v) in d.data_mut().iter_mut().zip(y.data()) {
                    if v <= 0.0 {
                        d_a += *g * v;
                        *g *= a;
                    }
                }
                grads.tensor_mut(prelu).data_mut()[0] += d_a;
                d = layer_norm_backward(
                    &d,
                    xhat,
                    &lt.inv_std,
                    w.tensor(gamma).data(),
                    grads,
                    gamma,
                    beta,
                );
            }
            let need_input = l > 0;
            let mut d_h = Tensor::zeros(block.num_src, layer.in_dim);
            match self.cfg.encoder {
                EncoderKind::Gcn => {
                    let agg = lt.agg.as_ref().expect("gcn trace");
                    agg.matmul_tn_into(&d, grads.tensor_mut(layer.w));
                    if need_input {
                        let d_agg = d.matmul_nt(w.tensor(layer.w));
                        scatter_mean(&d_agg, block, !self.cfg.linear_theory, &mut d_h);
                    }
                }
                EncoderKind::Sage => {
                    let own = lt.self_rows.as_ref().expect("sage trace");
                    let agg = lt.agg.as_ref().expect("sage trace");
                    let wn = layer.w_neigh.expect("sage layout");
                    own.matmul_tn_into(&d, grads.tensor_mut(layer.w));
                    agg.matmul_tn_into(&d, grads.tensor_mut(wn));
                    if need_input {
                        add_prefix(&mut d_h, &d.matmul_nt(w.tensor(layer.w)));
                        scatter_mean(&d.matmul_nt(w.tensor(wn)), block, false, &mut d_h);
                    }
                }
                EncoderKind::Mlp => {
                    let own = lt.self_rows.as_ref().expect("mlp trace");
                    own.matmul_tn_into(&d, grads.tensor_mut(layer.w));
                    if need_input {
                        add_prefix(&mut d_h, &d.matmul_nt(w.tensor(layer.w)));
                    }
                }
            }
            d = d_h;
        }
        d
    }

    /// Full-graph embeddings for every node.
    pub fn encode(&self, w: &ModelWeights, g: &Graph, x: &Tensor) -> Result<Tensor, NnError> {
        let blocks = vec![BlockRef::full(g); self.enc.len()];
        Ok(self.encode_forward(w, &blocks, x.clone())?.into_output())
    }

    /// Scores `pairs` of rows of `emb`.
    pub fn decode_forward(
        &self,
        w: &ModelWeights,
        emb: &Tensor,
        pairs: &[(u32, u32)],
    ) -> Result<DecoderTrace, NnError> {
        self.check_weights(w)?;
        if self.dec.is_empty() {
            return Err(NnError::Config("model has no decoder".to_owned()));
        }
        if emb.cols() != self.cfg.hidden {
            return Err(NnError::Shape(format!(
                "embedding width {} but decoder expects {}",
                emb.cols(),
                self.cfg.hidden
            )));
        }
        let h = emb.cols();
        let mut e0 = Tensor::zeros(pairs.len(), h);
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let (ra, rb) = (emb.row(a as usize), emb.row(b as usize));
            for ((o, x), y) in e0.row_mut(p).iter_mut().zip(ra).zip(rb) {
                *o = x * y;
            }
        }
        let mut e = vec![e0];
        let mut pre = Vec::new();
        for (k, layer) in self.dec.iter().enumerate() {
            let z = e[k].matmul(w.tensor(layer.w));
            if z.first_non_finite().is_some() {
                return Err(NnError::NonFinite {
                    stage: "decoder",
                    layer: k,
                });
            }
            match layer.prelu {
                Some(p) => {
                    let a = w.tensor(p).data()[0];
                    let mut act = z.clone();
                    act.data_mut().iter_mut().for_each(|v| *v = prelu_fwd(*v, a));
                    pre.push(z);
                    e.push(act);
                }
                None => e.push(z),
            }
        }
        let scores = e.pop().expect("decoder output").into_data();
        Ok(DecoderTrace { e, pre, scores })
    }

    /// Accumulates decoder gradients into `grads` and embedding gradients
    /// into `d_emb`.
    pub fn decode_backward(
        &self,
        w: &ModelWeights,
        emb: &Tensor,
        pairs: &[(u32, u32)],
        trace: &DecoderTrace,
        d_scores: &[f64],
        grads: &mut ModelWeights,
        d_emb: &mut Tensor,
    ) {
        let mut d = Tensor::new(d_scores.len(), 1, d_scores.to_vec());
        for k in (0..self.dec.len()).rev() {
            let layer = &self.dec[k];
            if let Some(p) = layer.prelu {
                let a = w.tensor(p).data()[0];
                let mut d_a = 0.0;
                for (g, &v) in d.data_mut().iter_mut().zip(trace.pre[k].data()) {
                    if v <= 0.0 {
                        d_a += *g * v;
                        *g *= a;
                    }
                }
                grads.tensor_mut(p).data_mut()[0] += d_a;
            }
            trace.e[k].matmul_tn_into(&d, grads.tensor_mut(layer.w));
            d = d.matmul_nt(w.tensor(layer.w));
        }
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            let dp = d.row(p);
            for j in 0..emb.cols() {
                let (xa, xb) = (emb.get(a, j), emb.get(b, j));
                d_emb.row_mut(a)[j] += dp[j] * xb;
                d_emb.row_mut(b)[j] += dp[j] * xa;
            }
        }
    }

    /// Scores pairs of rows of precomputed embeddings.
    pub fn score(
        &self,
        w: &ModelWeights,
        emb: &Tensor,
        pairs: &[(u32, u32)],
    ) -> Result<Vec<f64>, NnError> {
        Ok(self.decode_forward(w, emb, pairs)?.scores)
    }

    /// One forward and backward pass of the link objective. `pairs` index
    /// destination rows of the last block; `labels` are 1 for positives and
    /// 0 for negatives. Gradients are accumulated into `grads`.
    pub fn link_loss_and_grad(
        &self,
        w: &ModelWeights,
        blocks: &[BlockRef<'_>],
        x: Tensor,
        pairs: &[(u32, u32)],
        labels: &[f64],
        grads: &mut ModelWeights,
    ) -> Result<f64, NnError> {
        let trace = self.encode_forward(w, blocks, x)?;
        let emb = trace.output();
        let dec = self.decode_forward(w, emb, pairs)?;
        let (loss, d_scores) = loss::loss_bce(&dec.scores, labels);
        let mut d_emb = emb.zeros_like();
        self.decode_backward(w, emb, pairs, &dec, &d_scores, grads, &mut d_emb);
        self.encode_backward(w, blocks, &trace, d_emb, grads);
        Ok(loss)
    }
}

fn prelu_fwd(v: f64, a: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        a * v
    }
}

fn prefix_rows(h: &Tensor, n: usize) -> Tensor {
    Tensor::new(n, h.cols(), h.data()[..n * h.cols()].to_vec())
}

fn add_prefix(acc: &mut Tensor, d: &Tensor) {
    let n = d.data().len();
    for (a, b) in acc.data_mut()[..n].iter_mut().zip(d.data()) {
        *a += b;
    }
}

/// Row mean over neighbors, optionally including the node itself. Rows
/// without any term stay zero.
fn mean_aggregate(h: &Tensor, block: &BlockRef<'_>, self_loop: bool) -> Tensor {
    let mut out = Tensor::zeros(block.num_dst, h.cols());
    for i in 0..block.num_dst {
        let nbrs = block.neighbors(i);
        let count = nbrs.len() + usize::from(self_loop);
        if count == 0 {
            continue;
        }
        let row = out.row_mut(i);
        if self_loop {
            row.copy_from_slice(h.row(i));
        }
        for &j in nbrs {
            for (o, x) in row.iter_mut().zip(h.row(j as usize)) {
                *o += x;
            }
        }
        let inv = 1.0 / count as f64;
        row.iter_mut().for_each(|o| *o *= inv);
    }
    out
}

fn scatter_mean(d_agg: &Tensor, block: &BlockRef<'_>, self_loop: bool, d_h: &mut Tensor) {
    for i in 0..block.num_dst {
        let nbrs = block.neighbors(i);
        let count = nbrs.len() + usize::from(self_loop);
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        let g = d_agg.row(i);
        if self_loop {
            for (o, x) in d_h.row_mut(i).iter_mut().zip(g) {
                *o += x * inv;
            }
        }
        for &j in nbrs {
            for (o, x) in d_h.row_mut(j as usize).iter_mut().zip(g) {
                *o += x * inv;
            }
        }
    }
}

/// Per-row standardization. Returns `xhat` and `1 / sqrt(var + eps)`.
fn layer_norm(x: &Tensor) -> (Tensor, Vec<f64>) {
    let n = x.cols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = xhat.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        inv_std.push(inv);
    }
    (xhat, inv_std)
}

fn layer_norm_backward(
    d_y: &Tensor,
    xhat: &Tensor,
    inv_std: &[f64],
    gamma: &[f64],
    grads: &mut ModelWeights,
    gamma_idx: usize,
    beta_idx: usize,
) -> Tensor {
    let n = d_y.cols() as f64;
    let mut d_x = Tensor::zeros(d_y.rows(), d_y.cols());
    let mut d_gamma = vec![0.0; d_y.cols()];
    let mut d_beta = vec![0.0; d_y.cols()];
    let mut d_xhat = vec![0.0; d_y.cols()];
    for r in 0..d_y.rows() {
        let (dy, xh) = (d_y.row(r), xhat.row(r));
        let mut sum = 0.0;
        let mut dot = 0.0;
        for j in 0..dy.len() {
            d_gamma[j] += dy[j] * xh[j];
            d_beta[j] += dy[j];
            d_xhat[j] = dy[j] * gamma[j];
            sum += d_xhat[j];
            dot += d_xhat[j] * xh[j];
        }
        let scale = inv_std[r] / n;
        for (j, o) in d_x.row_mut(r).iter_mut().enumerate() {
            *o = scale * (n * d_xhat[j] - sum - xh[j] * dot);
        }
    }
    for (g, d) in grads.tensor_mut(gamma_idx).data_mut().iter_mut().zip(d_gamma) {
        *g += d;
    }
    for (g, d) in grads.tensor_mut(beta_idx).data_mut().iter_mut().zip(d_beta) {
        *g += d;
    }
    d_x
}
