//! The end-to-end pairwise model.
//!
//! Both graphs go through the shared GCN encoder. The interaction mode then
//! decides what the head sees:
//!
//! - `cagpool`: co-attention pooling, one or more convolutions on each
//!   pooled graph, global readout (mean by default, or sum);
//! - `topkpool` / `sagpool`: the same pipeline with a per-graph scorer;
//! - `siamese-concat`: readout of the encoder output, no interaction;
//! - `node-histogram`: siamese vectors plus a histogram of all cross-graph
//!   node similarities.
//!
//! The head is `relu(x W1 + b1) W2 + b2` on `[x_A || x_B]` (or `x_A + x_B`
//! with `symmetric`), followed by a sigmoid per output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{encode_on_tape, gcn_layer, normalize_dense, normalized_adjacency, Activation, GcnConfig, GcnParams};
use crate::graph::{Graph, GraphPair, Target};
use crate::params::{glorot_uniform, BoundParams, ParamStore};
use crate::pooling::{
    cagpool, global_pool, pairwise_node_interaction, pool_side, sagpool_scores, topkpool_scores, CoAttentionKind,
    CoAttentionParams, CoAttentionVars, PooledPair, PooledSide, PoolingRatio, Readout, Selection,
};
use crate::tensor::{sigmoid, Tape, Tensor, Var};

/// Regression targets are clipped to this before the squared error, since a
/// sigmoid output never reaches 1.
pub const MAX_REGRESSION_TARGET: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    /// Independent sigmoid per class.
    Classification { num_classes: usize },
    /// Scalar similarity in `(0, 1)`.
    Regression,
}

impl Task {
    pub fn output_dim(self) -> usize {
        match self {
            Task::Classification { num_classes } => num_classes,
            Task::Regression => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionMode {
    Cagpool,
    SiameseConcat,
    Topkpool,
    Sagpool,
    NodeHistogram,
}

impl InteractionMode {
    pub const ALL: [InteractionMode; 5] = [
        InteractionMode::Cagpool,
        InteractionMode::SiameseConcat,
        InteractionMode::Topkpool,
        InteractionMode::Sagpool,
        InteractionMode::NodeHistogram,
    ];

    pub fn pools(self) -> bool {
        matches!(self, Self::Cagpool | Self::Topkpool | Self::Sagpool)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cagpool => "cagpool",
            Self::SiameseConcat => "siamese-concat",
            Self::Topkpool => "topkpool",
            Self::Sagpool => "sagpool",
            Self::NodeHistogram => "node-histogram",
        }
    }
}

fn default_post_pool_layers() -> usize {
    1
}

fn default_bins() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub gcn: GcnConfig,
    #[serde(default)]
    pub k: PoolingRatio,
    #[serde(default = "default_post_pool_layers")]
    pub post_pool_layers: usize,
    pub head_hidden: usize,
    pub task: Task,
    pub mode: InteractionMode,
    #[serde(default)]
    pub coattention: CoAttentionKind,
    /// Sum instead of concatenate the graph vectors, and use the
    /// order-symmetric co-attention; the output is then invariant to
    /// swapping the two graphs.
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub readout: Readout,
}

impl ModelConfig {
    pub fn new(in_dim: usize, hidden_dim: usize, task: Task, mode: InteractionMode) -> Self {
        Self {
            gcn: GcnConfig::new(in_dim, hidden_dim),
            k: PoolingRatio::HALF,
            post_pool_layers: default_post_pool_layers(),
            head_hidden: hidden_dim,
            task,
            mode,
            coattention: CoAttentionKind::Linear,
            symmetric: false,
            histogram_bins: default_bins(),
            readout: Readout::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gcn.validate()?;
        if self.head_hidden == 0 {
            return Err(Error::Config("head_hidden must be positive".into()));
        }
        if let Task::Classification { num_classes: 0 } = self.task {
            return Err(Error::Config("classification needs at least one class".into()));
        }
        if self.mode == InteractionMode::NodeHistogram && self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        Ok(())
    }

    /// Width of the graph representation, `n * F'`.
    pub fn graph_dim(&self) -> usize {
        self.gcn.output_dim()
    }

    pub fn head_input_dim(&self) -> usize {
        let d = self.graph_dim();
        let base = if self.symmetric { d } else { 2 * d };
        match self.mode {
            InteractionMode::NodeHistogram => base + self.histogram_bins,
            _ => base,
        }
    }
}

const ENCODER: &str = "encoder";
const POST: &str = "post";
const COATT: &str = "coatt";
const TOPK_PROJ: &str = "topk.p";
const SAG_THETA: &str = "sag.theta";

/// All weights of a model, keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        GcnParams::init(&config.gcn, &mut rng)?.store_into(ENCODER, &mut store);
        let d = config.graph_dim();
        match config.mode {
            InteractionMode::Cagpool => {
                CoAttentionParams::init(d, config.coattention, &mut rng).store_into(COATT, &mut store)
            }
            InteractionMode::Topkpool => store.insert(TOPK_PROJ, glorot_uniform(1, d, &mut rng)),
            InteractionMode::Sagpool => store.insert(SAG_THETA, glorot_uniform(d, 1, &mut rng)),
            _ => {}
        }
        if config.mode.pools() {
            let post = GcnConfig {
                num_layers: config.post_pool_layers,
                in_dim: d,
                hidden_dim: d,
            };
            if config.post_pool_layers > 0 {
                GcnParams::init(&post, &mut rng)?.store_into(POST, &mut store);
            }
        }
        let (h, o) = (config.head_hidden, config.task.output_dim());
        store.insert("head.w1", glorot_uniform(config.head_input_dim(), h, &mut rng));
        store.insert("head.b1", Tensor::zeros(1, h));
        store.insert("head.w2", glorot_uniform(h, o, &mut rng));
        store.insert("head.b2", Tensor::zeros(1, o));
        Ok(Self { store })
    }

    pub fn encoder(&self, config: &ModelConfig) -> Result<GcnParams> {
        GcnParams::from_store(ENCODER, config.gcn.num_layers, &self.store)
    }

    pub fn coattention(&self, config: &ModelConfig) -> Result<CoAttentionParams> {
        CoAttentionParams::from_store(COATT, config.coattention, &self.store)
    }

    pub fn has_coattention(&self) -> bool {
        self.store.names().any(|n| n.starts_with("coatt."))
    }

    /// Checks every expected tensor exists with the shape `config` implies.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let fresh = Self::init(config, 0)?;
        for (name, t) in fresh.store.iter() {
            let have = self.store.get(name)?;
            if have.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint",
                    detail: format!("{name}: {:?}, expected {:?}", have.shape(), t.shape()),
                });
            }
        }
        if fresh.store.len() != self.store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, config implies {}",
                self.store.len(),
                fresh.store.len()
            )));
        }
        Ok(())
    }
}

/// Model config plus weights, as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.config.validate()?;
        ModelParams {
            store: ck.params.clone(),
        }
        .check_against(&ck.config)?;
        Ok(ck)
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            store: self.params.clone(),
        }
    }
}

/// Handles of one forward pass on a tape.
pub struct TapeForward {
    pub logits: Var,
    pub pooled: Option<(PooledSide, PooledSide)>,
}

struct SideInput {
    x: Var,
    a_hat: Var,
    adjacency: Tensor,
}

fn side_input(tape: &mut Tape, g: &Graph, config: &ModelConfig) -> Result<SideInput> {
    if g.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    if g.feature_dim() != config.gcn.in_dim {
        return Err(Error::ShapeMismatch {
            op: "forward",
            detail: format!(
                "graph has {} feature columns, model expects {}",
                g.feature_dim(),
                config.gcn.in_dim
            ),
        });
    }
    Ok(SideInput {
        x: tape.leaf(g.features().clone())?,
        a_hat: tape.leaf(normalized_adjacency(g)?)?,
        adjacency: g.adjacency(),
    })
}

fn post_pool(tape: &mut Tape, side: &PooledSide, thetas: &[Var], readout: Readout) -> Result<Var> {
    let mut h = side.x;
    if !thetas.is_empty() {
        let a_hat = tape.leaf(normalize_dense(&side.adjacency)?)?;
        for &theta in thetas {
            h = gcn_layer(tape, a_hat, h, theta, Activation::Relu)?;
        }
    }
    global_pool(tape, h, readout)
}

/// Records the forward pass. With `frozen`, pooling modes reuse the given
/// node selection instead of running TopK.
pub fn forward_on_tape(
    tape: &mut Tape,
    bound: &BoundParams,
    pair: &GraphPair,
    config: &ModelConfig,
    frozen: Option<&Selection>,
) -> Result<TapeForward> {
    let a = side_input(tape, &pair.a, config)?;
    let b = side_input(tape, &pair.b, config)?;
    let thetas = GcnParams::bound_vars(ENCODER, config.gcn.num_layers, bound)?;
    let xa = encode_on_tape(tape, a.a_hat, a.x, &thetas)?;
    let xb = encode_on_tape(tape, b.a_hat, b.x, &thetas)?;

    let mut pooled = None;
    let mut extra = None;
    let (ga, gb) = match config.mode {
        InteractionMode::SiameseConcat | InteractionMode::NodeHistogram => {
            if config.mode == InteractionMode::NodeHistogram {
                let (va, vb) = (tape.value(xa), tape.value(xb));
                let mut hist = pairwise_node_interaction(va, vb, config.histogram_bins)?;
                let total = (va.rows() * vb.rows()) as f64;
                hist.iter_mut().for_each(|h| *h /= total);
                extra = Some(tape.leaf(Tensor::row_vector(&hist))?);
            }
            (global_pool(tape, xa, config.readout)?, global_pool(tape, xb, config.readout)?)
        }
        mode => {
            let k = config.k;
            let (sa, sb) = match mode {
                InteractionMode::Cagpool => {
                    let co = CoAttentionVars::from_bound(COATT, config.coattention, bound)?;
                    cagpool(tape, xa, &a.adjacency, xb, &b.adjacency, &co, k, config.symmetric, config.readout, frozen)?
                }
                InteractionMode::Topkpool => {
                    let p = bound.get(TOPK_PROJ)?;
                    let za = topkpool_scores(tape, xa, p)?;
                    let zb = topkpool_scores(tape, xb, p)?;
                    (
                        pool_side(tape, xa, &a.adjacency, za, k, frozen.map(|s| s.idx_a.as_slice()))?,
                        pool_side(tape, xb, &b.adjacency, zb, k, frozen.map(|s| s.idx_b.as_slice()))?,
                    )
                }
                _ => {
                    let theta = bound.get(SAG_THETA)?;
                    let za = sagpool_scores(tape, a.a_hat, xa, theta)?;
                    let zb = sagpool_scores(tape, b.a_hat, xb, theta)?;
                    (
                        pool_side(tape, xa, &a.adjacency, za, k, frozen.map(|s| s.idx_a.as_slice()))?,
                        pool_side(tape, xb, &b.adjacency, zb, k, frozen.map(|s| s.idx_b.as_slice()))?,
                    )
                }
            };
            let post = GcnParams::bound_vars(POST, config.post_pool_layers, bound)?;
            let ga = post_pool(tape, &sa, &post, config.readout)?;
            let gb = post_pool(tape, &sb, &post, config.readout)?;
            pooled = Some((sa, sb));
            (ga, gb)
        }
    };

    let mut head_in = if config.symmetric {
        tape.add(ga, gb)?
    } else {
        tape.concat_cols(&[ga, gb])?
    };
    if let Some(h) = extra {
        head_in = tape.concat_cols(&[head_in, h])?;
    }
    let w1 = bound.get("head.w1")?;
    let b1 = bound.get("head.b1")?;
    let w2 = bound.get("head.w2")?;
    let b2 = bound.get("head.b2")?;
    let h = tape.matmul(head_in, w1)?;
    let h = tape.add(h, b1)?;
    let h = tape.relu(h)?;
    let out = tape.matmul(h, w2)?;
    let logits = tape.add(out, b2)?;
    Ok(TapeForward { logits, pooled })
}

/// Result of [`forward`].
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    /// Sigmoid of the logits: per-class probabilities, or the predicted
    /// similarity.
    pub output: Vec<f64>,
    pub pooled: Option<PooledPair>,
}

pub fn forward(pair: &GraphPair, params: &ModelParams, config: &ModelConfig) -> Result<ForwardOutput> {
    forward_with(pair, params, config, None)
}

pub fn forward_with(
    pair: &GraphPair,
    params: &ModelParams,
    config: &ModelConfig,
    frozen: Option<&Selection>,
) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let bound = params.store.bind(&mut tape)?;
    let f = forward_on_tape(&mut tape, &bound, pair, config, frozen)?;
    let logits = tape.value(f.logits).data().to_vec();
    Ok(ForwardOutput {
        output: logits.iter().map(|&l| sigmoid(l)).collect(),
        logits,
        pooled: f.pooled.map(|(a, b)| PooledPair::from_sides(&tape, &a, &b)),
    })
}

fn check_target(target: &Target, task: Task) -> Result<()> {
    target.validate()?;
    match (target, task) {
        (Target::Classes(c), Task::Classification { num_classes }) if c.len() == num_classes => Ok(()),
        (Target::Similarity(_), Task::Regression) => Ok(()),
        _ => Err(Error::InvalidTarget(format!("target {target:?} does not fit task {task:?}"))),
    }
}

/// Split of a class target into 0/1 values and the observed mask.
pub fn class_mask(classes: &[f64]) -> (Vec<f64>, Vec<bool>) {
    classes
        .iter()
        .map(|&c| if c < 0.0 { (0.0, false) } else { (c, true) })
        .unzip()
}

/// Records the loss of `logits` against `target`: masked mean binary
/// cross-entropy for classification, squared error of the sigmoid output
/// for regression.
pub fn loss_on_tape(tape: &mut Tape, logits: Var, target: &Target, task: Task) -> Result<Var> {
    check_target(target, task)?;
    match target {
        Target::Classes(c) => {
            let (t, mask) = class_mask(c);
            tape.bce_with_logits(logits, &t, &mask)
        }
        Target::Similarity(s) => {
            let pred = tape.sigmoid(logits)?;
            let t = tape.leaf(Tensor::scalar(s.min(MAX_REGRESSION_TARGET)))?;
            let diff = tape.sub(pred, t)?;
            let sq = tape.elementwise_mul(diff, diff)?;
            tape.sum(sq)
        }
    }
}

/// Loss from model outputs (probabilities / predicted similarity).
pub fn loss(output: &[f64], target: &Target, task: Task) -> Result<f64> {
    check_target(target, task)?;
    if output.len() != task.output_dim() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            detail: format!("{} outputs for task {task:?}", output.len()),
        });
    }
    match target {
        Target::Classes(c) => {
            let (t, mask) = class_mask(c);
            let mut total = 0.0;
            let mut n = 0;
            for ((&p, &y), &m) in output.iter().zip(&t).zip(&mask) {
                if m {
                    let p = p.clamp(1e-15, 1.0 - 1e-15);
                    total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    n += 1;
                }
            }
            Ok(if n == 0 { 0.0 } else { total / n as f64 })
        }
        Target::Similarity(s) => Ok((output[0] - s).powi(2)),
    }
}

/// Loss and per-parameter gradients for one pair.
pub fn pair_gradients(
    pair: &GraphPair,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(f64, ParamStore)> {
    let mut tape = Tape::new();
    let bound = params.store.bind(&mut tape)?;
    let f = forward_on_tape(&mut tape, &bound, pair, config, None)?;
    let l = loss_on_tape(&mut tape, f.logits, &pair.target, config.task)?;
    let mut grads = tape.backward(l)?;
    let mut out = ParamStore::new();
    for (name, v) in bound.iter() {
        out.insert(name, grads.take(v));
    }
    Ok((tape.value(l).item(), out))
}
