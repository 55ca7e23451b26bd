//! Runtime comparison of graph-level and node-level interaction.
//!
//! Both paths get the same random node embeddings. The graph-level path is
//! co-attention pooling without the encoder; the node-level path compares
//! every node pair and histograms the similarities. Timing is
//! single-threaded. Each rep times one call of each path at every size in
//! turn, so a change in machine load mid-run hits all sizes alike. Warmup
//! reps are discarded, and the median of the rest is reported.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::{
    graph_level_interaction, pairwise_node_interaction, CoAttentionKind, CoAttentionParams, PoolingRatio,
};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub nodes: Vec<usize>,
    pub dim: usize,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    pub bins: usize,
    pub k: PoolingRatio,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            nodes: vec![50, 100, 150, 200],
            dim: 64,
            reps: 1000,
            warmup: 50,
            seed: 0,
            bins: 16,
            k: PoolingRatio::HALF,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeTiming {
    pub nodes: usize,
    pub node_level_median_s: f64,
    pub graph_level_median_s: f64,
    /// `1 - t_graph / t_node`.
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub sizes: Vec<SizeTiming>,
    /// Least-squares slope of `log t` against `log N`.
    pub node_level_exponent: f64,
    pub graph_level_exponent: f64,
}

impl BenchReport {
    pub fn at(&self, nodes: usize) -> Option<&SizeTiming> {
        self.sizes.iter().find(|s| s.nodes == nodes)
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Config("slope fit needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Config("slope fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("slope fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        (xs[m - 1] + xs[m]) / 2.0
    } else {
        xs[m]
    }
}

fn time_once(f: impl FnOnce()) -> f64 {
    let t = Instant::now();
    f();
    t.elapsed().as_secs_f64()
}

fn random_embeddings<R: Rng>(rng: &mut R, n: usize, d: usize) -> Tensor {
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(n, d, data).expect("shape")
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.nodes.len() < 2 || config.reps == 0 || config.dim == 0 {
        return Err(Error::Config(
            "benchmark needs at least two node counts, reps > 0 and dim > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = CoAttentionParams::init(config.dim, CoAttentionKind::Linear, &mut rng);
    let mut inputs = Vec::new();
    for &n in &config.nodes {
        let xa = random_embeddings(&mut rng, n, config.dim);
        let xb = random_embeddings(&mut rng, n, config.dim);
        // both paths must succeed before timing
        graph_level_interaction(&xa, &xb, &params, config.k)?;
        pairwise_node_interaction(&xa, &xb, config.bins)?;
        inputs.push((xa, xb));
    }
    let mut node_samples = vec![Vec::with_capacity(config.reps); inputs.len()];
    let mut graph_samples = node_samples.clone();
    for rep in 0..config.warmup + config.reps {
        for (i, (xa, xb)) in inputs.iter().enumerate() {
            let node = time_once(|| {
                black_box(pairwise_node_interaction(black_box(xa), black_box(xb), config.bins).ok());
            });
            let graph = time_once(|| {
                black_box(graph_level_interaction(black_box(xa), black_box(xb), &params, config.k).ok());
            });
            if rep >= config.warmup {
                node_samples[i].push(node);
                graph_samples[i].push(graph);
            }
        }
    }
    let sizes: Vec<SizeTiming> = config
        .nodes
        .iter()
        .zip(node_samples.into_iter().zip(graph_samples))
        .map(|(&n, (node, graph))| {
            let (node, graph) = (median(node), median(graph));
            SizeTiming {
                nodes: n,
                node_level_median_s: node,
                graph_level_median_s: graph,
                speedup: 1.0 - graph / node,
            }
        })
        .collect();
    let ns: Vec<f64> = sizes.iter().map(|s| s.nodes as f64).collect();
    let node_t: Vec<f64> = sizes.iter().map(|s| s.node_level_median_s).collect();
    let graph_t: Vec<f64> = sizes.iter().map(|s| s.graph_level_median_s).collect();
    Ok(BenchReport {
        config: config.clone(),
        node_level_exponent: fit_loglog_slope(&ns, &node_t)?,
        graph_level_exponent: fit_loglog_slope(&ns, &graph_t)?,
        sizes,
    })
}
