//! How the two interaction paths scale with the embedding width.
//!
//! The node-level path does `O(N_A N_B D)` work, so doubling `D` roughly
//! doubles it. The graph-level path does `O((N_A + N_B) D)` work plus the
//! `2D x 2D` co-attention transform; at `N = 200` the linear part dominates.
//!
//! The two widths are timed in alternating rounds and the median per-round
//! ratio is reported, so slow drift in machine load cancels out.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cagpool::pooling::{graph_level_interaction, pairwise_node_interaction, CoAttentionKind, CoAttentionParams, PoolingRatio};
use cagpool::tensor::Tensor;

const N: usize = 200;
const ROUNDS: usize = 41;
const CALLS: usize = 10;

struct Case {
    xa: Tensor,
    xb: Tensor,
    params: CoAttentionParams,
}

fn case(dim: usize, rng: &mut ChaCha8Rng) -> Case {
    let mut x = || Tensor::from_vec(N, dim, (0..N * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let (xa, xb) = (x(), x());
    Case { xa, xb, params: CoAttentionParams::init(dim, CoAttentionKind::Linear, rng) }
}

fn batch(f: &dyn Fn()) -> f64 {
    let t = Instant::now();
    for _ in 0..CALLS {
        f();
    }
    t.elapsed().as_secs_f64()
}

fn median_ratio(narrow: &dyn Fn(), wide: &dyn Fn()) -> f64 {
    batch(narrow);
    batch(wide);
    let mut ratios: Vec<f64> = (0..ROUNDS).map(|_| {
        let a = batch(narrow);
        batch(wide) / a
    }).collect();
    ratios.sort_by(f64::total_cmp);
    ratios[ROUNDS / 2]
}

#[test]
fn doubling_the_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (narrow, wide) = (case(32, &mut rng), case(64, &mut rng));
    let node = |c: &Case| black_box(pairwise_node_interaction(black_box(&c.xa), black_box(&c.xb), 16).ok());
    let graph =
        |c: &Case| black_box(graph_level_interaction(black_box(&c.xa), black_box(&c.xb), &c.params, PoolingRatio::HALF).ok());
    let node_ratio = median_ratio(&|| drop(node(&narrow)), &|| drop(node(&wide)));
    let graph_ratio = median_ratio(&|| drop(graph(&narrow)), &|| drop(graph(&wide)));
    eprintln!("D 32 -> 64 at N = {N}: node-level x{node_ratio:.2}, graph-level x{graph_ratio:.2}");
    assert!((1.5..=2.5).contains(&node_ratio), "node-level ratio {node_ratio}");
    assert!((1.5..=2.5).contains(&graph_ratio), "graph-level ratio {graph_ratio}");
}
