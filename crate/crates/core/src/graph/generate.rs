use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{permute, Graph, GraphPair, Permutation, Target};
use crate::error::{Error, Result};

/// Erdős–Rényi graph with labels drawn uniformly from `0..label_alphabet`
/// and one-hot features.
pub fn gen_random_graph(n: usize, edge_prob: f64, label_alphabet: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_graph_with(&mut rng, n, edge_prob, label_alphabet)
}

pub(crate) fn random_graph_with<R: Rng>(
    rng: &mut R,
    n: usize,
    edge_prob: f64,
    label_alphabet: usize,
) -> Result<Graph> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidProbability(edge_prob));
    }
    if n == 0 {
        return Err(Error::InvalidGraph("random graph needs at least one node".into()));
    }
    if label_alphabet == 0 {
        return Err(Error::Config("label alphabet must be non-empty".into()));
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < edge_prob {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| rng.gen_range(0..label_alphabet)).collect();
    Graph::with_labels(n, &edges, labels, label_alphabet)
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Permutation {
    let mut mapping: Vec<usize> = (0..n).collect();
    mapping.shuffle(rng);
    Permutation::new(mapping).expect("shuffle is a bijection")
}

/// Labels `0..4` are background, `4` marks triangle-block nodes and `5`
/// marks cycle-block nodes.
pub const MOTIF_ALPHABET: usize = 6;
const BACKGROUND_LABELS: usize = 4;
const TRIANGLE_LABEL: usize = 4;
const CYCLE_LABEL: usize = 5;
const BACKBONE_NODES: std::ops::RangeInclusive<usize> = 8..=14;

/// Which blocks of a motif pair were closed into motifs. Every graph
/// carries a three-node block (triangle `M1`, or an open path decoy) and
/// a four-node block (4-cycle `M2`, or an open path decoy).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MotifPlan {
    pub a_m1: bool,
    pub a_m2: bool,
    pub b_m1: bool,
    pub b_m2: bool,
}

impl MotifPlan {
    pub fn label(&self) -> bool {
        self.a_m1 && self.b_m2
    }
}

fn motif_graph<R: Rng>(rng: &mut R, m1: bool, m2: bool) -> Result<Graph> {
    let backbone = rng.gen_range(BACKBONE_NODES);
    let mut edges = Vec::new();
    let mut labels: Vec<usize> = (0..backbone)
        .map(|_| rng.gen_range(0..BACKGROUND_LABELS))
        .collect();
    for i in 1..backbone {
        edges.push((rng.gen_range(0..i), i));
    }

    let t = labels.len();
    labels.extend([TRIANGLE_LABEL; 3]);
    edges.extend([(t, t + 1), (t + 1, t + 2)]);
    if m1 {
        edges.push((t, t + 2));
    }
    edges.push((rng.gen_range(0..backbone), t));

    let c = labels.len();
    labels.extend([CYCLE_LABEL; 4]);
    edges.extend([(c, c + 1), (c + 1, c + 2), (c + 2, c + 3)]);
    if m2 {
        edges.push((c, c + 3));
    }
    edges.push((rng.gen_range(0..backbone), c));

    let g = Graph::with_labels(labels.len(), &edges, labels, MOTIF_ALPHABET)?;
    let p = random_permutation(g.num_nodes(), rng);
    permute(&g, &p)
}

/// Pairs labeled positive iff graph A contains the triangle `M1` and graph
/// B contains the 4-cycle `M2`. Each motif is closed independently with
/// probability `1/sqrt(2)`, so positives make up half the pairs in
/// expectation; the distractor blocks (`M2` in A, `M1` in B) are closed
/// with probability one half.
pub fn gen_motif_pairs_with_plans(count: usize, seed: u64) -> Result<Vec<(GraphPair, MotifPlan)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_motif = std::f64::consts::FRAC_1_SQRT_2;
    (0..count)
        .map(|_| {
            let plan = MotifPlan {
                a_m1: rng.gen_bool(p_motif),
                a_m2: rng.gen_bool(0.5),
                b_m1: rng.gen_bool(0.5),
                b_m2: rng.gen_bool(p_motif),
            };
            let a = motif_graph(&mut rng, plan.a_m1, plan.a_m2)?;
            let b = motif_graph(&mut rng, plan.b_m1, plan.b_m2)?;
            let target = Target::Classes(vec![if plan.label() { 1.0 } else { 0.0 }]);
            Ok((GraphPair::new(a, b, target)?, plan))
        })
        .collect()
}

pub fn gen_motif_pair_dataset(count: usize, seed: u64) -> Result<Vec<GraphPair>> {
    Ok(gen_motif_pairs_with_plans(count, seed)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}
