//! Symmetric-normalized graph convolution with per-layer concatenation.
//!
//! Each layer computes `relu(D^-1/2 (A + I) D^-1/2 X Theta)` and the
//! encoder output is the column-wise concatenation of every layer's output.
//! The same weights encode both graphs of a pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::{glorot_uniform, BoundParams, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub num_layers: usize,
    pub in_dim: usize,
    pub hidden_dim: usize,
}

impl GcnConfig {
    /// Hidden widths searched for `hidden_dim`.
    pub const HIDDEN_GRID: [usize; 4] = [32, 64, 128, 256];

    pub fn new(in_dim: usize, hidden_dim: usize) -> Self {
        Self {
            num_layers: 3,
            in_dim,
            hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.in_dim == 0 {
            return Err(Error::Config(format!(
                "GCN needs at least one layer and non-zero widths, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Width of the concatenated output, `n * F'`.
    pub fn output_dim(&self) -> usize {
        self.num_layers * self.hidden_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Layer weights `Theta(0): F x F'` and `Theta(l): F' x F'` for `l >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    pub thetas: Vec<Tensor>,
}

impl GcnParams {
    pub fn init<R: Rng>(config: &GcnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let thetas = (0..config.num_layers)
            .map(|l| {
                let fan_in = if l == 0 { config.in_dim } else { config.hidden_dim };
                glorot_uniform(fan_in, config.hidden_dim, rng)
            })
            .collect();
        Ok(Self { thetas })
    }

    pub fn param_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.theta{layer}")
    }

    pub fn store_into(&self, prefix: &str, store: &mut ParamStore) {
        for (l, t) in self.thetas.iter().enumerate() {
            store.insert(Self::param_name(prefix, l), t.clone());
        }
    }

    pub fn from_store(prefix: &str, layers: usize, store: &ParamStore) -> Result<Self> {
        let thetas = (0..layers)
            .map(|l| store.get(&Self::param_name(prefix, l)).cloned())
            .collect::<Result<_>>()?;
        Ok(Self { thetas })
    }

    pub fn bound_vars(prefix: &str, layers: usize, bound: &BoundParams) -> Result<Vec<Var>> {
        (0..layers)
            .map(|l| bound.get(&Self::param_name(prefix, l)))
            .collect()
    }
}

/// `D^-1/2 (A + I) D^-1/2` from a raw, zero-diagonal 0/1 adjacency.
pub fn normalize_dense(adjacency: &Tensor) -> Result<Tensor> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "normalized_adjacency",
            detail: format!("{}x{} adjacency", n, adjacency.cols()),
        });
    }
    let mut a = adjacency.clone();
    for i in 0..n {
        a.set(i, i, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    Ok(a)
}

pub fn normalized_adjacency(g: &Graph) -> Result<Tensor> {
    if g.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    normalize_dense(&g.adjacency())
}

/// One convolution, `act(A_hat X Theta)`.
pub fn gcn_layer(tape: &mut Tape, a_hat: Var, x: Var, theta: Var, activation: Activation) -> Result<Var> {
    let xw = tape.matmul(x, theta)?;
    let h = tape.matmul(a_hat, xw)?;
    match activation {
        Activation::Relu => tape.relu(h),
        Activation::Identity => Ok(h),
    }
}

/// Runs the layer stack and concatenates all layer outputs (`N x nF'`).
pub fn encode_on_tape(tape: &mut Tape, a_hat: Var, x: Var, thetas: &[Var]) -> Result<Var> {
    let mut outputs = Vec::with_capacity(thetas.len());
    let mut h = x;
    for &theta in thetas {
        h = gcn_layer(tape, a_hat, h, theta, Activation::Relu)?;
        outputs.push(h);
    }
    tape.concat_cols(&outputs)
}

/// Value-level encoding of a single graph.
pub fn encode(g: &Graph, params: &GcnParams) -> Result<Tensor> {
    let first = params.thetas.first().ok_or_else(|| Error::Config("no GCN layers".into()))?;
    if first.rows() != g.feature_dim() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            detail: format!(
                "graph has {} feature columns, first layer expects {}",
                g.feature_dim(),
                first.rows()
            ),
        });
    }
    let mut tape = Tape::new();
    let a_hat = tape.leaf(normalized_adjacency(g)?)?;
    let x = tape.leaf(g.features().clone())?;
    let thetas = params
        .thetas
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = encode_on_tape(&mut tape, a_hat, x, &thetas)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_random_graph, permute, permute_rows, random_permutation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_edge_normalization() {
        let g = Graph::unlabeled(2, &[(0, 1)]).unwrap();
        assert_eq!(normalized_adjacency(&g).unwrap().data(), &[0.5; 4]);
        let g = Graph::unlabeled(1, &[]).unwrap();
        assert_eq!(normalized_adjacency(&g).unwrap().data(), &[1.0]);
    }

    #[test]
    fn star_normalization() {
        let g = Graph::unlabeled(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let a = normalized_adjacency(&g).unwrap();
        assert!((a.get(0, 0) - 0.25).abs() < 1e-15);
        for i in 1..4 {
            assert!((a.get(0, i) - 1.0 / 8f64.sqrt()).abs() < 1e-15);
            assert!((a.get(i, 0) - 1.0 / 8f64.sqrt()).abs() < 1e-15);
            assert!((a.get(i, i) - 0.5).abs() < 1e-15);
        }
        assert!(normalized_adjacency(&Graph::unlabeled(0, &[]).unwrap()).is_err());
    }

    #[test]
    fn normalization_matches_entry_formula() {
        for seed in 0..20 {
            let g = gen_random_graph(9, 0.35, 2, seed).unwrap();
            let a = normalized_adjacency(&g).unwrap();
            let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64 + 1.0).collect();
            for i in 0..9 {
                let mut row_sum = 0.0;
                for j in 0..9 {
                    let raw = if i == j || g.has_edge(i, j) { 1.0 } else { 0.0 };
                    let want = raw / (deg[i] * deg[j]).sqrt();
                    assert!((a.get(i, j) - want).abs() < 1e-15);
                    assert_eq!(a.get(i, j), a.get(j, i));
                    row_sum += a.get(i, j);
                }
                assert!(row_sum <= deg[i].sqrt() + 1e-12);
            }
        }
    }

    fn run_layer(a: Tensor, x: Tensor, theta: Tensor, act: Activation) -> Tensor {
        let mut tape = Tape::new();
        let (a, x, th) = (tape.leaf(a).unwrap(), tape.leaf(x).unwrap(), tape.leaf(theta).unwrap());
        let out = gcn_layer(&mut tape, a, x, th, act).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn layer_examples() {
        let g = Graph::unlabeled(2, &[(0, 1)]).unwrap();
        let a = normalized_adjacency(&g).unwrap();
        let out = run_layer(a.clone(), Tensor::identity(2), Tensor::identity(2), Activation::Identity);
        assert_eq!(out.data(), &[0.5; 4]);
        let zero = run_layer(a, Tensor::identity(2), Tensor::zeros(2, 3), Activation::Relu);
        assert_eq!(zero, Tensor::zeros(2, 3));

        // isolated node: a dense layer
        let x = Tensor::from_rows(&[[1.0, -2.0]]).unwrap();
        let th = Tensor::from_rows(&[[1.0, 0.5], [1.0, 1.0]]).unwrap();
        let out = run_layer(Tensor::identity(1), x, th, Activation::Relu);
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn output_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GcnConfig { num_layers: 3, in_dim: 3, hidden_dim: 4 };
        let params = GcnParams::init(&cfg, &mut rng).unwrap();
        let g = gen_random_graph(6, 0.5, 3, 2).unwrap();
        let x = encode(&g, &params).unwrap();
        assert_eq!(x.shape(), (6, 12));

        // first block equals a single layer
        let mut tape = Tape::new();
        let a = tape.leaf(normalized_adjacency(&g).unwrap()).unwrap();
        let f = tape.leaf(g.features().clone()).unwrap();
        let t0 = tape.leaf(params.thetas[0].clone()).unwrap();
        let l1 = gcn_layer(&mut tape, a, f, t0, Activation::Relu).unwrap();
        assert_eq!(&x.slice_cols(0, 4).unwrap(), tape.value(l1));

        let wrong = gen_random_graph(6, 0.5, 2, 2).unwrap();
        assert!(matches!(encode(&wrong, &params), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = GcnConfig { num_layers: 3, in_dim: 4, hidden_dim: 8 };
        let params = GcnParams::init(&cfg, &mut rng).unwrap();
        for seed in 0..25 {
            let g = gen_random_graph(10, 0.3, 4, seed).unwrap();
            let p = random_permutation(10, &mut rng);
            let direct = permute_rows(&encode(&g, &params).unwrap(), &p).unwrap();
            let permuted = encode(&permute(&g, &p).unwrap(), &params).unwrap();
            assert!(direct.max_abs_diff(&permuted) <= 1e-12);
        }
    }

    #[test]
    fn rows_depend_only_on_n_hop_neighbourhood() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = GcnConfig { num_layers: 2, in_dim: 3, hidden_dim: 5 };
        let params = GcnParams::init(&cfg, &mut rng).unwrap();
        // path 0-1-2-3-4-5: nodes 3.. are farther than 2 hops from node 0
        let g = Graph::with_labels(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], vec![0, 1, 2, 0, 1, 2], 3)
            .unwrap();
        let full = encode(&g, &params).unwrap();
        let far: Vec<usize> = g
            .hop_distances(0)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 2)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(far, vec![3, 4, 5]);
        let cut = encode(&g.with_zeroed_features(&far), &params).unwrap();
        assert_eq!(full.row(0), cut.row(0));
    }
}
