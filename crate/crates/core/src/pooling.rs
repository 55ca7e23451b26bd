//! Co-attention graph pooling and the node-scoring baselines.
//!
//! For a pair of encoded graphs `(X_A, A_A)`, `(X_B, A_B)`:
//!
//! 1. each side is mean-pooled to a graph vector `x = mean_r X_r`;
//! 2. the co-attention vector is `alpha = W [x_A || x_B] + b`, split into
//!    `alpha_A` (first half) and `alpha_B` (second half);
//! 3. node scores are `Z = X alpha / ||alpha||` and the top `ceil(kN)` nodes
//!    are kept;
//! 4. the pooled graph is `X' = X[idx] * Z[idx]`, `A' = A[idx, idx]`.
//!
//! Because `alpha_A` mixes both graph vectors, the nodes kept from A depend
//! on its partner. The baselines here score nodes from one graph alone:
//! a learned projection (TopKPool) or a one-output convolution (SAGPool).
//! [`pairwise_node_interaction`] is the node-level comparison used as the
//! `O(|V_A| |V_B|)` reference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{glorot_uniform, BoundParams, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Norms of the co-attention vector at or below this are rejected.
pub const ALPHA_EPS: f64 = 1e-12;

/// Fraction of nodes kept, `0 < k <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PoolingRatio(f64);

impl PoolingRatio {
    pub const HALF: PoolingRatio = PoolingRatio(0.5);

    pub fn new(k: f64) -> Result<Self> {
        if k > 0.0 && k <= 1.0 {
            Ok(Self(k))
        } else {
            Err(Error::Config(format!("pooling ratio {k} outside (0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `ceil(k * n)`, clamped to `[1, n]` for `n >= 1`. A relative slack of
    /// 1e-9 keeps products such as `0.1 * 30` from rounding up.
    pub fn keep(self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let x = self.0 * n as f64;
        let c = (x - x * 1e-9).ceil() as usize;
        c.clamp(1, n)
    }
}

impl TryFrom<f64> for PoolingRatio {
    type Error = Error;
    fn try_from(k: f64) -> Result<Self> {
        Self::new(k)
    }
}

impl From<PoolingRatio> for f64 {
    fn from(k: PoolingRatio) -> f64 {
        k.0
    }
}

impl Default for PoolingRatio {
    fn default() -> Self {
        Self::HALF
    }
}

/// How `alpha` is computed from `[x_A || x_B]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoAttentionKind {
    /// `W [x_A || x_B] + b`.
    #[default]
    Linear,
    /// One hidden relu layer of width `2nF'` before the output layer.
    Mlp,
}

/// Co-attention weights for graph vectors of width `dim` (= `nF'`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoAttentionParams {
    pub kind: CoAttentionKind,
    /// `2dim x 2dim`.
    pub w: Tensor,
    /// `1 x 2dim`.
    pub b: Tensor,
    /// Output layer of the MLP variant.
    pub w2: Option<Tensor>,
    pub b2: Option<Tensor>,
}

impl CoAttentionParams {
    pub fn init<R: Rng>(dim: usize, kind: CoAttentionKind, rng: &mut R) -> Self {
        let w = glorot_uniform(2 * dim, 2 * dim, rng);
        let b = Tensor::zeros(1, 2 * dim);
        let (w2, b2) = match kind {
            CoAttentionKind::Linear => (None, None),
            CoAttentionKind::Mlp => (
                Some(glorot_uniform(2 * dim, 2 * dim, rng)),
                Some(Tensor::zeros(1, 2 * dim)),
            ),
        };
        Self { kind, w, b, w2, b2 }
    }

    /// Plain linear co-attention with the given weights.
    pub fn linear(w: Tensor, b: Tensor) -> Result<Self> {
        if w.rows() != w.cols() || w.rows() % 2 != 0 || b.shape() != (1, w.rows()) {
            return Err(Error::ShapeMismatch {
                op: "coattention",
                detail: format!("W {:?}, b {:?}", w.shape(), b.shape()),
            });
        }
        Ok(Self {
            kind: CoAttentionKind::Linear,
            w,
            b,
            w2: None,
            b2: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.rows() / 2
    }

    pub fn store_into(&self, prefix: &str, store: &mut ParamStore) {
        store.insert(format!("{prefix}.w"), self.w.clone());
        store.insert(format!("{prefix}.b"), self.b.clone());
        if let (Some(w2), Some(b2)) = (&self.w2, &self.b2) {
            store.insert(format!("{prefix}.w2"), w2.clone());
            store.insert(format!("{prefix}.b2"), b2.clone());
        }
    }

    pub fn from_store(prefix: &str, kind: CoAttentionKind, store: &ParamStore) -> Result<Self> {
        let w = store.get(&format!("{prefix}.w"))?.clone();
        let b = store.get(&format!("{prefix}.b"))?.clone();
        let (w2, b2) = match kind {
            CoAttentionKind::Linear => (None, None),
            CoAttentionKind::Mlp => (
                Some(store.get(&format!("{prefix}.w2"))?.clone()),
                Some(store.get(&format!("{prefix}.b2"))?.clone()),
            ),
        };
        Ok(Self { kind, w, b, w2, b2 })
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<CoAttentionVars> {
        Ok(CoAttentionVars {
            w: tape.leaf(self.w.clone())?,
            b: tape.leaf(self.b.clone())?,
            out: match (&self.w2, &self.b2) {
                (Some(w2), Some(b2)) => Some((tape.leaf(w2.clone())?, tape.leaf(b2.clone())?)),
                _ => None,
            },
        })
    }
}

/// Tape handles of [`CoAttentionParams`].
#[derive(Clone, Copy, Debug)]
pub struct CoAttentionVars {
    pub w: Var,
    pub b: Var,
    pub out: Option<(Var, Var)>,
}

impl CoAttentionVars {
    pub fn from_bound(prefix: &str, kind: CoAttentionKind, bound: &BoundParams) -> Result<Self> {
        Ok(Self {
            w: bound.get(&format!("{prefix}.w"))?,
            b: bound.get(&format!("{prefix}.b"))?,
            out: match kind {
                CoAttentionKind::Linear => None,
                CoAttentionKind::Mlp => Some((
                    bound.get(&format!("{prefix}.w2"))?,
                    bound.get(&format!("{prefix}.b2"))?,
                )),
            },
        })
    }
}

/// Mean over nodes, `1 x D`.
pub fn global_mean_pool(tape: &mut Tape, xcat: Var) -> Result<Var> {
    tape.concat_rows_mean(xcat)
}

/// Global graph pooling used for the co-attention input and the final
/// graph vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    #[default]
    Mean,
    /// Sum over nodes; keeps the node count visible to later layers.
    Sum,
}

pub fn global_pool(tape: &mut Tape, xcat: Var, readout: Readout) -> Result<Var> {
    let mean = tape.concat_rows_mean(xcat)?;
    match readout {
        Readout::Mean => Ok(mean),
        Readout::Sum => {
            let n = tape.value(xcat).rows() as f64;
            tape.scale(mean, n)
        }
    }
}

fn affine_t(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    // row form of W x + b
    let wt = tape.transpose(w)?;
    let h = tape.matmul(x, wt)?;
    tape.add(h, b)
}

fn coattention_full(tape: &mut Tape, first: Var, second: Var, p: &CoAttentionVars) -> Result<Var> {
    let (d1, d2) = (tape.value(first).shape(), tape.value(second).shape());
    let side = tape.value(p.w).rows();
    if d1.0 != 1 || d2.0 != 1 || d1.1 + d2.1 != side || d1.1 != d2.1 {
        return Err(Error::ShapeMismatch {
            op: "coattention_vector",
            detail: format!("graph vectors {d1:?}, {d2:?} for W of side {side}"),
        });
    }
    let cat = tape.concat_cols(&[first, second])?;
    let h = affine_t(tape, cat, p.w, p.b)?;
    match p.out {
        None => Ok(h),
        Some((w2, b2)) => {
            let h = tape.relu(h)?;
            affine_t(tape, h, w2, b2)
        }
    }
}

/// `(alpha_A, alpha_B)` from two `1 x D` graph vectors.
pub fn coattention_vector(tape: &mut Tape, x_a: Var, x_b: Var, p: &CoAttentionVars) -> Result<(Var, Var)> {
    let alpha = coattention_full(tape, x_a, x_b, p)?;
    let d = tape.value(x_a).cols();
    Ok((tape.slice_cols(alpha, 0, d)?, tape.slice_cols(alpha, d, 2 * d)?))
}

/// Order-symmetric variant: each side takes the first half of
/// `W [x_self || x_other] + b`, so swapping the graphs swaps the outputs.
pub fn coattention_vector_symmetric(
    tape: &mut Tape,
    x_a: Var,
    x_b: Var,
    p: &CoAttentionVars,
) -> Result<(Var, Var)> {
    let d = tape.value(x_a).cols();
    let aa = coattention_full(tape, x_a, x_b, p)?;
    let ab = coattention_full(tape, x_b, x_a, p)?;
    Ok((tape.slice_cols(aa, 0, d)?, tape.slice_cols(ab, 0, d)?))
}

/// `Z = X alpha / ||alpha||` as an `N x 1` column.
pub fn node_scores(tape: &mut Tape, xcat: Var, alpha: Var) -> Result<Var> {
    let norm = tape.l2_norm(alpha)?;
    let n = tape.value(norm).item();
    if n <= ALPHA_EPS {
        return Err(Error::DegenerateCoAttention { norm: n });
    }
    let (xc, ac) = (tape.value(xcat).cols(), tape.value(alpha).shape());
    if ac != (1, xc) {
        return Err(Error::ShapeMismatch {
            op: "node_scores",
            detail: format!("X has {xc} columns, alpha is {ac:?}"),
        });
    }
    let at = tape.transpose(alpha)?;
    let raw = tape.matmul(xcat, at)?;
    tape.scalar_div(raw, norm)
}

/// Indices of the `ceil(kN)` highest scores, in descending score order with
/// ties broken by ascending index.
pub fn topk_select(z: &[f64], k: PoolingRatio) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&i, &j| z[j].total_cmp(&z[i]).then(i.cmp(&j)));
    idx.truncate(k.keep(z.len()));
    idx
}

/// Induced sub-matrix `A[idx, idx]`.
pub fn induced_adjacency(adjacency: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let n = adjacency.rows();
    let m = idx.len();
    let mut out = Tensor::zeros(m, m);
    for (r, &i) in idx.iter().enumerate() {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        for (c, &j) in idx.iter().enumerate() {
            out.set(r, c, adjacency.get(i, j));
        }
    }
    Ok(out)
}

fn check_unique(idx: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in idx {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if seen[i] {
            return Err(Error::Config(format!("index {i} selected twice")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `X' = X[idx] * Z[idx]` (scores broadcast over columns) and the induced
/// raw adjacency `A' = A[idx, idx]`.
pub fn extract_subgraph(
    tape: &mut Tape,
    xcat: Var,
    adjacency: &Tensor,
    z: Var,
    idx: &[usize],
) -> Result<(Var, Tensor)> {
    check_unique(idx, tape.value(xcat).rows())?;
    let xs = tape.gather_rows(xcat, idx)?;
    let zs = tape.gather_rows(z, idx)?;
    let x = tape.elementwise_mul(xs, zs)?;
    Ok((x, induced_adjacency(adjacency, idx)?))
}

/// One side of a pooled pair, as tape handles.
#[derive(Clone, Debug)]
pub struct PooledSide {
    pub z: Var,
    pub idx: Vec<usize>,
    pub x: Var,
    pub adjacency: Tensor,
}

/// Node selections to reuse instead of recomputing TopK (e.g. for finite
/// differences, where the selection must stay fixed).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub idx_a: Vec<usize>,
    pub idx_b: Vec<usize>,
}

/// Scores one side, picks nodes (or reuses `frozen`), and extracts X', A'.
pub fn pool_side(
    tape: &mut Tape,
    xcat: Var,
    adjacency: &Tensor,
    z: Var,
    k: PoolingRatio,
    frozen: Option<&[usize]>,
) -> Result<PooledSide> {
    let idx = match frozen {
        Some(idx) => idx.to_vec(),
        None => topk_select(tape.value(z).data(), k),
    };
    let (x, adj) = extract_subgraph(tape, xcat, adjacency, z, &idx)?;
    Ok(PooledSide {
        z,
        idx,
        x,
        adjacency: adj,
    })
}

/// Full co-attention pooling of a pair. `adj_*` are raw adjacencies.
#[allow(clippy::too_many_arguments)]
pub fn cagpool(
    tape: &mut Tape,
    xa: Var,
    adj_a: &Tensor,
    xb: Var,
    adj_b: &Tensor,
    params: &CoAttentionVars,
    k: PoolingRatio,
    symmetric: bool,
    readout: Readout,
    frozen: Option<&Selection>,
) -> Result<(PooledSide, PooledSide)> {
    let ga = global_pool(tape, xa, readout)?;
    let gb = global_pool(tape, xb, readout)?;
    let (alpha_a, alpha_b) = if symmetric {
        coattention_vector_symmetric(tape, ga, gb, params)?
    } else {
        coattention_vector(tape, ga, gb, params)?
    };
    let za = node_scores(tape, xa, alpha_a)?;
    let zb = node_scores(tape, xb, alpha_b)?;
    let a = pool_side(tape, xa, adj_a, za, k, frozen.map(|s| s.idx_a.as_slice()))?;
    let b = pool_side(tape, xb, adj_b, zb, k, frozen.map(|s| s.idx_b.as_slice()))?;
    Ok((a, b))
}

/// Value snapshot of a pooled pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledPair {
    pub idx_a: Vec<usize>,
    pub idx_b: Vec<usize>,
    pub z_a: Vec<f64>,
    pub z_b: Vec<f64>,
    pub x_a: Tensor,
    pub x_b: Tensor,
    pub adj_a: Tensor,
    pub adj_b: Tensor,
}

impl PooledPair {
    pub fn from_sides(tape: &Tape, a: &PooledSide, b: &PooledSide) -> Self {
        Self {
            idx_a: a.idx.clone(),
            idx_b: b.idx.clone(),
            z_a: tape.value(a.z).data().to_vec(),
            z_b: tape.value(b.z).data().to_vec(),
            x_a: tape.value(a.x).clone(),
            x_b: tape.value(b.x).clone(),
            adj_a: a.adjacency.clone(),
            adj_b: b.adjacency.clone(),
        }
    }

    pub fn selection(&self) -> Selection {
        Selection {
            idx_a: self.idx_a.clone(),
            idx_b: self.idx_b.clone(),
        }
    }
}

/// TopKPool scores `X p / ||p||` with a learned `1 x D` projection.
pub fn topkpool_scores(tape: &mut Tape, xcat: Var, proj: Var) -> Result<Var> {
    let norm = tape.l2_norm(proj)?;
    if tape.value(norm).item() <= ALPHA_EPS {
        return Err(Error::ZeroProjection);
    }
    let pt = tape.transpose(proj)?;
    let raw = tape.matmul(xcat, pt)?;
    tape.scalar_div(raw, norm)
}

/// SAGPool scores `tanh(A_hat X theta)` with a `D x 1` scorer.
pub fn sagpool_scores(tape: &mut Tape, a_hat: Var, xcat: Var, theta: Var) -> Result<Var> {
    let h = tape.matmul(xcat, theta)?;
    let h = tape.matmul(a_hat, h)?;
    tape.tanh(h)
}

/// Value-level X' for both sides, without recording gradients. This is the
/// graph-level interaction path timed by the benchmark: mean pooling, the
/// co-attention transform, node scores, TopK and the scaled gather.
pub fn graph_level_interaction(
    xa: &Tensor,
    xb: &Tensor,
    params: &CoAttentionParams,
    k: PoolingRatio,
) -> Result<(Tensor, Tensor)> {
    let d = xa.cols();
    if xb.cols() != d || params.dim() != d || params.kind != CoAttentionKind::Linear {
        return Err(Error::ShapeMismatch {
            op: "graph_level_interaction",
            detail: format!("X_A width {d}, X_B width {}, W side {}", xb.cols(), params.w.rows()),
        });
    }
    let ga = xa.mean_rows()?;
    let gb = xb.mean_rows()?;
    let mut alpha = params.b.data().to_vec();
    let wd = params.w.data();
    let cat: Vec<f64> = ga.data().iter().chain(gb.data()).copied().collect();
    for (r, out) in alpha.iter_mut().enumerate() {
        let row = &wd[r * 2 * d..(r + 1) * 2 * d];
        *out += row.iter().zip(&cat).map(|(w, x)| w * x).sum::<f64>();
    }
    let pooled = |x: &Tensor, alpha: &[f64]| -> Result<Tensor> {
        let norm = alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= ALPHA_EPS {
            return Err(Error::DegenerateCoAttention { norm });
        }
        let z: Vec<f64> = (0..x.rows())
            .map(|r| x.row(r).iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>() / norm)
            .collect();
        let idx = topk_select(&z, k);
        let mut out = x.gather_rows(&idx)?;
        for (r, &i) in idx.iter().enumerate() {
            let zr = z[i];
            for c in 0..d {
                out.set(r, c, out.get(r, c) * zr);
            }
        }
        Ok(out)
    };
    Ok((pooled(xa, &alpha[..d])?, pooled(xb, &alpha[d..])?))
}

/// Histogram over `[-1, 1]` of the cosine similarity of every row of `xa`
/// with every row of `xb`, in `bins` equal-width buckets. A zero row gives
/// similarity 0 with everything. Buckets are closed on the right,
/// `[-1, -1+w], (-1+w, -1+2w], ...`.
pub fn pairwise_node_interaction(xa: &Tensor, xb: &Tensor, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if xa.cols() != xb.cols() {
        return Err(Error::ShapeMismatch {
            op: "pairwise_node_interaction",
            detail: format!("{} vs {} columns", xa.cols(), xb.cols()),
        });
    }
    let unit = |x: &Tensor| -> Tensor {
        let mut u = x.clone();
        let d = x.cols();
        for r in 0..x.rows() {
            let n = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if n > 0.0 { 1.0 / n } else { 0.0 };
            for v in &mut u.data_mut()[r * d..(r + 1) * d] {
                *v *= s;
            }
        }
        u
    };
    let (ua, ub) = (unit(xa), unit(xb));
    let mut hist = vec![0.0; bins];
    let width = 2.0 / bins as f64;
    for i in 0..ua.rows() {
        let ra = ua.row(i);
        for j in 0..ub.rows() {
            let dot: f64 = ra.iter().zip(ub.row(j)).map(|(a, b)| a * b).sum();
            let pos = ((dot.clamp(-1.0, 1.0) + 1.0) / width).ceil() as usize;
            let bin = pos.saturating_sub(1).min(bins - 1);
            hist[bin] += 1.0;
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::{encode, normalize_dense, GcnConfig, GcnParams};
    use crate::graph::{are_isomorphic, gen_random_graph, permute, random_permutation, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn scores(x: &Tensor, alpha: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone())?;
        let av = tape.leaf(Tensor::row_vector(alpha))?;
        let z = node_scores(&mut tape, xv, av)?;
        Ok(tape.value(z).data().to_vec())
    }

    fn coatt(w: Tensor, b: Tensor, xa: &[f64], xb: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let p = CoAttentionParams::linear(w, b).unwrap().bind(&mut tape).unwrap();
        let a = tape.leaf(Tensor::row_vector(xa)).unwrap();
        let bv = tape.leaf(Tensor::row_vector(xb)).unwrap();
        let (aa, ab) = coattention_vector(&mut tape, a, bv, &p).unwrap();
        (tape.value(aa).data().to_vec(), tape.value(ab).data().to_vec())
    }

    #[test]
    fn ratio_bounds_and_ceiling() {
        assert!(PoolingRatio::new(0.0).is_err());
        assert!(PoolingRatio::new(1.01).is_err());
        let half = PoolingRatio::HALF;
        assert_eq!(half.keep(3), 2);
        assert_eq!(half.keep(6), 3);
        assert_eq!(half.keep(1), 1);
        assert_eq!(PoolingRatio::new(0.1).unwrap().keep(30), 3);
        assert_eq!(PoolingRatio::new(1.0).unwrap().keep(7), 7);
    }

    #[test]
    fn mean_pool_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[1.0, 3.0], &[3.0, 5.0]])).unwrap();
        let m = global_mean_pool(&mut tape, x).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0, 4.0]);
        let one = tape.leaf(t(&[&[7.0, -1.0]])).unwrap();
        let m = global_mean_pool(&mut tape, one).unwrap();
        assert_eq!(tape.value(m).data(), &[7.0, -1.0]);
        let empty = tape.leaf(Tensor::zeros(0, 2)).unwrap();
        assert!(matches!(global_mean_pool(&mut tape, empty), Err(Error::EmptyGraph)));
        let s = global_pool(&mut tape, x, Readout::Sum).unwrap();
        assert_eq!(tape.value(s).data(), &[4.0, 8.0]);
        let m = global_pool(&mut tape, x, Readout::Mean).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0, 4.0]);
    }

    #[test]
    fn coattention_examples() {
        let (a, b) = coatt(Tensor::identity(4), Tensor::zeros(1, 4), &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!((a, b), (vec![1.0, 2.0], vec![3.0, 4.0]));
        let (a, _) = coatt(Tensor::identity(4), Tensor::zeros(1, 4), &[3.0, 4.0], &[1.0, 2.0]);
        assert_eq!(a, vec![3.0, 4.0]);
        let c = Tensor::row_vector(&[0.5, -1.0, 2.0, 3.0]);
        let (a1, b1) = coatt(Tensor::zeros(4, 4), c.clone(), &[1.0, 2.0], &[3.0, 4.0]);
        let (a2, b2) = coatt(Tensor::zeros(4, 4), c, &[-9.0, 0.0], &[5.0, 1.0]);
        assert_eq!((a1.clone(), b1.clone()), (a2, b2));
        assert_eq!(a1, vec![0.5, -1.0]);
        assert_eq!(b1, vec![2.0, 3.0]);
    }

    #[test]
    fn coattention_rejects_bad_dims() {
        let mut tape = Tape::new();
        let p = CoAttentionParams::linear(Tensor::identity(4), Tensor::zeros(1, 4))
            .unwrap()
            .bind(&mut tape)
            .unwrap();
        let a = tape.leaf(Tensor::row_vector(&[1.0, 2.0, 3.0])).unwrap();
        assert!(coattention_vector(&mut tape, a, a, &p).is_err());
        assert!(CoAttentionParams::linear(Tensor::identity(3), Tensor::zeros(1, 3)).is_err());
    }

    #[test]
    fn score_examples() {
        let x = t(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let z = scores(&x, &[3.0, 4.0]).unwrap();
        let want = [0.6, 0.8, 1.4];
        for (a, b) in z.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero_row = scores(&t(&[&[0.0, 0.0]]), &[3.0, 4.0]).unwrap();
        assert_eq!(zero_row, vec![0.0]);
        assert!(matches!(
            scores(&x, &[1e-13, 0.0]),
            Err(Error::DegenerateCoAttention { .. })
        ));
    }

    #[test]
    fn scores_are_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = Tensor::from_vec(6, 3, (0..18).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let alpha: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // powers of two scale the norm exactly
            let c = 2f64.powi(rng.gen_range(-8..8));
            let scaled: Vec<f64> = alpha.iter().map(|a| a * c).collect();
            let (z1, z2) = (scores(&x, &alpha).unwrap(), scores(&x, &scaled).unwrap());
            assert_eq!(z1, z2);
            let k = PoolingRatio::HALF;
            assert_eq!(topk_select(&z1, k), topk_select(&z2, k));
        }
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_select(&[0.9, 0.1, 0.5], PoolingRatio::HALF), vec![0, 2]);
        let all = PoolingRatio::new(1.0).unwrap();
        assert_eq!(topk_select(&[0.9, 0.1, 0.5], all), vec![0, 2, 1]);
        assert_eq!(topk_select(&[-3.0], PoolingRatio::new(0.01).unwrap()), vec![0]);
        // ties resolve by index
        assert_eq!(topk_select(&[1.0, 2.0, 1.0, 2.0], PoolingRatio::HALF), vec![1, 3]);
        assert_eq!(topk_select(&[0.0, 0.0, 0.0], all), vec![0, 1, 2]);
    }

    #[test]
    fn subgraph_examples() {
        let x = t(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let adj = Graph::unlabeled(3, &[(0, 1), (1, 2)]).unwrap().adjacency();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone()).unwrap();
        let z = tape.leaf(t(&[&[0.6], &[0.8], &[1.4]])).unwrap();
        let (xp, ap) = extract_subgraph(&mut tape, xv, &adj, z, &[2, 1]).unwrap();
        assert_eq!(tape.value(xp), &t(&[&[1.4, 1.4], &[0.0, 0.8]]));
        assert_eq!(ap, t(&[&[0.0, 1.0], &[1.0, 0.0]]));

        let ones = tape.leaf(Tensor::filled(3, 1, 1.0)).unwrap();
        let (xp, ap) = extract_subgraph(&mut tape, xv, &adj, ones, &[0, 1, 2]).unwrap();
        assert_eq!(tape.value(xp), &x);
        assert_eq!(ap, adj);

        let (_, ap) = extract_subgraph(&mut tape, xv, &adj, ones, &[1]).unwrap();
        assert_eq!(ap, t(&[&[0.0]]));

        assert!(matches!(
            extract_subgraph(&mut tape, xv, &adj, ones, &[3]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(extract_subgraph(&mut tape, xv, &adj, ones, &[1, 1]).is_err());
    }

    #[test]
    fn subgraph_gradient_reaches_scores_and_features() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]])).unwrap();
        let z = tape.leaf(t(&[&[0.5], &[2.0], &[-1.0]])).unwrap();
        let (xp, _) = extract_subgraph(&mut tape, x, &Tensor::zeros(3, 3), z, &[1]).unwrap();
        let loss = tape.sum(xp).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x), t(&[&[0.0, 0.0], &[2.0, 2.0], &[0.0, 0.0]]));
        assert_eq!(g.get(z), t(&[&[0.0], &[7.0], &[0.0]]));
    }

    fn pool_values(
        xa: &Tensor,
        adj_a: &Tensor,
        xb: &Tensor,
        adj_b: &Tensor,
        p: &CoAttentionParams,
        k: PoolingRatio,
    ) -> PooledPair {
        let mut tape = Tape::new();
        let pv = p.bind(&mut tape).unwrap();
        let a = tape.leaf(xa.clone()).unwrap();
        let b = tape.leaf(xb.clone()).unwrap();
        let (sa, sb) = cagpool(&mut tape, a, adj_a, b, adj_b, &pv, k, false, Readout::Mean, None).unwrap();
        PooledPair::from_sides(&tape, &sa, &sb)
    }

    #[test]
    fn identical_inputs_select_identical_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 3;
        // symmetric block structure [[P, Q], [Q, P]]
        let p = glorot_uniform(d, d, &mut rng);
        let q = glorot_uniform(d, d, &mut rng);
        let mut w = Tensor::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                w.set(i, j, p.get(i, j));
                w.set(i + d, j + d, p.get(i, j));
                w.set(i, j + d, q.get(i, j));
                w.set(i + d, j, q.get(i, j));
            }
        }
        let params = CoAttentionParams::linear(w, Tensor::row_vector(&[0.1, 0.2, 0.3, 0.1, 0.2, 0.3])).unwrap();
        let x = Tensor::from_vec(5, d, (0..15).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let adj = gen_random_graph(5, 0.5, 1, 1).unwrap().adjacency();
        let pp = pool_values(&x, &adj, &x, &adj, &params, PoolingRatio::HALF);
        assert_eq!(pp.idx_a, pp.idx_b);
        assert_eq!(pp.idx_a.len(), 3);

        let full = pool_values(&x, &adj, &x, &adj, &params, PoolingRatio::new(1.0).unwrap());
        assert_eq!(full.idx_a.len(), 5);
        assert_eq!(full.adj_a.shape(), (5, 5));
    }

    #[test]
    fn partner_decides_selection_only_through_cross_blocks() {
        // alpha_A = x_B: the partner alone picks A's nodes
        let mut cross = Tensor::zeros(4, 4);
        cross.set(0, 2, 1.0);
        cross.set(1, 3, 1.0);
        cross.set(2, 0, 1.0);
        cross.set(3, 1, 1.0);
        let params = CoAttentionParams::linear(cross, Tensor::zeros(1, 4)).unwrap();
        let xa = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let adj = Tensor::zeros(2, 2);
        let (xb, xc) = (t(&[&[2.0, 0.1]]), t(&[&[0.1, 2.0]]));
        let one = Tensor::zeros(1, 1);
        let with_b = pool_values(&xa, &adj, &xb, &one, &params, PoolingRatio::HALF);
        let with_c = pool_values(&xa, &adj, &xc, &one, &params, PoolingRatio::HALF);
        assert_eq!(with_b.idx_a, vec![0]);
        assert_eq!(with_c.idx_a, vec![1]);

        // block-diagonal W, zero bias: A's selection ignores B
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut diag = glorot_uniform(4, 4, &mut rng);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 0), (2, 1), (3, 0), (3, 1)] {
            diag.set(i, j, 0.0);
        }
        let params = CoAttentionParams::linear(diag, Tensor::zeros(1, 4)).unwrap();
        let xa = Tensor::from_vec(6, 2, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let adj = Tensor::zeros(6, 6);
        let base = pool_values(&xa, &adj, &xb, &one, &params, PoolingRatio::HALF);
        for _ in 0..20 {
            let other = Tensor::from_vec(3, 2, (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
            let pp = pool_values(&xa, &adj, &other, &Tensor::zeros(3, 3), &params, PoolingRatio::HALF);
            assert_eq!(pp.idx_a, base.idx_a);
            assert_eq!(pp.z_a, base.z_a);
        }
    }

    #[test]
    fn pooling_commutes_with_node_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = GcnConfig { num_layers: 2, in_dim: 3, hidden_dim: 4 };
        let enc = GcnParams::init(&cfg, &mut rng).unwrap();
        let co = CoAttentionParams::init(8, CoAttentionKind::Linear, &mut rng);
        for seed in 0..20 {
            let ga = gen_random_graph(8, 0.4, 3, seed).unwrap();
            let gb = gen_random_graph(7, 0.4, 3, seed + 100).unwrap();
            let p = random_permutation(8, &mut rng);
            let gp = permute(&ga, &p).unwrap();
            let xb = encode(&gb, &enc).unwrap();
            let orig = pool_values(&encode(&ga, &enc).unwrap(), &ga.adjacency(), &xb, &gb.adjacency(), &co, PoolingRatio::HALF);
            let mut z = orig.z_a.clone();
            z.sort_by(f64::total_cmp);
            if z.windows(2).any(|w| w[0] == w[1]) {
                continue;
            }
            let perm = pool_values(&encode(&gp, &enc).unwrap(), &gp.adjacency(), &xb, &gb.adjacency(), &co, PoolingRatio::HALF);
            let mapped: Vec<usize> = orig.idx_a.iter().map(|&i| p.apply(i)).collect();
            assert_eq!(perm.idx_a, mapped);

            let pooled_graph = |g: &Graph, pp: &PooledPair| {
                let m = pp.idx_a.len();
                let edges: Vec<_> = (0..m)
                    .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                    .filter(|&(i, j)| pp.adj_a.get(i, j) == 1.0)
                    .collect();
                let labels = pp.idx_a.iter().map(|&i| g.label(i).unwrap()).collect();
                Graph::with_labels(m, &edges, labels, 3).unwrap()
            };
            assert!(are_isomorphic(&pooled_graph(&ga, &orig), &pooled_graph(&gp, &perm)).unwrap());
        }
    }

    #[test]
    fn baseline_scorers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let alpha = [0.3, -0.7, 1.1];
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone()).unwrap();
        let pv = tape.leaf(Tensor::row_vector(&alpha)).unwrap();
        let zt = topkpool_scores(&mut tape, xv, pv).unwrap();
        assert_eq!(tape.value(zt).data(), scores(&x, &alpha).unwrap().as_slice());
        let zero = tape.leaf(Tensor::zeros(1, 3)).unwrap();
        assert!(matches!(topkpool_scores(&mut tape, xv, zero), Err(Error::ZeroProjection)));

        // isolated node: A_hat = 1
        let one = tape.leaf(Tensor::identity(1)).unwrap();
        let x1 = tape.leaf(t(&[&[0.5, -1.0, 2.0]])).unwrap();
        let th = tape.leaf(t(&[&[1.0], &[0.5], &[0.25]])).unwrap();
        let zs = sagpool_scores(&mut tape, one, x1, th).unwrap();
        assert_eq!(tape.value(zs).item(), (0.5f64 - 0.5 + 0.5).tanh());

        let adj = normalize_dense(&gen_random_graph(5, 0.5, 1, 3).unwrap().adjacency()).unwrap();
        let av = tape.leaf(adj).unwrap();
        let th = tape.leaf(glorot_uniform(3, 1, &mut rng)).unwrap();
        let z1 = sagpool_scores(&mut tape, av, xv, th).unwrap();
        let z1 = tape.value(z1).clone();
        // a second partner graph cannot enter either formula
        let other = tape.leaf(Tensor::filled(4, 3, 9.0)).unwrap();
        let _ = tape.concat_rows_mean(other).unwrap();
        let z2 = sagpool_scores(&mut tape, av, xv, th).unwrap();
        assert_eq!(tape.value(z2), &z1);
    }

    #[test]
    fn value_path_matches_tape_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let co = CoAttentionParams::init(4, CoAttentionKind::Linear, &mut rng);
        let xa = Tensor::from_vec(9, 4, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let xb = Tensor::from_vec(6, 4, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let pp = pool_values(&xa, &Tensor::zeros(9, 9), &xb, &Tensor::zeros(6, 6), &co, PoolingRatio::HALF);
        let (va, vb) = graph_level_interaction(&xa, &xb, &co, PoolingRatio::HALF).unwrap();
        assert!(va.max_abs_diff(&pp.x_a) < 1e-12);
        assert!(vb.max_abs_diff(&pp.x_b) < 1e-12);
    }

    #[test]
    fn histogram_examples() {
        let h = pairwise_node_interaction(&t(&[&[1.0, 0.0]]), &t(&[&[1.0, 0.0], &[0.0, 1.0]]), 2).unwrap();
        assert_eq!(h, vec![1.0, 1.0]);
        let h = pairwise_node_interaction(&t(&[&[0.3, 0.4]]), &t(&[&[0.3, 0.4]]), 16).unwrap();
        assert_eq!(h[15], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
        let h = pairwise_node_interaction(&t(&[&[1.0, 0.0], &[0.0, 2.0]]), &t(&[&[0.0, 3.0], &[5.0, 0.0]]), 5).unwrap();
        // 0 falls in the bucket (-0.2, 0.2]
        assert_eq!(h, vec![0.0, 0.0, 2.0, 0.0, 2.0]);
        let h = pairwise_node_interaction(&t(&[&[0.0, 0.0]]), &t(&[&[1.0, 1.0]]), 4).unwrap();
        assert_eq!(h, vec![0.0, 1.0, 0.0, 0.0]);
        let h = pairwise_node_interaction(&t(&[&[1.0, 0.0]]), &t(&[&[-1.0, 0.0]]), 4).unwrap();
        assert_eq!(h, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(pairwise_node_interaction(&t(&[&[1.0]]), &t(&[&[1.0]]), 0).is_err());
    }
}
