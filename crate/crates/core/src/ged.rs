//! Exact graph edit distance by A* search, and similarity-labelled pair
//! datasets built on it.
//!
//! A search state assigns a prefix of A's nodes (taken in order of
//! decreasing degree) to distinct nodes of B or to deletion. An edge's cost
//! is settled once both of its endpoints are assigned. When every A node
//! is assigned, the unused B nodes and the B edges touching them are
//! inserted.
//!
//! Node labels are compared, edges are unlabeled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::generate::random_graph_with;
use crate::graph::{permute, random_permutation, Graph, GraphPair, Target};

pub const DEFAULT_NODE_BUDGET: usize = 10;
/// Search gives up after expanding this many states.
pub const MAX_EXPANDED: u64 = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub node_ins: f64,
    pub node_del: f64,
    /// Charged when a node is mapped onto a node with a different label.
    pub node_sub: f64,
    pub edge_ins: f64,
    pub edge_del: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            node_ins: 1.0,
            node_del: 1.0,
            node_sub: 1.0,
            edge_ins: 1.0,
            edge_del: 1.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.node_ins, self.node_del, self.node_sub, self.edge_ins, self.edge_del];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config(format!("edit costs must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EditOp {
    SubstituteNode { a: usize, b: usize },
    DeleteNode { a: usize },
    InsertNode { b: usize },
    DeleteEdge { a: (usize, usize) },
    InsertEdge { b: (usize, usize) },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GedResult {
    pub ged: f64,
    pub nged: f64,
    pub similarity: f64,
    /// `mapping[i]` is the B node that A node `i` becomes, `None` for a
    /// deletion.
    pub mapping: Vec<Option<usize>>,
    pub expanded: u64,
}

impl GedResult {
    /// The operations of an optimal edit path, derived from the mapping.
    /// Only operations with a non-zero cost under `cost` are listed
    /// (matching substitutions are omitted).
    pub fn edit_path(&self, a: &Graph, b: &Graph, cost: &CostModel) -> Vec<EditOp> {
        let mut ops = Vec::new();
        let mut used = vec![false; b.num_nodes()];
        for (i, m) in self.mapping.iter().enumerate() {
            match *m {
                Some(j) => {
                    used[j] = true;
                    if a.label(i) != b.label(j) && cost.node_sub > 0.0 {
                        ops.push(EditOp::SubstituteNode { a: i, b: j });
                    }
                }
                None => ops.push(EditOp::DeleteNode { a: i }),
            }
        }
        for (j, &u) in used.iter().enumerate() {
            if !u {
                ops.push(EditOp::InsertNode { b: j });
            }
        }
        let image = |i: usize| self.mapping[i];
        for &(u, v) in a.edges() {
            let kept = matches!((image(u), image(v)), (Some(x), Some(y)) if b.has_edge(x, y));
            if !kept {
                ops.push(EditOp::DeleteEdge { a: (u, v) });
            }
        }
        let mut preimage = vec![None; b.num_nodes()];
        for (i, m) in self.mapping.iter().enumerate() {
            if let Some(j) = m {
                preimage[*j] = Some(i);
            }
        }
        for &(x, y) in b.edges() {
            let kept = matches!((preimage[x], preimage[y]), (Some(u), Some(v)) if a.has_edge(u, v));
            if !kept {
                ops.push(EditOp::InsertEdge { b: (x, y) });
            }
        }
        ops
    }
}

/// `exp(-ged / ((na + nb) / 2))`.
pub fn similarity_label(ged: f64, na: usize, nb: usize) -> f64 {
    (-normalized_ged(ged, na, nb)).exp()
}

pub fn normalized_ged(ged: f64, na: usize, nb: usize) -> f64 {
    ged / ((na + nb) as f64 / 2.0)
}

#[derive(Clone, Debug)]
struct State {
    f: f64,
    g: f64,
    /// Assigned targets for `order[..depth]`, `u8::MAX` for deletion.
    assigned: Vec<u8>,
    used: u64,
    complete: bool,
    seq: u64,
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for State {}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for State {
    // BinaryHeap is a max-heap: lowest f first, then the deeper state,
    // then the earlier one.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.complete.cmp(&other.complete))
            .then(self.assigned.len().cmp(&other.assigned.len()))
            .then(other.seq.cmp(&self.seq))
    }
}

const DELETED: u8 = u8::MAX;

struct Search<'a> {
    a: &'a Graph,
    b: &'a Graph,
    cost: CostModel,
    order: Vec<usize>,
    a_adj: Vec<Vec<bool>>,
    b_adj: Vec<Vec<bool>>,
    b_edges: Vec<(usize, usize)>,
    /// `a_edges_from[d]`: A edges with an endpoint in `order[d..]`.
    a_edges_from: Vec<usize>,
}

fn dense_adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut m = vec![vec![false; n]; n];
    for &(u, v) in g.edges() {
        m[u][v] = true;
        m[v][u] = true;
    }
    m
}

impl<'a> Search<'a> {
    fn new(a: &'a Graph, b: &'a Graph, cost: CostModel) -> Self {
        let deg = a.degrees();
        let mut order: Vec<usize> = (0..a.num_nodes()).collect();
        order.sort_by(|&x, &y| deg[y].cmp(&deg[x]).then(x.cmp(&y)));
        let mut position = vec![0; a.num_nodes()];
        for (p, &v) in order.iter().enumerate() {
            position[v] = p;
        }
        // an edge leaves the remaining set once its later endpoint is placed
        let mut settled_at = vec![0usize; a.num_nodes() + 1];
        for &(u, v) in a.edges() {
            settled_at[position[u].max(position[v])] += 1;
        }
        let mut a_edges_from = vec![0; a.num_nodes() + 1];
        for d in (0..a.num_nodes()).rev() {
            a_edges_from[d] = a_edges_from[d + 1] + settled_at[d];
        }
        Self {
            a,
            b,
            cost,
            order,
            a_adj: dense_adjacency(a),
            b_adj: dense_adjacency(b),
            b_edges: b.edges().to_vec(),
            a_edges_from,
        }
    }

    fn expand_cost(&self, assigned: &[u8], target: u8) -> f64 {
        let c = &self.cost;
        let depth = assigned.len();
        let u = self.order[depth];
        let mut cost = if target == DELETED {
            c.node_del
        } else if self.a.label(u) != self.b.label(target as usize) {
            c.node_sub
        } else {
            0.0
        };
        for (k, &t) in assigned.iter().enumerate() {
            let v = self.order[k];
            let ea = self.a_adj[u][v];
            if target == DELETED || t == DELETED {
                if ea {
                    cost += c.edge_del;
                }
            } else {
                let eb = self.b_adj[target as usize][t as usize];
                if ea && !eb {
                    cost += c.edge_del;
                } else if eb && !ea {
                    cost += c.edge_ins;
                }
            }
        }
        cost
    }

    fn completion_cost(&self, used: u64) -> f64 {
        let c = &self.cost;
        let free = (0..self.b.num_nodes()).filter(|&j| used & (1 << j) == 0).count();
        let free_edges = self
            .b_edges
            .iter()
            .filter(|&&(x, y)| used & (1 << x) == 0 || used & (1 << y) == 0)
            .count();
        free as f64 * c.node_ins + free_edges as f64 * c.edge_ins
    }

    /// Lower bound on the cost still to pay from a state.
    fn heuristic(&self, depth: usize, used: u64) -> f64 {
        let c = &self.cost;
        let rest_a = &self.order[depth..];
        let rest_b: Vec<usize> = (0..self.b.num_nodes()).filter(|&j| used & (1 << j) == 0).collect();
        let (na, nb) = (rest_a.len(), rest_b.len());

        let mut la: Vec<Option<usize>> = rest_a.iter().map(|&i| self.a.label(i)).collect();
        let mut lb: Vec<Option<usize>> = rest_b.iter().map(|&j| self.b.label(j)).collect();
        la.sort_unstable();
        lb.sort_unstable();
        let (mut x, mut y, mut common) = (0, 0, 0);
        while x < la.len() && y < lb.len() {
            match la[x].cmp(&lb[y]) {
                Ordering::Equal => {
                    common += 1;
                    x += 1;
                    y += 1;
                }
                Ordering::Less => x += 1,
                Ordering::Greater => y += 1,
            }
        }
        let mn = na.min(nb);
        let node_part = [0, common.min(mn), mn]
            .iter()
            .map(|&p| {
                c.node_sub * p.saturating_sub(common) as f64
                    + c.node_del * (na - p) as f64
                    + c.node_ins * (nb - p) as f64
            })
            .fold(f64::INFINITY, f64::min);

        let ea = self.a_edges_from[depth];
        let eb = self
            .b_edges
            .iter()
            .filter(|&&(x, y)| used & (1 << x) == 0 || used & (1 << y) == 0)
            .count();
        let edge_part = if ea > eb {
            c.edge_del * (ea - eb) as f64
        } else {
            c.edge_ins * (eb - ea) as f64
        };
        node_part + edge_part
    }
}

/// Exact edit distance between `a` and `b`.
pub fn exact_ged(a: &Graph, b: &Graph, cost: &CostModel, node_budget: usize) -> Result<GedResult> {
    exact_ged_limited(a, b, cost, node_budget, MAX_EXPANDED)
}

pub fn exact_ged_limited(
    a: &Graph,
    b: &Graph,
    cost: &CostModel,
    node_budget: usize,
    max_expanded: u64,
) -> Result<GedResult> {
    cost.validate()?;
    let budget = node_budget.min(64);
    let largest = a.num_nodes().max(b.num_nodes());
    if largest > budget {
        return Err(Error::GedBudgetExceeded {
            nodes: largest,
            budget: node_budget,
        });
    }
    let search = Search::new(a, b, *cost);
    let na = a.num_nodes();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(State {
        f: search.heuristic(0, 0),
        g: 0.0,
        assigned: Vec::new(),
        used: 0,
        complete: false,
        seq,
    });
    let mut expanded = 0u64;
    while let Some(s) = heap.pop() {
        if s.complete {
            let mapping = (0..na)
                .map(|i| {
                    let pos = search.order.iter().position(|&v| v == i).expect("order is a permutation");
                    let t = s.assigned[pos];
                    (t != DELETED).then_some(t as usize)
                })
                .collect();
            return Ok(GedResult {
                ged: s.g,
                nged: normalized_ged(s.g, na, b.num_nodes()),
                similarity: similarity_label(s.g, na, b.num_nodes()),
                mapping,
                expanded,
            });
        }
        expanded += 1;
        if expanded > max_expanded {
            return Err(Error::GedSearchAborted { expanded: max_expanded });
        }
        if s.assigned.len() == na {
            seq += 1;
            let g = s.g + search.completion_cost(s.used);
            heap.push(State {
                f: g,
                g,
                complete: true,
                seq,
                ..s
            });
            continue;
        }
        let targets = (0..b.num_nodes())
            .filter(|&j| s.used & (1 << j) == 0)
            .map(|j| j as u8)
            .chain(std::iter::once(DELETED));
        for t in targets {
            let g = s.g + search.expand_cost(&s.assigned, t);
            let used = if t == DELETED { s.used } else { s.used | (1 << t) };
            let mut assigned = Vec::with_capacity(s.assigned.len() + 1);
            assigned.extend_from_slice(&s.assigned);
            assigned.push(t);
            seq += 1;
            heap.push(State {
                f: g + search.heuristic(assigned.len(), used),
                g,
                assigned,
                used,
                complete: false,
                seq,
            });
        }
    }
    unreachable!("the all-deletion path always completes")
}

/// Heuristic value at the state reached by assigning A's nodes, in search
/// order, to `prefix`. Exposed so the bound can be checked against true
/// remaining costs.
pub fn heuristic_at(a: &Graph, b: &Graph, cost: &CostModel, prefix: &[Option<usize>]) -> Result<(f64, f64)> {
    let search = Search::new(a, b, *cost);
    let mut assigned = Vec::new();
    let mut used = 0u64;
    let mut g = 0.0;
    for t in prefix {
        let t = match t {
            Some(j) if *j < b.num_nodes() && used & (1 << j) == 0 => *j as u8,
            Some(j) => return Err(Error::IndexOutOfRange { index: *j, len: b.num_nodes() }),
            None => DELETED,
        };
        g += search.expand_cost(&assigned, t);
        if t != DELETED {
            used |= 1 << t;
        }
        assigned.push(t);
    }
    Ok((g, search.heuristic(assigned.len(), used)))
}

/// The order in which A's nodes are assigned.
pub fn search_order(a: &Graph) -> Vec<usize> {
    let deg = a.degrees();
    let mut order: Vec<usize> = (0..a.num_nodes()).collect();
    order.sort_by(|&x, &y| deg[y].cmp(&deg[x]).then(x.cmp(&y)));
    order
}

/// Node labels used for generated GED graphs.
pub const GED_ALPHABET: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Val => "val.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GedPair {
    pub id: usize,
    pub i: usize,
    pub j: usize,
    pub ged: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GedDataset {
    pub graphs: Vec<Graph>,
    pub graph_split: Vec<Split>,
    /// Every unordered pair `i < j` plus every self-pair, in id order.
    pub pairs: Vec<GedPair>,
}

impl GedDataset {
    pub fn graph_pair(&self, p: &GedPair) -> Result<GraphPair> {
        let (a, b) = (&self.graphs[p.i], &self.graphs[p.j]);
        let s = similarity_label(p.ged, a.num_nodes(), b.num_nodes());
        GraphPair::new(a.clone(), b.clone(), Target::Similarity(s))
    }

    pub fn split(&self, split: Split) -> Result<Vec<GraphPair>> {
        self.pairs
            .iter()
            .filter(|p| p.split == split)
            .map(|p| self.graph_pair(p))
            .collect()
    }

    /// Writes `train.jsonl`, `val.jsonl` and `test.jsonl` into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for split in Split::ALL {
            let path = dir.join(split.file_name());
            crate::graph::write_pairs(&path, &self.split(split)?)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn edited_copy<R: Rng>(rng: &mut R, g: &Graph, max_nodes: usize) -> Result<Graph> {
    let mut n = g.num_nodes();
    let mut labels: Vec<usize> = (0..n).map(|i| g.label(i).unwrap_or(0)).collect();
    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    for _ in 0..rng.gen_range(1..=3) {
        match rng.gen_range(0..4) {
            0 if n >= 2 => {
                let u = rng.gen_range(0..n);
                let v = (u + rng.gen_range(1..n)) % n;
                let e = (u.min(v), u.max(v));
                match edges.iter().position(|&x| x == e) {
                    Some(p) => {
                        edges.remove(p);
                    }
                    None => edges.push(e),
                }
            }
            1 => {
                let u = rng.gen_range(0..n);
                labels[u] = (labels[u] + rng.gen_range(1..GED_ALPHABET)) % GED_ALPHABET;
            }
            2 if n < max_nodes => {
                let attach = rng.gen_range(0..n);
                edges.push((attach, n));
                labels.push(rng.gen_range(0..GED_ALPHABET));
                n += 1;
            }
            3 if n > 2 => {
                let drop = rng.gen_range(0..n);
                labels.remove(drop);
                edges = edges
                    .into_iter()
                    .filter(|&(u, v)| u != drop && v != drop)
                    .map(|(u, v)| (u - (u > drop) as usize, v - (v > drop) as usize))
                    .collect();
                n -= 1;
            }
            _ => {}
        }
    }
    let edited = Graph::with_labels(n, &edges, labels, GED_ALPHABET)?;
    permute(&edited, &random_permutation(n, rng))
}

/// Graphs for a GED dataset: about half drawn fresh, the rest permuted
/// copies of earlier graphs with up to three random edits, so targets
/// spread over the whole similarity range.
pub fn gen_ged_graphs(num_graphs: usize, max_nodes: usize, seed: u64) -> Result<Vec<Graph>> {
    if max_nodes < 2 {
        return Err(Error::Config("max_nodes must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs: Vec<Graph> = Vec::with_capacity(num_graphs);
    for _ in 0..num_graphs {
        let g = if !graphs.is_empty() && rng.gen_bool(0.5) {
            let src = rng.gen_range(0..graphs.len());
            edited_copy(&mut rng, &graphs[src], max_nodes)?
        } else {
            let n = rng.gen_range((max_nodes / 2).max(2)..=max_nodes);
            let p = rng.gen_range(0.2..0.5);
            random_graph_with(&mut rng, n, p, GED_ALPHABET)?
        };
        graphs.push(g);
    }
    Ok(graphs)
}

/// Thread count for dataset generation from `CAGPOOL_THREADS`, if set.
pub fn configured_threads() -> Option<usize> {
    std::env::var("CAGPOOL_THREADS").ok()?.parse().ok().filter(|&n| n > 0)
}

/// Splits graphs 60/20/20 under a seeded shuffle and labels every pair
/// with its exact GED. A pair belongs to the split of its later-stage
/// graph (test over val over train), so no test graph is seen in
/// training.
pub fn gen_ged_dataset(num_graphs: usize, max_nodes: usize, seed: u64) -> Result<GedDataset> {
    if max_nodes > DEFAULT_NODE_BUDGET {
        return Err(Error::GedBudgetExceeded {
            nodes: max_nodes,
            budget: DEFAULT_NODE_BUDGET,
        });
    }
    let graphs = gen_ged_graphs(num_graphs, max_nodes, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5917);
    let mut order: Vec<usize> = (0..num_graphs).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let n_train = (num_graphs as f64 * 0.6).round() as usize;
    let n_val = (num_graphs as f64 * 0.2).round() as usize;
    let mut graph_split = vec![Split::Test; num_graphs];
    for (rank, &g) in order.iter().enumerate() {
        graph_split[g] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let index: Vec<(usize, usize)> = (0..num_graphs)
        .flat_map(|i| (i..num_graphs).map(move |j| (i, j)))
        .collect();
    let cost = CostModel::default();
    let label = |&(i, j): &(usize, usize)| -> Result<f64> {
        exact_ged(&graphs[i], &graphs[j], &cost, DEFAULT_NODE_BUDGET)
            .map(|r| r.ged)
            .map_err(|e| Error::Config(format!("pair ({i}, {j}): {e}")))
    };
    let geds: Vec<Result<f64>> = match configured_threads() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| index.par_iter().map(label).collect()),
        None => index.par_iter().map(label).collect(),
    };
    let pairs = index
        .iter()
        .zip(geds)
        .enumerate()
        .map(|(id, (&(i, j), ged))| {
            Ok(GedPair {
                id,
                i,
                j,
                ged: ged?,
                split: graph_split[i].max(graph_split[j]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GedDataset {
        graphs,
        graph_split,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_random_graph;

    fn ged(a: &Graph, b: &Graph) -> f64 {
        exact_ged(a, b, &CostModel::default(), DEFAULT_NODE_BUDGET).unwrap().ged
    }

    #[test]
    fn small_examples() {
        let tri = Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let path = Graph::unlabeled(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(ged(&tri, &path), 1.0);
        assert_eq!(ged(&tri, &tri), 0.0);
        let empty = Graph::unlabeled(0, &[]).unwrap();
        let single = Graph::unlabeled(1, &[]).unwrap();
        assert_eq!(ged(&empty, &single), 1.0);
        assert_eq!(ged(&single, &empty), 1.0);
        let r = exact_ged(&tri, &tri, &CostModel::default(), 10).unwrap();
        assert_eq!(r.similarity, 1.0);
    }

    #[test]
    fn label_substitution_costs_one() {
        let a = Graph::with_labels(2, &[(0, 1)], vec![0, 1], 3).unwrap();
        let b = Graph::with_labels(2, &[(0, 1)], vec![0, 2], 3).unwrap();
        assert_eq!(ged(&a, &b), 1.0);
        let cost = CostModel {
            node_sub: 5.0,
            ..CostModel::default()
        };
        // delete and re-insert the node with its edge: 4 < 5
        assert_eq!(exact_ged(&a, &b, &cost, 10).unwrap().ged, 4.0);
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity_label(0.0, 3, 5), 1.0);
        assert!((similarity_label(2.0, 4, 6) - (-0.4f64).exp()).abs() < 1e-15);
        assert!((similarity_label(2.0, 4, 6) - 0.670320).abs() < 1e-6);
        assert!(similarity_label(1e6, 2, 2) > 0.0 || similarity_label(1e6, 2, 2) == 0.0);
        assert!(similarity_label(500.0, 2, 2) > 0.0);
    }

    #[test]
    fn edit_path_cost_matches_distance() {
        let cost = CostModel::default();
        for seed in 0..30 {
            let a = gen_random_graph(4 + seed as usize % 3, 0.4, 2, seed).unwrap();
            let b = gen_random_graph(3 + seed as usize % 4, 0.5, 2, seed + 100).unwrap();
            let r = exact_ged(&a, &b, &cost, 10).unwrap();
            assert_eq!(r.edit_path(&a, &b, &cost).len() as f64, r.ged, "seed {seed}");
        }
    }

    #[test]
    fn heuristic_never_exceeds_remaining_cost() {
        let cost = CostModel::default();
        for seed in 0..30 {
            let a = gen_random_graph(5, 0.4, 2, seed).unwrap();
            let b = gen_random_graph(4 + seed as usize % 3, 0.4, 2, seed + 50).unwrap();
            let r = exact_ged(&a, &b, &cost, 10).unwrap();
            let order = search_order(&a);
            // along the optimal path, g + h never exceeds the optimum
            for depth in 0..=order.len() {
                let prefix: Vec<Option<usize>> = order[..depth].iter().map(|&v| r.mapping[v]).collect();
                let (g, h) = heuristic_at(&a, &b, &cost, &prefix).unwrap();
                assert!(g + h <= r.ged + 1e-12, "seed {seed} depth {depth}");
            }
        }
    }

    #[test]
    fn budget_and_abort_are_reported() {
        let big = Graph::unlabeled(11, &[]).unwrap();
        let small = Graph::unlabeled(2, &[]).unwrap();
        assert!(matches!(
            exact_ged(&big, &small, &CostModel::default(), 10),
            Err(Error::GedBudgetExceeded { nodes: 11, budget: 10 })
        ));
        let a = gen_random_graph(6, 0.5, 1, 1).unwrap();
        let b = gen_random_graph(6, 0.2, 1, 2).unwrap();
        assert!(matches!(
            exact_ged_limited(&a, &b, &CostModel::default(), 10, 3),
            Err(Error::GedSearchAborted { expanded: 3 })
        ));
        let bad = CostModel {
            edge_ins: -1.0,
            ..CostModel::default()
        };
        assert!(exact_ged(&a, &b, &bad, 10).is_err());
        assert!(gen_ged_dataset(4, 11, 0).is_err());
    }

    #[test]
    fn dataset_contract() {
        let ds = gen_ged_dataset(10, 6, 3).unwrap();
        assert_eq!(ds.pairs.len(), 10 * 9 / 2 + 10);
        for p in &ds.pairs {
            let pair = ds.graph_pair(p).unwrap();
            let Target::Similarity(s) = pair.target else { panic!() };
            assert!(s > 0.0 && s <= 1.0);
            if p.i == p.j {
                assert_eq!(s, 1.0);
            }
        }
        let count = |s| ds.graph_split.iter().filter(|&&x| x == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (6, 2, 2));
        for p in ds.pairs.iter().filter(|p| p.split == Split::Train) {
            assert_eq!(ds.graph_split[p.i], Split::Train);
            assert_eq!(ds.graph_split[p.j], Split::Train);
        }
        assert_eq!(gen_ged_dataset(10, 6, 3).unwrap(), ds);
    }

    #[test]
    fn dataset_files_are_reproducible() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        gen_ged_dataset(8, 5, 1).unwrap().write(d1.path()).unwrap();
        gen_ged_dataset(8, 5, 1).unwrap().write(d2.path()).unwrap();
        for s in Split::ALL {
            let a = std::fs::read(d1.path().join(s.file_name())).unwrap();
            let b = std::fs::read(d2.path().join(s.file_name())).unwrap();
            assert_eq!(a, b);
        }
    }
}
