//! Undirected simple graphs with per-node labels and features.

pub(crate) mod generate;
mod iso;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generate::{
    gen_motif_pair_dataset, gen_motif_pairs_with_plans, gen_random_graph, random_permutation, MotifPlan, MOTIF_ALPHABET,
};
pub use iso::{are_isomorphic, BRUTE_FORCE_LIMIT};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An undirected simple graph. Edges are stored once as `(u, v)` with
/// `u < v`, sorted; self-loops are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<usize>>,
    features: Tensor,
}

impl Graph {
    /// Validates and normalizes the edge list. Self-loops, out-of-range
    /// endpoints and repeated edges are rejected.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        labels: Option<Vec<usize>>,
        features: Tensor,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("repeated edge ({u}, {v})")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{} labels for {num_nodes} nodes",
                    l.len()
                )));
            }
        }
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        Ok(Self {
            num_nodes,
            edges: set.into_iter().collect(),
            labels,
            features,
        })
    }

    /// Graph whose features are the one-hot encoding of `labels` over an
    /// alphabet of `alphabet` symbols.
    pub fn with_labels(
        num_nodes: usize,
        edges: &[(usize, usize)],
        labels: Vec<usize>,
        alphabet: usize,
    ) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= alphabet) {
            return Err(Error::InvalidGraph(format!(
                "label {bad} outside alphabet of {alphabet}"
            )));
        }
        let features = one_hot(&labels, alphabet);
        Self::new(num_nodes, edges, Some(labels), features)
    }

    /// Unlabeled graph with a single constant feature per node.
    pub fn unlabeled(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(num_nodes, edges, None, Tensor::filled(num_nodes, 1, 1.0))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Raw 0/1 adjacency matrix (zero diagonal).
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_nodes;
        let mut a = Tensor::zeros(n, n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Adjacency with self-loops, `A + I`.
    pub fn adjacency_with_self_loops(&self) -> Tensor {
        let mut a = self.adjacency();
        for i in 0..self.num_nodes {
            a.set(i, i, 1.0);
        }
        a
    }

    /// Label of node `i`, or `None` for unlabeled graphs.
    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Copy of this graph with row `i` of the features replaced by zeros.
    pub fn with_zeroed_features(&self, nodes: &[usize]) -> Self {
        let mut g = self.clone();
        let cols = g.features.cols();
        for &i in nodes {
            for c in 0..cols {
                g.features.set(i, c, 0.0);
            }
        }
        g
    }

    /// Hop distances from `source` (`usize::MAX` when unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let adj = self.neighbors();
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

pub fn one_hot(labels: &[usize], alphabet: usize) -> Tensor {
    let mut f = Tensor::zeros(labels.len(), alphabet);
    for (i, &l) in labels.iter().enumerate() {
        f.set(i, l, 1.0);
    }
    f
}

/// A bijection on `0..n`: node `i` of the input moves to `mapping[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &m in &mapping {
            if m >= mapping.len() || seen[m] {
                return Err(Error::InvalidPermutation(format!(
                    "{mapping:?} is not a bijection"
                )));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Self { mapping: inv }
    }
}

/// Relabels the nodes of `g` by `p`, carrying labels and feature rows along.
pub fn permute(g: &Graph, p: &Permutation) -> Result<Graph> {
    let n = g.num_nodes();
    if p.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "permutation of {} elements applied to {n} nodes",
            p.len()
        )));
    }
    let edges: Vec<_> = g
        .edges
        .iter()
        .map(|&(u, v)| (p.apply(u), p.apply(v)))
        .collect();
    let labels = g.labels.as_ref().map(|l| {
        let mut out = vec![0; n];
        for (i, &lab) in l.iter().enumerate() {
            out[p.apply(i)] = lab;
        }
        out
    });
    let inv = p.inverse();
    let features = g.features.gather_rows(inv.mapping())?;
    Graph::new(n, &edges, labels, features)
}

/// Row `i` of the result is row `inverse(p)(i)` of `t`, i.e. rows move
/// the same way nodes do under [`permute`].
pub fn permute_rows(t: &Tensor, p: &Permutation) -> Result<Tensor> {
    t.gather_rows(p.inverse().mapping())
}

/// Learning target of a pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    /// Scalar similarity in `(0, 1]`.
    Similarity(f64),
    /// One entry per class: 1 positive, 0 negative, any negative value
    /// marks the class as unobserved (excluded from loss and metrics).
    Classes(Vec<f64>),
}

impl Target {
    pub fn validate(&self) -> Result<()> {
        match self {
            Target::Similarity(s) if !(*s > 0.0 && *s <= 1.0) => Err(Error::InvalidTarget(
                format!("similarity {s} outside (0, 1]"),
            )),
            Target::Classes(c) if c.is_empty() => {
                Err(Error::InvalidTarget("empty class vector".into()))
            }
            Target::Classes(c) => match c.iter().find(|v| !(**v < 0.0 || **v == 0.0 || **v == 1.0)) {
                Some(v) => Err(Error::InvalidTarget(format!("class target {v} is not 0/1"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphPair {
    pub a: Graph,
    pub b: Graph,
    pub target: Target,
}

impl GraphPair {
    pub fn new(a: Graph, b: Graph, target: Target) -> Result<Self> {
        target.validate()?;
        Ok(Self { a, b, target })
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            target: self.target.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct PairJson {
    a: GraphJson,
    b: GraphJson,
    target: Target,
}

impl GraphJson {
    fn from_graph(g: &Graph) -> Self {
        Self {
            n: g.num_nodes,
            edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
            labels: g.labels.clone(),
            features: Some(g.features.to_rows()),
        }
    }

    /// Without explicit features, labels are one-hot encoded over
    /// `alphabet` symbols and unlabeled graphs get a constant feature.
    fn into_graph(self, alphabet: usize) -> Result<Graph> {
        let edges: Vec<_> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        match (self.features, self.labels) {
            (Some(rows), labels) => {
                let features = if rows.is_empty() {
                    Tensor::zeros(0, 0)
                } else {
                    Tensor::from_rows(&rows)?
                };
                Graph::new(self.n, &edges, labels, features)
            }
            (None, Some(labels)) => Graph::with_labels(self.n, &edges, labels, alphabet),
            (None, None) => Graph::unlabeled(self.n, &edges),
        }
    }

    fn max_label(&self) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.iter().copied().max())
    }
}

pub fn graph_to_json(g: &Graph) -> serde_json::Value {
    serde_json::to_value(GraphJson::from_graph(g)).expect("graph serializes")
}

pub fn graph_from_json(v: serde_json::Value) -> Result<Graph> {
    let gj: GraphJson = serde_json::from_value(v)?;
    let alphabet = gj.max_label().map_or(1, |m| m + 1);
    gj.into_graph(alphabet)
}

pub fn pair_to_json_line(p: &GraphPair) -> String {
    serde_json::to_string(&PairJson {
        a: GraphJson::from_graph(&p.a),
        b: GraphJson::from_graph(&p.b),
        target: p.target.clone(),
    })
    .expect("pair serializes")
}

pub fn write_pairs(path: &Path, pairs: &[GraphPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        writeln!(w, "{}", pair_to_json_line(p))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON-lines pair file. Graphs that carry labels but no features
/// are one-hot encoded over the largest label seen anywhere in the file.
pub fn read_pairs(path: &Path) -> Result<Vec<GraphPair>> {
    let reader = BufReader::new(File::open(path)?);
    let mut raw = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        raw.push(serde_json::from_str::<PairJson>(&line)?);
    }
    let alphabet = raw
        .iter()
        .flat_map(|p| [p.a.max_label(), p.b.max_label()])
        .flatten()
        .max()
        .map_or(1, |m| m + 1);
    raw.into_iter()
        .map(|p| GraphPair::new(p.a.into_graph(alphabet)?, p.b.into_graph(alphabet)?, p.target))
        .collect()
}
