use super::Graph;
use crate::error::{Error, Result};

/// Largest graph accepted by [`are_isomorphic`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

fn same_node(a: &Graph, i: usize, b: &Graph, j: usize) -> bool {
    match (a.label(i), b.label(j)) {
        (Some(x), Some(y)) => x == y,
        (None, None) => a.features().row(i) == b.features().row(j),
        _ => false,
    }
}

/// Exhaustive search for a label- and edge-preserving bijection.
///
/// Candidate bijections are enumerated depth-first; a branch is cut as soon
/// as the partial map breaks a label or an edge among mapped nodes.
pub fn are_isomorphic(a: &Graph, b: &Graph) -> Result<bool> {
    for g in [a, b] {
        if g.num_nodes() > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLargeForBruteForce {
                nodes: g.num_nodes(),
                limit: BRUTE_FORCE_LIMIT,
            });
        }
    }
    if a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges() {
        return Ok(false);
    }
    let n = a.num_nodes();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    Ok(extend(a, b, 0, &mut map, &mut used))
}

fn extend(a: &Graph, b: &Graph, i: usize, map: &mut [usize], used: &mut [bool]) -> bool {
    let n = a.num_nodes();
    if i == n {
        return true;
    }
    for j in 0..n {
        if used[j] || !same_node(a, i, b, j) {
            continue;
        }
        let consistent = (0..i).all(|k| a.has_edge(i, k) == b.has_edge(j, map[k]));
        if !consistent {
            continue;
        }
        map[i] = j;
        used[j] = true;
        if extend(a, b, i + 1, map, used) {
            return true;
        }
        used[j] = false;
    }
    map[i] = usize::MAX;
    false
}
