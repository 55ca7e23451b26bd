//! Building labeled graphs, permuting them and checking isomorphism.

use cagpool::graph::{are_isomorphic, gen_random_graph, permute, Graph, Permutation};

fn main() -> cagpool::Result<()> {
    // a labeled 4-cycle and the same cycle with its nodes renumbered
    let cycle = Graph::with_labels(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], vec![0, 0, 1, 1], 2)?;
    let p = Permutation::new(vec![2, 0, 3, 1])?;
    let shuffled = permute(&cycle, &p)?;
    println!("cycle edges     {:?}", cycle.edges());
    println!("permuted edges  {:?}", shuffled.edges());
    println!("permuted labels {:?}", shuffled.labels().unwrap());
    println!("isomorphic: {}", are_isomorphic(&cycle, &shuffled)?);

    // same degree sequence, different structure
    let path = Graph::with_labels(4, &[(0, 1), (1, 2), (2, 3), (0, 2)], vec![0, 0, 1, 1], 2)?;
    println!("cycle vs triangle-with-tail: {}", are_isomorphic(&cycle, &path)?);

    let g = gen_random_graph(7, 0.4, 3, 42)?;
    println!(
        "random graph: {} nodes, {} edges, degrees {:?}, one-hot features {}x{}",
        g.num_nodes(),
        g.num_edges(),
        g.degrees(),
        g.features().rows(),
        g.features().cols()
    );
    Ok(())
}
