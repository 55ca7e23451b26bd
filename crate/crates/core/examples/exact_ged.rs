//! Exact graph edit distance, an optimal edit path, and the similarity
//! label derived from it.

use cagpool::ged::{exact_ged, gen_ged_dataset, CostModel, Split, DEFAULT_NODE_BUDGET};
use cagpool::graph::{permute, Graph, Permutation};

fn main() -> cagpool::Result<()> {
    let cost = CostModel::default();
    let triangle = Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)])?;
    let path = Graph::unlabeled(3, &[(0, 1), (1, 2)])?;
    let r = exact_ged(&triangle, &path, &cost, DEFAULT_NODE_BUDGET)?;
    println!("triangle -> path: ged {} via {:?}", r.ged, r.edit_path(&triangle, &path, &cost));

    let a = Graph::with_labels(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 1, 1, 2], 3)?;
    let b = Graph::with_labels(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], vec![0, 1, 2, 2, 1], 3)?;
    let r = exact_ged(&a, &b, &cost, DEFAULT_NODE_BUDGET)?;
    println!(
        "labeled path -> 5-cycle: ged {}, nged {:.3}, similarity {:.4}, {} states expanded",
        r.ged, r.nged, r.similarity, r.expanded
    );
    for op in r.edit_path(&a, &b, &cost) {
        println!("  {op:?}");
    }

    let renumbered = permute(&b, &Permutation::new(vec![3, 4, 0, 1, 2])?)?;
    let r = exact_ged(&b, &renumbered, &cost, DEFAULT_NODE_BUDGET)?;
    println!("graph vs renumbered copy: ged {}, similarity {}", r.ged, r.similarity);

    let ds = gen_ged_dataset(12, 7, 3)?;
    for split in Split::ALL {
        let pairs: Vec<_> = ds.pairs.iter().filter(|p| p.split == split).collect();
        let mean = pairs.iter().map(|p| p.ged).sum::<f64>() / pairs.len().max(1) as f64;
        println!("{split:?}: {} pairs, mean ged {mean:.2}", pairs.len());
    }
    Ok(())
}
