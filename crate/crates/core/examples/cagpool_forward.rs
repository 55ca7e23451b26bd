//! One forward pass of the pairwise model, showing the co-attention node
//! scores and which nodes each graph keeps.

use cagpool::graph::{gen_random_graph, GraphPair, Target};
use cagpool::model::{forward, InteractionMode, ModelConfig, ModelParams, Task};

fn main() -> cagpool::Result<()> {
    let a = gen_random_graph(8, 0.35, 3, 1)?;
    let b = gen_random_graph(6, 0.5, 3, 2)?;
    let pair = GraphPair::new(a, b, Target::Classes(vec![1.0, 0.0, -1.0]))?;

    let config = ModelConfig::new(3, 16, Task::Classification { num_classes: 3 }, InteractionMode::Cagpool);
    let params = ModelParams::init(&config, 7)?;
    println!("{} parameters in {} tensors", params.store.num_scalars(), params.store.len());

    let out = forward(&pair, &params, &config)?;
    let pooled = out.pooled.expect("cagpool reports its selection");
    println!("scores A {:.3?}", pooled.z_a);
    println!("kept A   {:?} of {}", pooled.idx_a, pooled.z_a.len());
    println!("scores B {:.3?}", pooled.z_b);
    println!("kept B   {:?} of {}", pooled.idx_b, pooled.z_b.len());
    println!("pooled A: {}x{} features, {} edges kept", pooled.x_a.rows(), pooled.x_a.cols(), pooled.adj_a.sum() / 2.0);
    println!("class probabilities {:.4?}", out.output);

    // the interaction modes side by side, same pair
    for mode in InteractionMode::ALL {
        let cfg = ModelConfig::new(3, 16, Task::Classification { num_classes: 3 }, mode);
        let p = ModelParams::init(&cfg, 7)?;
        println!("{:<15} {:.4?}", mode.name(), forward(&pair, &p, &cfg)?.output);
    }
    Ok(())
}
