//! Graph-level versus node-level interaction cost as the graphs grow.
//!
//! `cargo run --release --example bench_interaction [reps]`

use cagpool::bench::{run_bench, BenchConfig};

fn main() -> cagpool::Result<()> {
    let reps = std::env::args().nth(1).and_then(|r| r.parse().ok()).unwrap_or(200);
    let report = run_bench(&BenchConfig {
        reps,
        warmup: reps / 10,
        ..BenchConfig::default()
    })?;
    println!("{:>6} {:>14} {:>14} {:>8}", "nodes", "node-level", "graph-level", "faster");
    for s in &report.sizes {
        println!(
            "{:>6} {:>12.1}us {:>12.1}us {:>7.1}%",
            s.nodes,
            s.node_level_median_s * 1e6,
            s.graph_level_median_s * 1e6,
            100.0 * s.speedup
        );
    }
    println!(
        "log-log slope: node-level {:.2}, graph-level {:.2}",
        report.node_level_exponent, report.graph_level_exponent
    );
    Ok(())
}
