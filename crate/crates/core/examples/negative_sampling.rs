//! Drawing negatives for interaction triples from the degree^0.75 law.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cagpool::graph::gen_random_graph;
use cagpool::sampler::{negative_sample, DdiData, PositiveSet, SamplerState, DEFAULT_RETRIES};

fn main() -> cagpool::Result<()> {
    let state = SamplerState::new(vec![1, 16])?;
    println!("counts [1, 16] -> probabilities {:.4?}", state.probs);

    let positives = vec![(0, 1, 0), (0, 2, 0), (1, 2, 1), (3, 0, 1), (3, 4, 0), (2, 4, 1)];
    let state = SamplerState::from_positives(5, &positives)?;
    let known = PositiveSet::new(&positives);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("drug counts {:?}, probabilities {:.3?}", state.counts, state.probs);
    for &p in &positives {
        let neg = negative_sample(p, &state, &known, &mut rng, DEFAULT_RETRIES)?;
        println!("positive {p:?} -> negative {neg:?}");
    }

    // training pairs with two negatives per positive
    let drugs = (0..5).map(|i| gen_random_graph(6, 0.4, 3, i)).collect::<Result<_, _>>()?;
    let data = DdiData {
        drugs,
        positives,
        num_classes: 2,
    };
    let pairs = data.pairs_with_negatives(2, &mut rng)?;
    for pair in pairs.iter().take(6) {
        println!("target {:?}", pair.target);
    }
    println!("{} pairs in total", pairs.len());
    Ok(())
}
