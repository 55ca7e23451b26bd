//! Trains co-attention pooling and the siamese baseline on the synthetic
//! motif-pair task: a pair is positive when graph A holds a triangle and
//! graph B holds a 4-cycle.
//!
//! `cargo run --release --example train_motif [pairs] [epochs]`

use cagpool::graph::{gen_motif_pair_dataset, MOTIF_ALPHABET};
use cagpool::model::{InteractionMode, ModelConfig, Task};
use cagpool::train::{train, Splits, TrainConfig};

fn main() -> cagpool::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let pairs = args.next().unwrap_or(600);
    let epochs = args.next().unwrap_or(20);

    let all = gen_motif_pair_dataset(pairs, 7)?;
    let (train_end, val_end) = (pairs * 2 / 3, pairs * 5 / 6);
    let data = Splits {
        train: all[..train_end].to_vec(),
        val: all[train_end..val_end].to_vec(),
        test: all[val_end..].to_vec(),
    };
    let config = TrainConfig {
        epochs,
        seed: 3,
        ..TrainConfig::default()
    };
    for mode in [InteractionMode::Cagpool, InteractionMode::SiameseConcat] {
        let model = ModelConfig::new(MOTIF_ALPHABET, 32, Task::Classification { num_classes: 1 }, mode);
        let out = train(&model, &data, &config, &mut |log| {
            if log.split == "val" {
                println!("{:<15} epoch {:>3} val loss {:.4} auroc {:.4}", mode.name(), log.epoch, log.loss, log.metrics.auroc.unwrap_or(f64::NAN));
            }
        })?;
        let test = out.test.expect("test split is non-empty").report;
        println!(
            "{:<15} best epoch {}, test auroc {:.4}, auprc {:.4}",
            mode.name(),
            out.best_epoch,
            test.auroc.unwrap_or(f64::NAN),
            test.auprc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
