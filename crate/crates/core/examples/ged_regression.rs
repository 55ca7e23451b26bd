//! Learns graph similarity from exact edit-distance labels and compares the
//! result with always predicting the mean training similarity.
//!
//! `cargo run --release --example ged_regression [graphs] [epochs]`

use cagpool::ged::{gen_ged_dataset, Split, GED_ALPHABET};
use cagpool::model::{InteractionMode, ModelConfig, Task};
use cagpool::pooling::Readout;
use cagpool::train::{constant_baseline_mse, train, Splits, TrainConfig};

fn main() -> cagpool::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let graphs = args.next().unwrap_or(40);
    let epochs = args.next().unwrap_or(30);

    let ds = gen_ged_dataset(graphs, 8, 1)?;
    let data = Splits {
        train: ds.split(Split::Train)?,
        val: ds.split(Split::Val)?,
        test: ds.split(Split::Test)?,
    };
    println!("{} graphs, {} train / {} val / {} test pairs", graphs, data.train.len(), data.val.len(), data.test.len());

    let config = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let baseline = constant_baseline_mse(&data.train, &data.test)?;
    for readout in [Readout::Mean, Readout::Sum] {
        let mut model = ModelConfig::new(GED_ALPHABET, 32, Task::Regression, InteractionMode::Cagpool);
        model.readout = readout;
        model.symmetric = true;
        let out = train(&model, &data, &config, &mut |_| {})?;
        let r = out.test.expect("test split is non-empty").report;
        println!(
            "{readout:?} readout: best epoch {}, test mse {:.5} (constant {baseline:.5}), spearman {:.4}, kendall {:.4}",
            out.best_epoch,
            r.mse.unwrap_or(f64::NAN),
            r.spearman_rho.unwrap_or(f64::NAN),
            r.kendall_tau.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
