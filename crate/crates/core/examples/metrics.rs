//! Ranking and regression metrics on small hand-made inputs.

use cagpool::metrics::{ap_at_k, auprc, auroc, classification_report, kendall, mse, regression_report, spearman};

fn main() -> cagpool::Result<()> {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.8, 0.2];
    let labels = [false, false, true, true, false, true];
    println!("auroc {:.4}", auroc(&scores, &labels)?);
    println!("auprc {:.4}", auprc(&scores, &labels)?);
    println!("precision@2 {:.4}", ap_at_k(&scores, &labels, 2)?);

    let pred = [0.9, 0.3, 0.5, 0.5, 0.1];
    let target = [1.0, 0.2, 0.6, 0.4, 0.0];
    println!("mse {:.4}, spearman {:.4}, kendall {:.4}", mse(&pred, &target)?, spearman(&pred, &target)?, kendall(&pred, &target)?);

    // two classes; -1 marks an unobserved entry
    let outputs = vec![vec![0.9, 0.2], vec![0.1, 0.7], vec![0.6, 0.4], vec![0.3, 0.9]];
    let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, -1.0], vec![0.0, 1.0]];
    println!("{}", serde_json::to_string(&classification_report(&outputs, &targets, 50)?)?);
    println!("{}", serde_json::to_string(&regression_report(&pred, &target)?)?);
    Ok(())
}
