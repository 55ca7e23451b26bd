//! Mini-batch training with best-on-validation checkpointing.
//!
//! Runs are deterministic for a given seed: initialization and shuffling
//! use seeded generators, and per-pair gradients (computed in parallel)
//! are summed in a fixed order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphPair, Target};
use crate::metrics::{classification_report, mean_std, mse, regression_report, MetricReport, DEFAULT_TOP_K};
use crate::model::{forward, loss, pair_gradients, Checkpoint, ModelConfig, ModelParams, Task};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::ParamStore;

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "need lr >= 0 and positive epochs and batch size, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Train / validation / test pairs.
#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<GraphPair>,
    pub val: Vec<GraphPair>,
    pub test: Vec<GraphPair>,
}

/// One JSON log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub report: MetricReport,
    pub outputs: Vec<Vec<f64>>,
}

/// Forward pass over `pairs` (in parallel) plus task metrics.
pub fn evaluate(pairs: &[GraphPair], params: &ModelParams, config: &ModelConfig, top_k: usize) -> Result<Evaluation> {
    if pairs.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let outputs = pairs
        .par_iter()
        .map(|p| forward(p, params, config).map(|o| o.output))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (o, p) in outputs.iter().zip(pairs) {
        total += loss(o, &p.target, config.task)?;
    }
    let report = match config.task {
        Task::Classification { .. } => {
            let targets: Vec<Vec<f64>> = pairs.iter().map(|p| classes_of(&p.target)).collect();
            classification_report(&outputs, &targets, top_k)?
        }
        Task::Regression => {
            let pred: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
            regression_report(&pred, &similarities(pairs))?
        }
    };
    Ok(Evaluation {
        loss: total / pairs.len() as f64,
        report,
        outputs,
    })
}

fn classes_of(t: &Target) -> Vec<f64> {
    match t {
        Target::Classes(c) => c.clone(),
        Target::Similarity(s) => vec![*s],
    }
}

pub fn similarities(pairs: &[GraphPair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| match p.target {
            Target::Similarity(s) => s,
            Target::Classes(ref c) => c[0],
        })
        .collect()
}

/// MSE of always predicting the mean training similarity.
pub fn constant_baseline_mse(train: &[GraphPair], test: &[GraphPair]) -> Result<f64> {
    let t = similarities(train);
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let test = similarities(test);
    mse(&vec![mean; test.len()], &test)
}

/// Larger is better.
fn selection_score(task: Task, eval: &Evaluation) -> f64 {
    match task {
        Task::Classification { .. } => eval.report.auroc.unwrap_or(f64::NEG_INFINITY),
        Task::Regression => -eval.report.mse.unwrap_or(f64::INFINITY),
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation score.
    pub best: Checkpoint,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: ModelParams,
    pub log: Vec<EpochLog>,
    pub test: Option<Evaluation>,
}

fn sum_into(acc: &mut ParamStore, g: &ParamStore) -> Result<()> {
    for (name, t) in g.iter() {
        if !acc.contains(name) {
            acc.insert(name, t.clone());
            continue;
        }
        let a = acc.get_mut(name)?;
        for (x, y) in a.data_mut().iter_mut().zip(t.data()) {
            *x += y;
        }
    }
    Ok(())
}

/// Trains from a fresh initialization seeded by `train.seed`.
pub fn train(
    model: &ModelConfig,
    data: &Splits,
    config: &TrainConfig,
    on_log: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let params = ModelParams::init(model, config.seed)?;
    train_from(model, params, data, config, on_log)
}

pub fn train_from(
    model: &ModelConfig,
    mut params: ModelParams,
    data: &Splits,
    config: &TrainConfig,
    on_log: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    model.validate()?;
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    params.check_against(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let adam = config.adam();
    let mut state = AdamState::default();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| pair_gradients(&data.train[i], &params, model))
                .collect::<Vec<_>>();
            let mut grads = ParamStore::new();
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r.map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NanLoss {
                        epoch,
                        batch: b,
                        norms: format!("{:?}", params.store.norms()),
                    },
                    other => other,
                })?;
                batch_loss += l;
                sum_into(&mut grads, &g)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NanLoss {
                    epoch,
                    batch: b,
                    norms: format!("{:?}", params.store.norms()),
                });
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, g) in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            epoch_loss += batch_loss;
            adam_step(&mut params.store, &grads, &mut state, &adam)?;
        }
        let train_log = EpochLog {
            epoch,
            split: "train".into(),
            loss: epoch_loss / data.train.len() as f64,
            metrics: MetricReport::default(),
        };
        on_log(&train_log);
        log.push(train_log);

        let selection = if data.val.is_empty() { &data.train } else { &data.val };
        let eval = evaluate(selection, &params, model, config.top_k)?;
        let entry = EpochLog {
            epoch,
            split: if data.val.is_empty() { "train-eval" } else { "val" }.into(),
            loss: eval.loss,
            metrics: eval.report.clone(),
        };
        on_log(&entry);
        log.push(entry);
        let score = selection_score(model.task, &eval);
        if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    let test = if data.test.is_empty() {
        None
    } else {
        let eval = evaluate(&data.test, &best_params, model, config.top_k)?;
        let entry = EpochLog {
            epoch: best_epoch,
            split: "test".into(),
            loss: eval.loss,
            metrics: eval.report.clone(),
        };
        on_log(&entry);
        log.push(entry);
        Some(eval)
    };
    Ok(TrainOutcome {
        best: Checkpoint {
            config: model.clone(),
            params: best_params.store,
        },
        best_epoch,
        last: params,
        log,
        test,
    })
}

/// Mean and standard deviation of each metric over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricReport>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

pub fn aggregate(seeds: &[u64], reports: Vec<MetricReport>) -> SeedSummary {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &reports {
        if let Ok(serde_json::Value::Object(m)) = serde_json::to_value(r) {
            for (k, v) in m {
                if let Some(x) = v.as_f64() {
                    columns.entry(k).or_default().push(x);
                }
            }
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (k, xs) in columns {
        let (m, s) = mean_std(&xs);
        mean.insert(k.clone(), m);
        std.insert(k, s);
    }
    SeedSummary {
        seeds: seeds.to_vec(),
        per_seed: reports,
        mean,
        std,
    }
}

/// Trains once per seed and aggregates the test reports.
pub fn train_seeds(model: &ModelConfig, data: &Splits, config: &TrainConfig, seeds: &[u64]) -> Result<SeedSummary> {
    let mut reports = Vec::new();
    for &seed in seeds {
        let cfg = TrainConfig { seed, ..config.clone() };
        let out = train(model, data, &cfg, &mut |_| {})?;
        let test = out
            .test
            .ok_or_else(|| Error::Config("multi-seed aggregation needs a test split".into()))?;
        reports.push(test.report);
    }
    Ok(aggregate(seeds, reports))
}
