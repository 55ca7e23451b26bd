//! Finite-difference checks of the tape's backward rules.
//!
//! Each check builds a scalar from random inputs, compares the tape
//! gradient with central differences (`eps = 1e-5`) and reports the
//! largest `|analytic - numeric| / max(1, |analytic|)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{gen_random_graph, GraphPair, Target};
use crate::model::{forward_with, forward_on_tape, loss_on_tape, InteractionMode, ModelConfig, ModelParams, Task};
use crate::params::BoundParams;
use crate::pooling::CoAttentionKind;
use crate::tensor::{Tape, Tensor, Var};

pub const FD_EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Minimum distance of every relu input from zero in a model check.
pub const KINK_MARGIN: f64 = 1e-4;
const MAX_DRAWS: u64 = 64;

/// Builds a `1x1` value from the input handles.
pub type ScalarFn<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

fn eval(f: &ScalarFn, inputs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Largest relative error between tape gradients and central differences
/// over every scalar of every input.
pub fn finite_diff_check(f: &ScalarFn, inputs: &[Tensor], eps: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for e in 0..inputs[i].len() {
            let x = inputs[i].data()[e];
            probe[i].data_mut()[e] = x + eps;
            let up = eval(f, &probe)?;
            probe[i].data_mut()[e] = x - eps;
            let down = eval(f, &probe)?;
            probe[i].data_mut()[e] = x;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[e];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seeds: Vec<u64>,
    pub entries: Vec<CheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GradcheckOptions {
    /// Adds a custom op whose backward rule is deliberately wrong.
    pub inject_fault: bool,
}

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape")
}

/// `sum(out * w)` for a fixed random weight `w`, so every output entry
/// contributes a distinct sensitivity.
fn weighted_sum(tape: &mut Tape, out: Var, w: &Tensor) -> Result<Var> {
    let w = tape.leaf(w.clone())?;
    let prod = tape.elementwise_mul(out, w)?;
    tape.sum(prod)
}

struct OpCase {
    name: &'static str,
    inputs: Vec<Tensor>,
    weight: Option<Tensor>,
    build: Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>,
}

impl OpCase {
    fn run(&self) -> Result<f64> {
        let w = self.weight.clone();
        let build = &self.build;
        let f = move |tape: &mut Tape, v: &[Var]| -> Result<Var> {
            let out = build(tape, v)?;
            match &w {
                Some(w) => weighted_sum(tape, out, w),
                None => Ok(out),
            }
        };
        finite_diff_check(&f, &self.inputs, FD_EPS)
    }
}

fn op_cases(seed: u64, options: GradcheckOptions) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..5);
    let c = rng.gen_range(1..5);
    let k = rng.gen_range(1..5);
    let mut t = |rows, cols| uniform(&mut rng, rows, cols, -1.0, 1.0);
    let (a, b, a2) = (t(r, c), t(c, k), t(r, c));
    let row = t(1, c);
    let col = t(r, 1);
    let extra = t(r, 2);
    let wr = |rows, cols, rng: &mut ChaCha8Rng| Some(uniform(rng, rows, cols, -1.0, 1.0));
    let w_rk = wr(r, k, &mut rng);
    let w_rc = wr(r, c, &mut rng);
    let w_cr = wr(c, r, &mut rng);
    let w_r2c = wr(r, c + 2, &mut rng);
    let w_1c = wr(1, c, &mut rng);
    let cut = rng.gen_range(0..c);
    let w_slice = wr(r, c - cut, &mut rng);
    let gather: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..r)).collect();
    let w_gather = wr(gather.len(), c, &mut rng);
    let divisor = Tensor::scalar(rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
    let targets: Vec<f64> = (0..r * c).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut mask: Vec<bool> = (0..r * c).map(|_| rng.gen_bool(0.7)).collect();
    mask[0] = true;
    let factor = rng.gen_range(-2.0..2.0);
    // keep relu inputs away from the kink
    let away: Tensor = a.map(|x| if x.abs() < 1e-3 { x + 0.01 } else { x });

    let mut cases = vec![
        OpCase {
            name: "matmul",
            inputs: vec![a.clone(), b],
            weight: w_rk,
            build: Box::new(|t, v| t.matmul(v[0], v[1])),
        },
        OpCase {
            name: "add",
            inputs: vec![a.clone(), a2.clone()],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.add(v[0], v[1])),
        },
        OpCase {
            name: "add_row",
            inputs: vec![a.clone(), row],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.add(v[0], v[1])),
        },
        OpCase {
            name: "sub",
            inputs: vec![a.clone(), a2.clone()],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.sub(v[0], v[1])),
        },
        OpCase {
            name: "elementwise_mul",
            inputs: vec![a.clone(), a2.clone()],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.elementwise_mul(v[0], v[1])),
        },
        OpCase {
            name: "mul_col",
            inputs: vec![a.clone(), col],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.elementwise_mul(v[0], v[1])),
        },
        OpCase {
            name: "concat_cols",
            inputs: vec![a.clone(), extra],
            weight: w_r2c,
            build: Box::new(|t, v| t.concat_cols(&[v[0], v[1]])),
        },
        OpCase {
            name: "slice_cols",
            inputs: vec![a.clone()],
            weight: w_slice,
            build: Box::new(move |t, v| t.slice_cols(v[0], cut, c)),
        },
        OpCase {
            name: "mean_rows",
            inputs: vec![a.clone()],
            weight: w_1c,
            build: Box::new(|t, v| t.concat_rows_mean(v[0])),
        },
        OpCase {
            name: "sum",
            inputs: vec![a.clone()],
            weight: None,
            build: Box::new(|t, v| t.sum(v[0])),
        },
        OpCase {
            name: "relu",
            inputs: vec![away],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.relu(v[0])),
        },
        OpCase {
            name: "sigmoid",
            inputs: vec![a.clone()],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.sigmoid(v[0])),
        },
        OpCase {
            name: "tanh",
            inputs: vec![a.clone()],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.tanh(v[0])),
        },
        OpCase {
            name: "gather_rows",
            inputs: vec![a.clone()],
            weight: w_gather,
            build: Box::new(move |t, v| t.gather_rows(v[0], &gather)),
        },
        OpCase {
            name: "scalar_div",
            inputs: vec![a.clone(), divisor],
            weight: w_rc.clone(),
            build: Box::new(|t, v| t.scalar_div(v[0], v[1])),
        },
        OpCase {
            name: "l2_norm",
            inputs: vec![a.clone()],
            weight: None,
            build: Box::new(|t, v| t.l2_norm(v[0])),
        },
        OpCase {
            name: "transpose",
            inputs: vec![a.clone()],
            weight: w_cr,
            build: Box::new(|t, v| t.transpose(v[0])),
        },
        OpCase {
            name: "scale",
            inputs: vec![a.clone()],
            weight: w_rc.clone(),
            build: Box::new(move |t, v| t.scale(v[0], factor)),
        },
        OpCase {
            name: "bce_with_logits",
            inputs: vec![a.clone().map(|x| 3.0 * x)],
            weight: None,
            build: Box::new(move |t, v| t.bce_with_logits(v[0], &targets, &mask)),
        },
        OpCase {
            name: "custom",
            inputs: vec![a.clone()],
            weight: w_rc.clone(),
            build: Box::new(|t, v| custom_square(t, v[0], 1.0)),
        },
    ];
    if options.inject_fault {
        cases.push(OpCase {
            name: "custom.faulty",
            inputs: vec![a],
            weight: w_rc,
            build: Box::new(|t, v| custom_square(t, v[0], 2.0)),
        });
    }
    cases
}

/// Elementwise square as a user-defined op. `grad_factor` scales the
/// backward rule; anything but 1 makes it wrong.
fn custom_square(tape: &mut Tape, x: Var, grad_factor: f64) -> Result<Var> {
    let value = tape.value(x).map(|v| v * v);
    tape.custom(
        &[x],
        value,
        Box::new(move |inputs, _out, upstream| {
            let mut g = inputs[0].map(|v| 2.0 * grad_factor * v);
            for (gi, ui) in g.data_mut().iter_mut().zip(upstream.data()) {
                *gi *= ui;
            }
            vec![g]
        }),
    )
}

struct ModelCase {
    name: &'static str,
    mode: InteractionMode,
    kind: CoAttentionKind,
    task: Task,
}

const MODEL_CASES: [ModelCase; 5] = [
    ModelCase {
        name: "model.cagpool",
        mode: InteractionMode::Cagpool,
        kind: CoAttentionKind::Linear,
        task: Task::Classification { num_classes: 2 },
    },
    ModelCase {
        name: "model.cagpool-mlp",
        mode: InteractionMode::Cagpool,
        kind: CoAttentionKind::Mlp,
        task: Task::Classification { num_classes: 2 },
    },
    ModelCase {
        name: "model.cagpool-regression",
        mode: InteractionMode::Cagpool,
        kind: CoAttentionKind::Linear,
        task: Task::Regression,
    },
    ModelCase {
        name: "model.topkpool",
        mode: InteractionMode::Topkpool,
        kind: CoAttentionKind::Linear,
        task: Task::Classification { num_classes: 2 },
    },
    ModelCase {
        name: "model.sagpool",
        mode: InteractionMode::Sagpool,
        kind: CoAttentionKind::Linear,
        task: Task::Classification { num_classes: 2 },
    },
];

/// Checks the whole model's gradient with respect to every parameter,
/// with the node selection frozen at the unperturbed values.
pub fn model_check(seed: u64, config: &ModelConfig, pair: &GraphPair) -> Result<f64> {
    let params = ModelParams::init(config, seed)?;
    let selection = forward_with(pair, &params, config, None)?
        .pooled
        .map(|p| p.selection());
    let names: Vec<String> = params.store.names().map(str::to_string).collect();
    let inputs: Vec<Tensor> = params.store.iter().map(|(_, t)| t.clone()).collect();
    let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let bound = BoundParams::from_vars(names.iter().cloned().zip(vars.iter().copied()));
        let out = forward_on_tape(tape, &bound, pair, config, selection.as_ref())?;
        loss_on_tape(tape, out.logits, &pair.target, config.task)
    };
    finite_diff_check(&f, &inputs, FD_EPS)
}

fn draw_model_case(rng: &mut ChaCha8Rng, case: &ModelCase) -> Result<(ModelConfig, GraphPair)> {
    let alphabet = 3;
    let mut config = ModelConfig::new(alphabet, 4, case.task, case.mode);
    config.gcn.num_layers = 2;
    config.head_hidden = 5;
    config.coattention = case.kind;
    let a = gen_random_graph(rng.gen_range(3..8), 0.4, alphabet, rng.gen())?;
    let b = gen_random_graph(rng.gen_range(3..8), 0.4, alphabet, rng.gen())?;
    let target = match case.task {
        Task::Regression => Target::Similarity(rng.gen_range(0.05..1.0)),
        Task::Classification { num_classes } => {
            let mut c: Vec<f64> = (0..num_classes).map(|_| rng.gen_range(0..2) as f64).collect();
            if rng.gen_bool(0.3) {
                c[num_classes - 1] = -1.0;
            }
            Target::Classes(c)
        }
    };
    Ok((config, GraphPair::new(a, b, target)?))
}

/// Config, pair and parameter seed for one model check. Draws that put a
/// relu input within [`KINK_MARGIN`] of zero are redrawn, since the loss
/// is not differentiable there.
fn model_case_inputs(seed: u64, case: &ModelCase) -> Result<(ModelConfig, GraphPair, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11ce);
    for attempt in 0..MAX_DRAWS {
        let (config, pair) = draw_model_case(&mut rng, case)?;
        let param_seed = seed.wrapping_add(attempt << 32);
        let params = ModelParams::init(&config, param_seed)?;
        let mut tape = Tape::new();
        let bound = params.store.bind(&mut tape)?;
        forward_on_tape(&mut tape, &bound, &pair, &config, None)?;
        if tape.relu_margin() >= KINK_MARGIN {
            return Ok((config, pair, param_seed));
        }
    }
    Err(Error::Config(format!(
        "{}: no kink-free input in {MAX_DRAWS} draws for seed {seed}",
        case.name
    )))
}

/// Runs every op check and every model check for each seed, keeping the
/// worst error per component.
pub fn run_gradcheck(seeds: &[u64], options: GradcheckOptions) -> Result<GradcheckReport> {
    let mut entries: Vec<CheckEntry> = Vec::new();
    let mut record = |name: &str, err: f64| {
        match entries.iter_mut().find(|e| e.name == name) {
            Some(e) => e.max_rel_error = e.max_rel_error.max(err),
            None => entries.push(CheckEntry {
                name: name.to_string(),
                max_rel_error: err,
                passed: true,
            }),
        };
    };
    for &seed in seeds {
        for case in op_cases(seed, options) {
            let err = case.run().map_err(|e| Error::Config(format!("{}: {e}", case.name)))?;
            record(case.name, err);
        }
        for case in &MODEL_CASES {
            let (config, pair, param_seed) = model_case_inputs(seed, case)?;
            record(case.name, model_check(param_seed, &config, &pair)?);
        }
    }
    for e in &mut entries {
        e.passed = e.max_rel_error < TOLERANCE;
    }
    Ok(GradcheckReport {
        seeds: seeds.to_vec(),
        entries,
    })
}
