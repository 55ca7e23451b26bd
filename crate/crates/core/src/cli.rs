//! Command-line driver.
//!
//! Every command resolves its arguments into an [`Invocation`], runs it and
//! writes a [`RunManifest`] holding that invocation, so `replay` can run
//! it again. Exit codes: 0 success, 1 usage, 2 validation failure,
//! 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, BenchConfig};
use crate::error::Error;
use crate::gcn::GcnConfig;
use crate::ged::{gen_ged_dataset, Split};
use crate::gradcheck::{run_gradcheck, GradcheckOptions};
use crate::graph::{gen_motif_pair_dataset, read_pairs, write_pairs, GraphPair, Target};
use crate::manifest::{build_id, manifest_path, now_ms, RunManifest};
use crate::model::{forward, Checkpoint, InteractionMode, ModelConfig, Task};
use crate::pooling::{CoAttentionKind, PoolingRatio, Readout};
use crate::train::{aggregate, train, Splits, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::CheckFailed(_) => 3,
            CliError::Run(e) => match e {
                Error::NonFinite { .. }
                | Error::NanLoss { .. }
                | Error::DegenerateCoAttention { .. }
                | Error::GedBudgetExceeded { .. }
                | Error::GedSearchAborted { .. } => 3,
                _ => 2,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cagpool", version, about = "Co-attention graph pooling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a GED-labelled pair dataset split 60/20/20 by graph.
    GenGed(GenGedArgs),
    /// Generate the synthetic motif-pair classification dataset.
    GenMotif(GenMotifArgs),
    /// Train a model on a pair dataset.
    Train(TrainArgs),
    /// Check every backward rule and the full model against finite differences.
    Gradcheck(GradcheckArgs),
    /// Time graph-level against node-level interaction.
    BenchInteraction(BenchArgs),
    /// Dump node scores and selections of a trained pooling model.
    ExportAttention(ExportArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenGedArgs {
    #[arg(long)]
    pub graphs: usize,
    #[arg(long, default_value_t = 10)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMotifArgs {
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 500)]
    pub val: usize,
    #[arg(long, default_value_t = 500)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Multi-label interaction classification.
    Ddi,
    /// Similarity regression.
    Ged,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: TaskKind,
    #[arg(long, value_enum)]
    mode: InteractionMode,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

fn default_hidden() -> usize {
    32
}
fn default_layers() -> usize {
    3
}
fn default_post() -> usize {
    1
}
fn default_bins() -> usize {
    16
}

/// Architecture settings of a training config file; the input width and
/// task come from the data and the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default)]
    pub head_hidden: Option<usize>,
    #[serde(default)]
    pub k: PoolingRatio,
    #[serde(default = "default_post")]
    pub post_pool_layers: usize,
    #[serde(default)]
    pub coattention: CoAttentionKind,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub readout: Readout,
}

impl Default for ModelSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ModelSpec {
    pub fn model_config(&self, in_dim: usize, task: Task, mode: InteractionMode) -> ModelConfig {
        ModelConfig {
            gcn: GcnConfig {
                num_layers: self.num_layers,
                in_dim,
                hidden_dim: self.hidden_dim,
            },
            k: self.k,
            post_pool_layers: self.post_pool_layers,
            head_hidden: self.head_hidden.unwrap_or(self.hidden_dim),
            task,
            mode,
            coattention: self.coattention,
            symmetric: self.symmetric,
            histogram_bins: self.histogram_bins,
            readout: self.readout,
        }
    }
}

/// Contents of a `--config` file for `train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Directory with `train.jsonl` and optional `val.jsonl`, `test.jsonl`.
    /// Relative paths are resolved against the config file's directory.
    pub data: PathBuf,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Seeds to train with; defaults to `train.seed` alone.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.train.seed])
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value = "gradcheck.json")]
    pub out: PathBuf,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200")]
    pub nodes: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "bench_report.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A fully resolved command, as stored in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    GenGed(GenGedArgs),
    GenMotif(GenMotifArgs),
    Train {
        task: TaskKind,
        mode: InteractionMode,
        config: RunConfig,
        out: PathBuf,
    },
    Gradcheck(GradcheckArgs),
    BenchInteraction(BenchArgs),
    ExportAttention(ExportArgs),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::GenGed(_) => "gen-ged",
            Invocation::GenMotif(_) => "gen-motif",
            Invocation::Train { .. } => "train",
            Invocation::Gradcheck(_) => "gradcheck",
            Invocation::BenchInteraction(_) => "bench-interaction",
            Invocation::ExportAttention(_) => "export-attention",
        }
    }

    fn out(&self) -> (&Path, bool) {
        match self {
            Invocation::GenGed(a) => (&a.out, true),
            Invocation::GenMotif(a) => (&a.out, true),
            Invocation::Train { out, .. } => (out, true),
            Invocation::Gradcheck(a) => (&a.out, false),
            Invocation::BenchInteraction(a) => (&a.out, false),
            Invocation::ExportAttention(a) => (&a.out, false),
        }
    }

    pub fn with_out(mut self, path: PathBuf) -> Self {
        match &mut self {
            Invocation::GenGed(a) => a.out = path,
            Invocation::GenMotif(a) => a.out = path,
            Invocation::Train { out, .. } => *out = path,
            Invocation::Gradcheck(a) => a.out = path,
            Invocation::BenchInteraction(a) => a.out = path,
            Invocation::ExportAttention(a) => a.out = path,
        }
        self
    }

    pub fn manifest_path(&self) -> PathBuf {
        let (out, is_dir) = self.out();
        manifest_path(out, is_dir)
    }

    fn seeds(&self) -> Vec<u64> {
        match self {
            Invocation::GenGed(a) => vec![a.seed],
            Invocation::GenMotif(a) => vec![a.seed],
            Invocation::Train { config, .. } => config.seeds(),
            Invocation::Gradcheck(a) => (a.seed..a.seed + a.seeds).collect(),
            Invocation::BenchInteraction(a) => vec![a.seed],
            Invocation::ExportAttention(_) => vec![],
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    let invocation = match command {
        Command::GenGed(a) => Invocation::GenGed(a),
        Command::GenMotif(a) => Invocation::GenMotif(a),
        Command::Train(a) => resolve_train(a)?,
        Command::Gradcheck(a) => Invocation::Gradcheck(a),
        Command::BenchInteraction(a) => Invocation::BenchInteraction(a),
        Command::ExportAttention(a) => Invocation::ExportAttention(a),
        Command::Replay(a) => {
            let manifest = RunManifest::load(&a.manifest)
                .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", a.manifest.display())))?;
            let inv: Invocation = serde_json::from_value(manifest.invocation).map_err(Error::from)?;
            match a.out {
                Some(out) => inv.with_out(out),
                None => inv,
            }
        }
    };
    execute(&invocation).map(|_| ())
}

fn resolve_train(a: TrainArgs) -> CliResult<Invocation> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", a.config.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text).map_err(Error::from)?;
    if config.data.is_relative() {
        let base = a.config.parent().unwrap_or(Path::new("."));
        config.data = base.join(&config.data);
    }
    Ok(Invocation::Train {
        task: a.task,
        mode: a.mode,
        config,
        out: a.out,
    })
}

/// Runs a resolved invocation and writes its manifest.
pub fn execute(inv: &Invocation) -> CliResult<RunManifest> {
    let started = now_ms();
    let outcome = match inv {
        Invocation::GenGed(a) => gen_ged(a),
        Invocation::GenMotif(a) => gen_motif(a),
        Invocation::Train { task, mode, config, out } => run_train(*task, *mode, config, out),
        Invocation::Gradcheck(a) => gradcheck(a),
        Invocation::BenchInteraction(a) => bench(a),
        Invocation::ExportAttention(a) => export_attention(a),
    };
    // a failed check still leaves its report and manifest behind
    let (outputs, check) = match outcome {
        Ok(o) => (o, Ok(())),
        Err(CliError::CheckFailed(msg)) => {
            let (out, _) = inv.out();
            (vec![out.to_path_buf()], Err(CliError::CheckFailed(msg)))
        }
        Err(e) => return Err(e),
    };
    let manifest = RunManifest {
        command: inv.name().to_string(),
        invocation: serde_json::to_value(inv).map_err(Error::from)?,
        seeds: inv.seeds(),
        build: build_id(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs,
    };
    manifest.save(&inv.manifest_path())?;
    check.map(|_| manifest)
}

fn gen_ged(a: &GenGedArgs) -> CliResult<Vec<PathBuf>> {
    let ds = gen_ged_dataset(a.graphs, a.max_nodes, a.seed)?;
    let paths = ds.write(&a.out)?;
    let counts: Vec<String> = Split::ALL
        .iter()
        .map(|s| format!("{:?}={}", s, ds.pairs.iter().filter(|p| p.split == *s).count()))
        .collect();
    println!("{} graphs, {} pairs ({})", ds.graphs.len(), ds.pairs.len(), counts.join(", "));
    Ok(paths)
}

fn gen_motif(a: &GenMotifArgs) -> CliResult<Vec<PathBuf>> {
    let all = gen_motif_pair_dataset(a.train + a.val + a.test, a.seed)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let parts = [
        ("train.jsonl", &all[..a.train]),
        ("val.jsonl", &all[a.train..a.train + a.val]),
        ("test.jsonl", &all[a.train + a.val..]),
    ];
    let mut paths = Vec::new();
    for (name, pairs) in parts {
        let p = a.out.join(name);
        write_pairs(&p, pairs)?;
        paths.push(p);
    }
    println!("{} train, {} val, {} test pairs", a.train, a.val, a.test);
    Ok(paths)
}

fn load_split(dir: &Path, name: &str, required: bool) -> CliResult<Vec<GraphPair>> {
    let path = dir.join(name);
    if !path.exists() {
        if required {
            return Err(Error::Config(format!("missing {}", path.display())).into());
        }
        return Ok(Vec::new());
    }
    Ok(read_pairs(&path)?)
}

fn infer_task(kind: TaskKind, pairs: &[GraphPair]) -> CliResult<Task> {
    let task = match (kind, &pairs[0].target) {
        (TaskKind::Ged, Target::Similarity(_)) => Task::Regression,
        (TaskKind::Ddi, Target::Classes(c)) => Task::Classification { num_classes: c.len() },
        (k, t) => {
            return Err(Error::InvalidTarget(format!("task {k:?} does not match target {t:?}")).into());
        }
    };
    Ok(task)
}

fn write_json_line(f: &mut std::fs::File, v: &impl Serialize) -> CliResult<()> {
    let line = serde_json::to_string(v).map_err(Error::from)?;
    writeln!(f, "{line}").map_err(Error::from)?;
    Ok(())
}

fn run_train(kind: TaskKind, mode: InteractionMode, config: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let data = Splits {
        train: load_split(&config.data, "train.jsonl", true)?,
        val: load_split(&config.data, "val.jsonl", false)?,
        test: load_split(&config.data, "test.jsonl", false)?,
    };
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()).into());
    }
    let task = infer_task(kind, &data.train)?;
    let model = config.model.model_config(data.train[0].a.feature_dim(), task, mode);
    model.validate()?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let mut outputs = Vec::new();
    let seeds = config.seeds();
    let mut reports = Vec::new();
    for &seed in &seeds {
        let dir = out.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir).map_err(Error::from)?;
        let log_path = dir.join("log.jsonl");
        let mut log = std::fs::File::create(&log_path).map_err(Error::from)?;
        let mut write_err = None;
        let train_cfg = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let outcome = train(&model, &data, &train_cfg, &mut |entry| {
            println!("{}", serde_json::to_string(entry).unwrap_or_default());
            if let Err(e) = write_json_line(&mut log, entry) {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(e);
        }
        let ck_path = dir.join("checkpoint.json");
        outcome.best.save(&ck_path)?;
        outputs.extend([log_path, ck_path]);
        let final_report = match outcome.test {
            Some(t) => t.report,
            None => crate::train::evaluate(&data.train, &outcome.best.model_params(), &model, train_cfg.top_k)?.report,
        };
        reports.push(final_report);
    }
    let summary = aggregate(&seeds, reports);
    let report_path = out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&summary).map_err(Error::from)?).map_err(Error::from)?;
    println!("{}", serde_json::to_string(&summary.mean).map_err(Error::from)?);
    outputs.push(report_path);
    Ok(outputs)
}

fn write_report(path: &Path, v: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v).map_err(Error::from)?).map_err(Error::from)?;
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> CliResult<Vec<PathBuf>> {
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds.max(1)).collect();
    let report = run_gradcheck(
        &seeds,
        GradcheckOptions {
            inject_fault: a.inject_fault,
        },
    )?;
    for e in &report.entries {
        println!(
            "{:<28} max rel error {:.3e}  {}",
            e.name,
            e.max_rel_error,
            if e.passed { "ok" } else { "FAIL" }
        );
    }
    write_report(&a.out, &report)?;
    if !report.passed() {
        let failed: Vec<&str> = report.entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
        return Err(CliError::CheckFailed(format!("gradient mismatch in {}", failed.join(", "))));
    }
    Ok(vec![a.out.clone()])
}

fn bench(a: &BenchArgs) -> CliResult<Vec<PathBuf>> {
    let report = run_bench(&BenchConfig {
        nodes: a.nodes.clone(),
        dim: a.dim,
        reps: a.reps,
        warmup: a.warmup,
        seed: a.seed,
        ..BenchConfig::default()
    })?;
    for s in &report.sizes {
        println!(
            "N={:<4} node-level {:.3e}s  graph-level {:.3e}s  speedup {:.1}%",
            s.nodes,
            s.node_level_median_s,
            s.graph_level_median_s,
            100.0 * s.speedup
        );
    }
    println!(
        "exponents: node-level {:.3}, graph-level {:.3}",
        report.node_level_exponent, report.graph_level_exponent
    );
    write_report(&a.out, &report)?;
    Ok(vec![a.out.clone()])
}

#[derive(Serialize)]
struct AttentionLine {
    pair_id: usize,
    za: Vec<f64>,
    zb: Vec<f64>,
    idx_a: Vec<usize>,
    idx_b: Vec<usize>,
}

fn export_attention(a: &ExportArgs) -> CliResult<Vec<PathBuf>> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let params = ck.model_params();
    if !ck.config.mode.pools() {
        return Err(Error::Config(format!("mode {} has no node scores", ck.config.mode.name())).into());
    }
    let pairs = read_pairs(&a.pairs)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let mut f = std::fs::File::create(&a.out).map_err(Error::from)?;
    for (id, pair) in pairs.iter().enumerate() {
        let pooled = forward(pair, &params, &ck.config)?
            .pooled
            .expect("pooling modes report their selection");
        write_json_line(
            &mut f,
            &AttentionLine {
                pair_id: id,
                za: pooled.z_a.clone(),
                zb: pooled.z_b.clone(),
                idx_a: pooled.idx_a.clone(),
                idx_b: pooled.idx_b.clone(),
            },
        )?;
    }
    println!("{} pairs exported", pairs.len());
    Ok(vec![a.out.clone()])
}
