//! Command-line driver: dataset generation, training, evaluation, ablation,
//! benchmarks and gradient checks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use gazenet::data::{self, EegDataset, SplitMode, SplitSpec, SyntheticSpec, DEFAULT_ENCODING_SEED};
use gazenet::harness::{
    self, BenchMode, MaeKind, Record, TrainConfig, CSV_HEADER, GRADCHECK_TARGETS,
};
use gazenet::model::{checkpoint, param_count, ModelConfig, Variant};
use gazenet::optim::AdamConfig;

const AFTER_HELP: &str = "\
Any flag can also come from a --config file of key=value lines (flag name
without dashes, '#' starts a comment). Flags given on the command line
override the file. The resolved configuration is printed to stderr in the
same format before the command runs.

CSV columns (train, ablate):
  variant                   base | no-spatial | equal-convs | no-spatial-equal-convs
  seeds                     training seeds, ';'-separated
  mean_mae                  mean test MAE over the seeds
  std_mae                   sample standard deviation (empty for one seed)
  params                    trainable parameter count
  batch1_seconds_per_1000   batch-1 inference seconds per 1000 samples (ablate only)

Exit codes: 0 success, 1 runtime failure, 2 usage error.";

#[derive(Parser)]
#[command(name = "gazenet", version, about = "EEG-to-gaze regression network", after_help = AFTER_HELP)]
struct Cli {
    /// Flat key=value file with default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic EEGR dataset.
    #[command(args_override_self = true)]
    GenData(GenDataArgs),
    /// Train one or more runs and write checkpoints and reports.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Print the MAE of a checkpoint on a dataset.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Time inference of a checkpoint.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
    /// Compare analytic gradients with central finite differences.
    #[command(args_override_self = true)]
    Gradcheck(GradcheckArgs),
    /// Print the exact parameter count of a variant.
    #[command(args_override_self = true)]
    Params(ParamsArgs),
    /// Train all four variants with shared seeds and print one CSV table.
    #[command(args_override_self = true)]
    Ablate(AblateArgs),
}

fn parse_bool(s: &str) -> Result<bool, String> {
    s.parse().map_err(|_| format!("expected true or false, got {s:?}"))
}

#[derive(Clone, Debug)]
struct Widths(Vec<usize>);

fn parse_widths(s: &str) -> Result<Widths, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|e| format!("bad width {w:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err("widths must be positive".into());
    }
    Ok(Widths(v))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_str(s).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Fixed,
    PerEpoch,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaeArg {
    Euclidean,
    PerAxis,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Batch1,
    Batch64,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Subset {
    /// batch1: all samples; everything else: the test partition
    Auto,
    Test,
    All,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
    #[arg(long, default_value_t = 129, value_parser = clap::value_parser!(u32).range(1..))]
    channels: u32,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    timesteps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Seed of the label-to-signal encoding, shared by every generated dataset by default.
    #[arg(long, default_value_t = DEFAULT_ENCODING_SEED)]
    encoding_seed: u64,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "base", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    spatial_filters: u32,
    /// Comma-separated residual block widths.
    #[arg(long, default_value = "32,64", value_parser = parse_widths)]
    block_widths: Widths,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    fc_width: u32,
    #[arg(long, default_value = "false", num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool)]
    conv_bias: bool,
}

impl ModelArgs {
    fn config(&self, channels: usize, timesteps: usize) -> ModelConfig {
        ModelConfig {
            channels,
            timesteps,
            spatial_filters: self.spatial_filters as usize,
            block_widths: self.block_widths.0.clone(),
            fc_width: self.fc_width as usize,
            conv_bias: self.conv_bias,
            ..ModelConfig::default()
        }
        .with_variant(self.variant)
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_enum, default_value = "fixed")]
    split: SplitArg,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    test_frac: f64,
}

impl SplitArgs {
    fn spec(&self) -> SplitSpec {
        SplitSpec {
            mode: match self.split {
                SplitArg::Fixed => SplitMode::Fixed,
                SplitArg::PerEpoch => SplitMode::PerEpoch,
            },
            train: self.train_frac,
            val: self.val_frac,
            test: self.test_frac,
            seed: self.split_seed,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Standardize every channel with the dataset's own mean and std.
    #[arg(long, default_value = "false", num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool)]
    standardize: bool,
}

impl DataArgs {
    fn load(&self) -> gazenet::Result<EegDataset> {
        let mut ds = data::load(&self.data).inspect_err(|_| eprintln!("while loading {}", self.data.display()))?;
        if self.standardize {
            ds.standardize_channels();
        }
        Ok(ds)
    }
}

#[derive(Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    batch_size: u32,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1e-8)]
    adam_eps: f64,
    /// Apply weight decay to the parameters directly instead of through the gradient.
    #[arg(long, default_value = "false", num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool)]
    decoupled_decay: bool,
    /// Seed of the first run; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    runs: u32,
}

impl OptimArgs {
    fn train_config(&self, model: ModelConfig, split: SplitSpec) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs as usize,
            batch_size: self.batch_size as usize,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                weight_decay: self.weight_decay,
                epsilon: self.adam_eps,
                decoupled: self.decoupled_decay,
                ..AdamConfig::default()
            },
            split,
            seed: self.seed,
            model,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Checkpoint path; with several runs `-run{i}` is inserted before the extension.
    #[arg(long)]
    out_checkpoint: Option<PathBuf>,
    /// JSON-lines report with one record per epoch and run plus a summary.
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "euclidean")]
    mae: MaeArg,
    #[arg(long, value_enum, default_value = "auto")]
    subset: Subset,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "batch1")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "auto")]
    subset: Subset,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Also check the whole network at a tiny configuration.
    #[arg(long, default_value = "false", num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool)]
    tiny_model: bool,
    /// Check a single target: conv, batchnorm, relu, avgpool, linear, spatial, block, block-equal or model.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 129, value_parser = clap::value_parser!(u32).range(1..))]
    channels: u32,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    timesteps: u32,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Time batch-1 inference of each variant's first run (needs 1000 samples).
    #[arg(long, default_value = "true", num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool)]
    bench: bool,
    #[arg(long)]
    out_report: Option<PathBuf>,
}

/// Splices the `--config` file into argv: its entries go right after the
/// subcommand so that later command-line flags override them.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut flags = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value, got {line:?}", n + 1))?;
        flags.push(format!("--{}={}", k.trim(), v.trim()));
    }
    // argv[0] is the program, argv[1] the subcommand
    let at = rest.len().min(2);
    rest.splice(at..at, flags);
    Ok(rest)
}

/// Every flag of the chosen subcommand with its final value, as key=value lines.
fn resolved_config(cmd: &clap::Command, matches: &ArgMatches) -> Vec<String> {
    let Some((name, sub)) = matches.subcommand() else { return Vec::new() };
    let sub_cmd = cmd.find_subcommand(name).expect("parsed subcommand exists");
    sub_cmd
        .get_arguments()
        .filter_map(|arg| {
            let long = arg.get_long()?;
            if long == "config" || long == "help" || long == "version" {
                return None;
            }
            let raw = sub.get_raw(arg.get_id().as_str())?;
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            Some(format!("{long}={}", vals.join(",")))
        })
        .collect()
}

fn checkpoint_path(base: &Path, run: usize, runs: usize) -> PathBuf {
    if runs <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-run{run}.{}", ext.to_string_lossy()),
        None => format!("{stem}-run{run}"),
    };
    base.with_file_name(name)
}

fn write_report(path: &Path, records: &[Record]) -> gazenet::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    harness::write_records(&mut w, records)?;
    w.flush()?;
    Ok(())
}

struct VariantResult {
    mean: f64,
    std: Option<f64>,
    seeds: Vec<u64>,
    params: usize,
    records: Vec<Record>,
}

/// Trains `runs` models and hands each one to `on_run` before it is dropped.
fn train_runs(
    ds: &EegDataset,
    cfg: &TrainConfig,
    runs: usize,
    mut on_run: impl FnMut(usize, &gazenet::model::Model<f32>) -> gazenet::Result<()>,
) -> gazenet::Result<VariantResult> {
    let mut records = Vec::new();
    let variant = cfg.model.variant().to_string();
    let params = param_count(&cfg.model);
    let (mean, std, seeds) = if runs == 1 {
        let (model, report) = harness::train(ds, cfg)?;
        on_run(0, &model)?;
        records.extend(report.records(0));
        (report.test_mae, None, vec![report.seed])
    } else {
        let multi = harness::multi_run_with(ds, cfg, runs, |i, m, _| on_run(i, m))?;
        for (i, r) in multi.runs.iter().enumerate() {
            records.extend(r.records(i));
        }
        (multi.mean_mae, Some(multi.std_mae), multi.runs.iter().map(|r| r.seed).collect())
    };
    records.push(Record::Summary { variant, runs, mean_mae: mean, std_mae: std, param_count: params });
    Ok(VariantResult { mean, std, seeds, params, records })
}

fn cmd_gen_data(a: &GenDataArgs) -> gazenet::Result<()> {
    let ds = data::generate(&SyntheticSpec {
        samples: a.samples as usize,
        channels: a.channels as usize,
        timesteps: a.timesteps as usize,
        seed: a.seed,
        noise_sigma: a.noise,
        encoding_seed: a.encoding_seed,
    })?;
    data::save(&ds, &a.out)?;
    println!("samples={} channels={} timesteps={} path={}", ds.len(), ds.channels(), ds.timesteps(), a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> gazenet::Result<()> {
    let ds = a.data.load()?;
    let cfg = a.optim.train_config(a.model.config(ds.channels(), ds.timesteps()), a.split.spec());
    let runs = a.optim.runs as usize;
    let result = train_runs(&ds, &cfg, runs, |i, m| match &a.out_checkpoint {
        Some(base) => checkpoint::save(m, checkpoint_path(base, i, runs)),
        None => Ok(()),
    })?;
    if let Some(p) = &a.out_report {
        write_report(p, &result.records)?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(
        out,
        "{}",
        harness::csv_row(a.model.variant.name(), &result.seeds, result.mean, result.std, result.params, None)
    )?;
    Ok(())
}

fn subset_indices(ds: &EegDataset, subset: Subset, split: &SplitArgs, auto_all: bool) -> gazenet::Result<Vec<usize>> {
    if subset == Subset::All || (subset == Subset::Auto && auto_all) {
        return Ok((0..ds.len()).collect());
    }
    Ok(data::split(ds.len(), &split.spec(), 1)?.test)
}

fn load_checkpoint(path: &Path) -> gazenet::Result<gazenet::model::Model<f32>> {
    checkpoint::load(path).inspect_err(|_| eprintln!("while loading {}", path.display()))
}

fn cmd_eval(a: &EvalArgs) -> gazenet::Result<()> {
    let ds = a.data.load()?;
    let model = load_checkpoint(&a.checkpoint)?;
    let idx = subset_indices(&ds, a.subset, &a.split, false)?;
    let kind = match a.mae {
        MaeArg::Euclidean => MaeKind::Euclidean,
        MaeArg::PerAxis => MaeKind::PerAxis,
    };
    let mae = harness::evaluate_with(&model, &ds, &idx, kind)?;
    println!("mae={mae}");
    println!("kind={}", if kind == MaeKind::Euclidean { "euclidean" } else { "per-axis" });
    println!("samples={}", idx.len());
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> gazenet::Result<()> {
    let ds = a.data.load()?;
    let model = load_checkpoint(&a.checkpoint)?;
    let mode = match a.mode {
        ModeArg::Batch1 => BenchMode::Batch1,
        ModeArg::Batch64 => BenchMode::Batch64,
    };
    let idx = subset_indices(&ds, a.subset, &a.split, mode == BenchMode::Batch1)?;
    let report = harness::bench(&model, &ds, &idx, mode)?;
    harness::write_records(io::stdout().lock(), &[Record::Bench(report)])
}

/// Returns whether every target stayed under the threshold.
fn cmd_gradcheck(a: &GradcheckArgs) -> gazenet::Result<bool> {
    let targets: Vec<&str> = match &a.layer {
        Some(l) => vec![l.as_str()],
        None => GRADCHECK_TARGETS.iter().copied().filter(|t| a.tiny_model || *t != "model").collect(),
    };
    let mut ok = true;
    let mut out = io::stdout().lock();
    writeln!(out, "target,max_rel_error,worst,entries,pass")?;
    for t in targets {
        let rep = harness::gradcheck_target(t, a.eps, a.seed)?;
        let pass = rep.max_rel_error < a.threshold;
        ok &= pass;
        writeln!(out, "{t},{:e},{},{},{pass}", rep.max_rel_error, rep.worst, rep.entries_checked)?;
    }
    Ok(ok)
}

fn cmd_params(a: &ParamsArgs) -> gazenet::Result<()> {
    let cfg = a.model.config(a.channels as usize, a.timesteps as usize);
    cfg.validate()?;
    println!("{}", param_count(&cfg));
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> gazenet::Result<()> {
    let ds = a.data.load()?;
    let runs = a.optim.runs as usize;
    let bench = a.bench && ds.len() >= harness::BENCH_SINGLE_SAMPLES;
    if a.bench && !bench {
        eprintln!("note: {} samples is fewer than {}; batch-1 timing column left empty", ds.len(), harness::BENCH_SINGLE_SAMPLES);
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for variant in Variant::ALL {
        let model_cfg = a.model.config(ds.channels(), ds.timesteps()).with_variant(variant);
        let cfg = a.optim.train_config(model_cfg, a.split.spec());
        let mut timing = None;
        let result = train_runs(&ds, &cfg, runs, |i, m| {
            if bench && i == 0 {
                let rep = harness::bench(m, &ds, &all, BenchMode::Batch1)?;
                timing = Some(rep.seconds_per_1000);
                records.push(Record::Bench(rep));
            }
            Ok(())
        })
        .inspect_err(|_| eprintln!("variant {variant} failed"))?;
        eprintln!("{variant}: mean_mae={}", result.mean);
        rows.push(harness::csv_row(variant.name(), &result.seeds, result.mean, result.std, result.params, timing));
        records.extend(result.records);
    }
    if let Some(p) = &a.out_report {
        write_report(p, &records)?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cmd = Cli::command();
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    eprintln!("# resolved config");
    for line in resolved_config(&cmd, &matches) {
        eprintln!("{line}");
    }

    let result = match &cli.command {
        Command::GenData(a) => cmd_gen_data(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Params(a) => cmd_params(a).map(|_| true),
        Command::Ablate(a) => cmd_ablate(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check exceeded the threshold");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
