//! Training loop, metrics, repeated runs and inference benchmarks.
//!
//! Everything here runs on a single worker so that a `(dataset, TrainConfig)`
//! pair determines every loss and MAE bit for bit. Wall-clock fields are the
//! only non-deterministic parts of a report.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{self, EegDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ResidualBlock, SpatialFilter};
use crate::nn::{gradcheck, AvgPoolY, BatchNorm2d, Conv2d, GradCheckReport, Layer, Linear, Relu};
use crate::rng::{stream_rng, Stream};
use crate::optim::{adam_step, mse_loss, AdamConfig, AdamState};
use crate::tensor::{Fill, Shape, Tensor};

/// Batch size used for evaluation passes.
pub const EVAL_BATCH: usize = 64;
/// Untimed forward passes before a benchmark starts the clock.
pub const BENCH_WARMUP: usize = 10;
/// Samples processed one at a time by the batch-1 benchmark.
pub const BENCH_SINGLE_SAMPLES: usize = 1000;
pub const BENCH_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaeKind {
    /// Mean Euclidean distance between predicted and true gaze points.
    #[default]
    Euclidean,
    /// Mean absolute coordinate error over both axes.
    PerAxis,
}

impl FromStr for MaeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MaeKind::Euclidean),
            "per-axis" => Ok(MaeKind::PerAxis),
            _ => Err(Error::InvalidArgument(format!("unknown MAE kind {s:?}"))),
        }
    }
}

/// Mean absolute error between `[N, 2]` predictions and targets.
pub fn mae(pred: &Tensor<f32>, target: &Tensor<f32>, kind: MaeKind) -> Result<f64> {
    if pred.dims() != target.dims() || pred.dims().len() != 2 || pred.dims()[1] != 2 {
        return Err(Error::ShapeMismatch { op: "mae", left: pred.dims().to_vec(), right: target.dims().to_vec() });
    }
    let n = pred.dims()[0];
    let pairs = pred.values().chunks_exact(2).zip(target.values().chunks_exact(2));
    let total: f64 = match kind {
        MaeKind::Euclidean => pairs
            .map(|(p, t)| {
                let dx = p[0] as f64 - t[0] as f64;
                let dy = p[1] as f64 - t[1] as f64;
                dx.hypot(dy)
            })
            .sum(),
        MaeKind::PerAxis => pairs.map(|(p, t)| (p[0] as f64 - t[0] as f64).abs() + (p[1] as f64 - t[1] as f64).abs()).sum::<f64>() / 2.0,
    };
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub split: SplitSpec,
    /// Seeds weight initialization and batch order.
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            split: SplitSpec::default(),
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        self.adam.validate()?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the batch MSE losses over the epoch.
    pub train_loss: f64,
    pub val_mae: f64,
    pub steps: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub seed: u64,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    /// Test MAE of the final-epoch model.
    pub test_mae: f64,
    /// Epoch with the lowest validation MAE; recorded only, never used to pick the model.
    pub best_val_epoch: usize,
    pub best_val_mae: f64,
    pub wall_seconds: f64,
}

impl RunReport {
    /// Copy with every wall-clock field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.wall_seconds = 0.0;
        for e in &mut r.epochs {
            e.wall_seconds = 0.0;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    /// 1000 samples, one forward call each.
    Batch1,
    /// Every given sample in batches of 64.
    Batch64,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Batch1 => "batch1",
            BenchMode::Batch64 => "batch64",
        })
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch1" => Ok(BenchMode::Batch1),
            "batch64" => Ok(BenchMode::Batch64),
            _ => Err(Error::InvalidArgument(format!("unknown bench mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub warmup_passes: usize,
    pub forward_calls: usize,
    pub samples: usize,
    pub total_seconds: f64,
    pub seconds_per_1000: f64,
}

impl BenchReport {
    pub fn samples_per_second(&self) -> f64 {
        self.samples as f64 / self.total_seconds.max(f64::MIN_POSITIVE)
    }
}

/// Infer-mode predictions for `indices`, in order.
pub fn predict(model: &Model<f32>, ds: &EegDataset, indices: &[usize]) -> Result<Tensor<f32>> {
    model.config().ensure_input(ds.channels(), ds.timesteps())?;
    if indices.is_empty() {
        return Err(Error::InvalidArgument("nothing to predict".into()));
    }
    let mut out = Vec::with_capacity(indices.len() * 2);
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _) = ds.gather(chunk)?;
        out.extend_from_slice(model.infer(&x)?.values());
    }
    Tensor::from_vec(&[indices.len(), 2], out)
}

pub fn evaluate_with(model: &Model<f32>, ds: &EegDataset, indices: &[usize], kind: MaeKind) -> Result<f64> {
    let pred = predict(model, ds, indices)?;
    let (_, target) = ds.gather(indices)?;
    mae(&pred, &target, kind)
}

/// Euclidean test MAE; never mutates the model.
pub fn evaluate(model: &Model<f32>, ds: &EegDataset, indices: &[usize]) -> Result<f64> {
    evaluate_with(model, ds, indices, MaeKind::Euclidean)
}

/// One pass over `indices` in `(seed, epoch)` shuffled batches of
/// forward / MSE / backward / Adam. Returns the sample-weighted mean loss
/// and the number of optimizer steps.
pub fn train_epoch(
    model: &mut Model<f32>,
    opt: &mut AdamState<f32>,
    ds: &EegDataset,
    indices: &[usize],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, usize)> {
    let lr = cfg.adam.schedule.lr_at(cfg.adam.lr, epoch);
    let batches = data::batches(indices, cfg.batch_size, cfg.seed, epoch)?;
    let mut loss_sum = 0.0;
    for (bi, batch) in batches.iter().enumerate() {
        let (x, y) = ds.gather(batch)?;
        let pred = model.forward(&x).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { epoch, batch: bi, loss: f64::NAN },
            e => e,
        })?;
        let (loss, grad) = mse_loss(&pred, &y)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: bi, loss });
        }
        model.backward(&grad)?;
        adam_step(model.params_mut(), opt, &cfg.adam, lr)?;
        loss_sum += loss * batch.len() as f64;
    }
    Ok((loss_sum / indices.len().max(1) as f64, batches.len()))
}

/// Trains a fresh model built from `cfg.model` with `cfg.seed`.
pub fn train(ds: &EegDataset, cfg: &TrainConfig) -> Result<(Model<f32>, RunReport)> {
    cfg.validate()?;
    cfg.model.ensure_input(ds.channels(), ds.timesteps())?;
    let started = Instant::now();
    let mut model = Model::build(cfg.model.clone(), cfg.seed)?;
    let mut opt = AdamState::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut test = Vec::new();
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let part = data::split(ds.len(), &cfg.split, epoch)?;
        let (train_loss, steps) = train_epoch(&mut model, &mut opt, ds, &part.train, cfg, epoch)?;
        let val_mae = evaluate(&model, ds, &part.val)?;
        epochs.push(EpochRecord { epoch, train_loss, val_mae, steps, wall_seconds: t0.elapsed().as_secs_f64() });
        test = part.test;
    }
    let test_mae = evaluate(&model, ds, &test)?;
    let best = epochs
        .iter()
        .min_by(|a, b| a.val_mae.total_cmp(&b.val_mae))
        .expect("at least one epoch");
    let report = RunReport {
        variant: cfg.model.variant().to_string(),
        seed: cfg.seed,
        param_count: model.param_count(),
        best_val_epoch: best.epoch,
        best_val_mae: best.val_mae,
        epochs,
        test_mae,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRunReport {
    pub mean_mae: f64,
    pub std_mae: f64,
    pub runs: Vec<RunReport>,
}

/// Mean and sample standard deviation (n - 1 denominator). Values are summed
/// in sorted order, so the result does not depend on their order.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 values for a sample std, got {}", values.len())));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    Ok((mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt()))
}

/// `runs` independent trainings with seeds `cfg.seed + i`; the split seed
/// stays fixed so every run sees the same test set. `on_run` sees each
/// trained model before it is dropped.
pub fn multi_run_with(
    ds: &EegDataset,
    cfg: &TrainConfig,
    runs: usize,
    mut on_run: impl FnMut(usize, &Model<f32>, &RunReport) -> Result<()>,
) -> Result<MultiRunReport> {
    if runs < 2 {
        return Err(Error::InvalidArgument(format!("multi_run needs at least 2 runs, got {runs}")));
    }
    let mut reports = Vec::with_capacity(runs);
    for run in 0..runs {
        let run_cfg = TrainConfig { seed: cfg.seed.wrapping_add(run as u64), ..cfg.clone() };
        let wrap = |e| Error::Run { run, source: Box::new(e) };
        let (model, report) = train(ds, &run_cfg).map_err(wrap)?;
        on_run(run, &model, &report).map_err(wrap)?;
        reports.push(report);
    }
    let maes: Vec<f64> = reports.iter().map(|r| r.test_mae).collect();
    let (mean_mae, std_mae) = mean_std(&maes)?;
    Ok(MultiRunReport { mean_mae, std_mae, runs: reports })
}

pub fn multi_run(ds: &EegDataset, cfg: &TrainConfig, runs: usize) -> Result<MultiRunReport> {
    multi_run_with(ds, cfg, runs, |_, _, _| Ok(()))
}

/// Times infer-mode forward passes over `indices`.
///
/// `Batch1` runs the first 1000 indices one sample per call; `Batch64` runs
/// all of them in batches of 64. Inputs are gathered outside the timed
/// region and [`BENCH_WARMUP`] untimed passes come first.
pub fn bench(model: &Model<f32>, ds: &EegDataset, indices: &[usize], mode: BenchMode) -> Result<BenchReport> {
    model.config().ensure_input(ds.channels(), ds.timesteps())?;
    let batches: Vec<&[usize]> = match mode {
        BenchMode::Batch1 => {
            if indices.len() < BENCH_SINGLE_SAMPLES {
                return Err(Error::InvalidArgument(format!(
                    "batch-1 benchmark needs {BENCH_SINGLE_SAMPLES} samples, got {}",
                    indices.len()
                )));
            }
            indices[..BENCH_SINGLE_SAMPLES].chunks(1).collect()
        }
        BenchMode::Batch64 => {
            if indices.is_empty() {
                return Err(Error::InvalidArgument("batch-64 benchmark needs samples".into()));
            }
            indices.chunks(BENCH_BATCH).collect()
        }
    };

    let (warm, _) = ds.gather(batches[0])?;
    for _ in 0..BENCH_WARMUP {
        std::hint::black_box(model.infer(&warm)?);
    }

    let mut total = 0.0;
    let mut samples = 0;
    for batch in &batches {
        let (x, _) = ds.gather(batch)?;
        let t0 = Instant::now();
        let out = model.infer(&x)?;
        total += t0.elapsed().as_secs_f64();
        std::hint::black_box(out);
        samples += batch.len();
    }
    Ok(BenchReport {
        mode,
        warmup_passes: BENCH_WARMUP,
        forward_calls: batches.len(),
        samples,
        total_seconds: total,
        seconds_per_1000: total / (samples as f64 / 1000.0),
    })
}

/// One line of a JSON-lines report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum Record {
    Epoch { run: usize, variant: String, seed: u64, #[serde(flatten)] epoch: EpochRecord },
    Run { run: usize, #[serde(flatten)] summary: RunSummary },
    Summary { variant: String, runs: usize, mean_mae: f64, std_mae: Option<f64>, param_count: usize },
    Bench(BenchReport),
}

/// A run report without its per-epoch records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub seed: u64,
    pub param_count: usize,
    pub test_mae: f64,
    pub best_val_epoch: usize,
    pub best_val_mae: f64,
    pub wall_seconds: f64,
}

impl RunReport {
    /// Epoch records followed by the run summary.
    pub fn records(&self, run: usize) -> Vec<Record> {
        let mut v: Vec<Record> = self
            .epochs
            .iter()
            .map(|e| Record::Epoch { run, variant: self.variant.clone(), seed: self.seed, epoch: e.clone() })
            .collect();
        v.push(Record::Run {
            run,
            summary: RunSummary {
                variant: self.variant.clone(),
                seed: self.seed,
                param_count: self.param_count,
                test_mae: self.test_mae,
                best_val_epoch: self.best_val_epoch,
                best_val_mae: self.best_val_mae,
                wall_seconds: self.wall_seconds,
            },
        });
        v
    }
}

pub fn write_records(mut w: impl Write, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(text: &str) -> Result<Vec<Record>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::InvalidArgument(format!("bad report line: {e}"))))
        .collect()
}

pub const CSV_HEADER: &str = "variant,seeds,mean_mae,std_mae,params,batch1_seconds_per_1000";

/// One summary row under [`CSV_HEADER`]. Missing values are left empty.
pub fn csv_row(variant: &str, seeds: &[u64], mean_mae: f64, std_mae: Option<f64>, params: usize, bench_seconds: Option<f64>) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!("{variant},{},{mean_mae},{},{params},{}", seeds.join(";"), opt(std_mae), opt(bench_seconds))
}

/// Names accepted by [`gradcheck_target`], in the order the full suite runs them.
pub const GRADCHECK_TARGETS: &[&str] =
    &["conv", "batchnorm", "relu", "avgpool", "linear", "spatial", "block", "block-equal", "model"];

/// Runs one named finite-difference check in f64 on a small seeded layer.
///
/// `model` is the whole network at [`ModelConfig::tiny`]; the blocks use a
/// projecting shortcut (`block`) and an identity shortcut with 9×1 second
/// convolution (`block-equal`).
pub fn gradcheck_target(name: &str, eps: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = stream_rng(seed, Stream::Init, 0);
    let input = |dims: &[usize]| -> Result<Tensor<f64>> {
        Tensor::new(Shape::new(dims)?, Fill::Uniform { lo: -1.0, hi: 1.0, seed })
    };
    match name {
        "conv" => {
            let mut l = Conv2d::new("conv", 3, 4, 3, 1, true)?;
            l.init_he(&mut rng);
            gradcheck(&mut l, &input(&[2, 3, 7, 1])?, eps)
        }
        "batchnorm" => gradcheck(&mut BatchNorm2d::new("bn", 3)?, &input(&[3, 3, 5, 1])?, eps),
        "relu" => gradcheck(&mut Relu::new(), &input(&[2, 3, 5, 1])?, eps),
        "avgpool" => gradcheck(&mut AvgPoolY::new(), &input(&[2, 3, 7, 1])?, eps),
        "linear" => {
            let mut l = Linear::new("fc", 6, 4)?;
            l.init_he(&mut rng);
            gradcheck(&mut l, &input(&[3, 6])?, eps)
        }
        "spatial" => {
            let mut l = SpatialFilter::new(5, 3, false)?;
            l.conv.init_he(&mut rng);
            gradcheck(&mut l, &input(&[3, 5, 6, 1])?, eps)
        }
        "block" => {
            let mut l = ResidualBlock::new("block", 3, 4, false, false)?;
            l.init_he(&mut rng);
            gradcheck(&mut l, &input(&[3, 3, 8, 1])?, eps)
        }
        "block-equal" => {
            let mut l = ResidualBlock::new("block", 4, 4, true, false)?;
            l.init_he(&mut rng);
            gradcheck(&mut l, &input(&[2, 4, 10, 1])?, eps)
        }
        "model" => {
            let mut m = Model::<f64>::build(ModelConfig::tiny(), seed)?;
            gradcheck(&mut m, &input(&[3, 4, 16, 1])?, eps)
        }
        _ => Err(Error::InvalidArgument(format!(
            "unknown gradcheck target {name:?}; expected one of {}",
            GRADCHECK_TARGETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_suite_passes() {
        for name in GRADCHECK_TARGETS {
            let rep = gradcheck_target(name, 1e-4, 0).unwrap();
            assert!(rep.max_rel_error < 1e-4, "{name}: {rep:?}");
        }
        assert!(gradcheck_target("nope", 1e-4, 0).is_err());
    }
    use crate::data::generate_synthetic;
    use proptest::prelude::*;

    fn t2(v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(&[v.len() / 2, 2], v.to_vec()).unwrap()
    }

    #[test]
    fn mae_examples() {
        let p = t2(&[3.0, 4.0]);
        let z = t2(&[0.0, 0.0]);
        assert_eq!(mae(&p, &z, MaeKind::Euclidean).unwrap(), 5.0);
        assert_eq!(mae(&p, &z, MaeKind::PerAxis).unwrap(), 3.5);
        assert_eq!(mae(&p, &p, MaeKind::Euclidean).unwrap(), 0.0);
        assert_eq!(mae(&p, &p, MaeKind::PerAxis).unwrap(), 0.0);
        assert!(mae(&p, &t2(&[0.0; 4]), MaeKind::Euclidean).is_err());
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[1.0, 3.0]).unwrap(), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.5; 5]).unwrap(), (4.5, 0.0));
        assert!(mean_std(&[1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn train_rejects_mismatched_data() {
        let ds = generate_synthetic(20, 3, 16, 0, 0.0).unwrap();
        let cfg = TrainConfig { epochs: 1, model: ModelConfig::tiny(), ..TrainConfig::default() };
        assert!(matches!(train(&ds, &cfg), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn one_epoch_step_count() {
        let ds = generate_synthetic(200, 4, 16, 0, 0.0).unwrap();
        let cfg = TrainConfig { epochs: 1, model: ModelConfig::tiny(), ..TrainConfig::default() };
        let (_, rep) = train(&ds, &cfg).unwrap();
        // 140 training samples → ceil(140 / 64) = 3 steps
        assert_eq!(rep.epochs[0].steps, 3);
    }

    #[test]
    fn bench_needs_enough_samples() {
        let ds = generate_synthetic(10, 4, 16, 0, 0.0).unwrap();
        let m = Model::build(ModelConfig::tiny(), 0).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        assert!(bench(&m, &ds, &idx, BenchMode::Batch1).is_err());
        let rep = bench(&m, &ds, &idx, BenchMode::Batch64).unwrap();
        assert_eq!((rep.forward_calls, rep.samples), (1, 10));
    }

    #[test]
    fn records_round_trip() {
        let rep = RunReport {
            variant: "base".into(),
            seed: 3,
            param_count: 10,
            epochs: vec![EpochRecord { epoch: 1, train_loss: 0.1 + 0.2, val_mae: 1.0 / 3.0, steps: 2, wall_seconds: 0.5 }],
            test_mae: 2.5,
            best_val_epoch: 1,
            best_val_mae: 1.0 / 3.0,
            wall_seconds: 1.0,
        };
        let mut buf = Vec::new();
        let mut recs = rep.records(0);
        recs.push(Record::Summary { variant: "base".into(), runs: 1, mean_mae: 2.5, std_mae: None, param_count: 10 });
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"record\":\"epoch\""));
        assert_eq!(read_records(&text).unwrap(), recs);
    }

    #[test]
    fn csv_layout() {
        assert_eq!(
            csv_row("base", &[1, 2], 3.5, Some(0.5), 100, None),
            "base,1;2,3.5,0.5,100,"
        );
        assert_eq!(CSV_HEADER.split(',').count(), csv_row("x", &[0], 1.0, None, 1, Some(2.0)).split(',').count());
    }

    proptest! {
        #[test]
        fn euclidean_at_least_per_axis(v in prop::collection::vec(-1000.0f32..1000.0, 2..40)) {
            let n = v.len() / 2 * 2;
            let p = t2(&v[..n]);
            let z = Tensor::zeros(&[n / 2, 2]).unwrap();
            prop_assert!(mae(&p, &z, MaeKind::Euclidean).unwrap() + 1e-9 >= mae(&p, &z, MaeKind::PerAxis).unwrap());
        }

        #[test]
        fn std_ignores_order(mut v in prop::collection::vec(0.0f64..500.0, 2..8), seed in any::<u64>()) {
            let a = mean_std(&v).unwrap();
            use rand::seq::SliceRandom;
            v.shuffle(&mut crate::rng::stream_rng(seed, crate::rng::Stream::Batches, 0));
            prop_assert_eq!(a, mean_std(&v).unwrap());
        }
    }
}
