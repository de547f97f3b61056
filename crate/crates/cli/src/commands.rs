use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use feastnet::coarsen::CoarseningHierarchy;
use feastnet::eval::{
    ablation_sweep, correspondence_accuracy, geodesic_error_curve, miou, overall_miou, Architecture, SweepAxis,
    SweepTask,
};
use feastnet::gradcheck::{run_gradcheck, CheckKind, GradcheckConfig};
use feastnet::model::{build_multi_scale, build_part_labeler, build_single_scale, ModelParams, ModelSpec};
use feastnet::seed::{streams, sub_seed};
use feastnet::trainer::{load_checkpoint, Sample, Trainer};
use serde_json::json;

use crate::config::FileConfig;
use crate::data::{self, DataArgs};
use crate::{Cli, Task};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random instances per layer kind.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub model_tolerance: Option<f64>,
    /// Perturbs one kind's analytic gradient (self-test of the checker).
    #[arg(long, hide = true, value_parser = parse_kind)]
    pub corrupt: Option<CheckKind>,
}

fn parse_kind(s: &str) -> std::result::Result<CheckKind, String> {
    CheckKind::from_name(s).ok_or_else(|| {
        let names: Vec<_> = CheckKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown kind {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Args, Debug)]
pub struct CoarsenArgs {
    /// OFF mesh or edge list.
    pub input: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub task: Task,
    #[command(flatten)]
    pub data: DataArgs,
    /// NDJSON metrics log (default: `<out>.jsonl`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    GeodesicCurve,
    Miou,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub task: Task,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Accuracy)]
    pub metric: Metric,
    /// Distance thresholds for the geodesic error curve.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.02, 0.04, 0.06, 0.08, 0.1])]
    pub thresholds: Vec<f64>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    M,
    Noise,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub task: Task,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated settings along the axis.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub data: DataArgs,
}

fn resolve(cli: &Cli, task: Option<Task>) -> Result<FileConfig> {
    let mut cfg = FileConfig::load(task, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<bool> {
    let cfg = resolve(cli, None)?;
    let gc = GradcheckConfig {
        seed: cfg.train.seed,
        trials: a.trials.unwrap_or(cfg.gradcheck.trials),
        tolerance: a.tolerance.unwrap_or(cfg.gradcheck.tolerance),
        model_tolerance: a.model_tolerance.unwrap_or(cfg.gradcheck.model_tolerance),
        corrupt: a.corrupt,
    };
    ensure!(gc.trials > 0, "--trials must be positive");
    let report = run_gradcheck(&gc)?;
    println!("{:<14} {:>6} {:>12} {:>10}  status", "kind", "trials", "worst", "tolerance");
    for r in &report.rows {
        let status = if r.passed { "ok" } else { "FAIL" };
        println!("{:<14} {:>6} {:>12.3e} {:>10.1e}  {status}", r.kind.name(), r.trials, r.worst, r.tolerance);
    }
    if let Some(out) = &cli.out {
        let mut w = create(out)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.flush()?;
    }
    let failing = report.failing();
    if !failing.is_empty() {
        let names: Vec<_> = failing.iter().map(|k| k.name()).collect();
        eprintln!("gradient check failed: {}", names.join(", "));
    }
    Ok(failing.is_empty())
}

pub fn coarsen(cli: &Cli, a: &CoarsenArgs) -> Result<bool> {
    let cfg = resolve(cli, None)?;
    let levels = a.levels.unwrap_or(cfg.model.levels);
    let graph = data::load_graph(&a.input)?;
    let h = CoarseningHierarchy::build(&graph, levels)?;
    println!("{:>5} {:>8} {:>8}", "level", "real", "padded");
    for (l, (real, padded)) in h.node_counts().into_iter().enumerate() {
        println!("{l:>5} {real:>8} {padded:>8}");
    }
    if let Some(out) = &cli.out {
        let mut w = create(out)?;
        w.write_all(h.to_json()?.as_bytes())?;
        w.flush()?;
    }
    Ok(true)
}

fn build_model(task: Task, cfg: &FileConfig, samples: &[Sample<f64>], classes: usize) -> Result<(ModelSpec, ModelParams<f64>)> {
    let first = samples.first().context("empty dataset")?;
    let d_in = first.features.cols();
    let seed = sub_seed(cfg.train.seed, streams::PARAMS);
    Ok(match (task, cfg.model.architecture) {
        (Task::Partlabel, _) => build_part_labeler(d_in, classes, &cfg.arch, seed)?,
        (_, Architecture::SingleScale) => build_single_scale(d_in, classes, &cfg.arch, seed)?,
        (_, Architecture::MultiScale) => {
            let h = first.hierarchy.as_ref().context("multi-scale model needs a hierarchy")?;
            build_multi_scale(d_in, classes, &cfg.arch, h, seed)?
        }
    })
}

fn hierarchy_levels(task: Task, cfg: &FileConfig) -> usize {
    match (task, cfg.model.architecture) {
        (Task::Partlabel, _) | (_, Architecture::SingleScale) => 0,
        (_, Architecture::MultiScale) => cfg.model.levels,
    }
}

pub fn train(cli: &Cli, a: &TrainArgs) -> Result<bool> {
    let mut cfg = resolve(cli, Some(a.task))?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    print!("{}", cfg.to_toml());

    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("feast.ckpt"));
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".jsonl");
        PathBuf::from(s)
    });

    let resumed = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint::<f64>(path).with_context(|| format!("resuming from {}", path.display()))?;
            if cli.seed.is_some_and(|s| s != ckpt.rng_seed) {
                eprintln!("note: --seed ignored; resuming with the checkpoint seed {}", ckpt.rng_seed);
            }
            cfg.train.seed = ckpt.rng_seed;
            Some(ckpt)
        }
        None => None,
    };
    let levels = match &resumed {
        Some(ckpt) => ckpt.spec.depth(),
        None => hierarchy_levels(a.task, &cfg),
    };
    let ds = data::load(a.task, &a.data, &cfg, levels)?;
    let mut trainer = match resumed {
        Some(ckpt) => Trainer::resume(ckpt, cfg.train.clone())?,
        None => {
            let (spec, params) = build_model(a.task, &cfg, &ds.samples, ds.classes)?;
            Trainer::new(spec, params, cfg.train.clone())?
        }
    };
    ensure!(
        ds.samples[0].features.cols() == trainer.spec.input_width,
        "data has {} input features, model expects {}",
        ds.samples[0].features.cols(),
        trainer.spec.input_width
    );

    let mut log = if a.resume.is_some() && log_path.exists() {
        BufWriter::new(File::options().append(true).open(&log_path)?)
    } else {
        create(&log_path)?
    };
    eprintln!(
        "training {} on {} samples, epochs {}..{}",
        trainer.spec.describe(),
        ds.samples.len(),
        trainer.epoch,
        trainer.cfg.epochs
    );
    trainer.run(&ds.samples, Some(&mut log), Some(&out))?;
    log.flush()?;
    if let Some(last) = trainer.history.last() {
        eprintln!("epoch {} loss {:.4} accuracy {:.4}", last.epoch, last.loss, last.accuracy);
    }
    Ok(true)
}

pub fn eval(cli: &Cli, a: &EvalArgs) -> Result<bool> {
    let cfg = resolve(cli, Some(a.task))?;
    let ckpt = load_checkpoint::<f64>(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let (spec, params) = (ckpt.spec, ckpt.params);
    let ds = data::load(a.task, &a.data, &cfg, spec.depth())?;
    let preds = ds
        .samples
        .iter()
        .map(|s| s.predict(&spec, &params))
        .collect::<feastnet::Result<Vec<_>>>()?;

    let result = match a.metric {
        Metric::Accuracy => {
            let accs = preds
                .iter()
                .zip(&ds.samples)
                .map(|(p, s)| correspondence_accuracy(p, &s.targets))
                .collect::<feastnet::Result<Vec<_>>>()?;
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            println!("accuracy {mean:.4}");
            json!({ "metric": "accuracy", "per_sample": accs, "accuracy": mean })
        }
        Metric::GeodesicCurve => {
            let reference = ds.reference.as_ref().context("geodesic errors need a mesh task")?;
            let pred: Vec<usize> = preds.concat();
            let gt: Vec<usize> = ds.samples.iter().flat_map(|s| s.targets.iter().copied()).collect();
            let curve = geodesic_error_curve(&pred, &gt, reference, &a.thresholds)?;
            println!("{:>10} {:>10}", "threshold", "fraction");
            for (t, f) in &curve.points {
                println!("{t:>10.4} {f:>10.4}");
            }
            json!({ "metric": "geodesic_curve", "points": curve.points })
        }
        Metric::Miou => {
            let Some(parts) = ds.parts.as_deref() else {
                bail!("mIoU needs a part-labeling dataset (--points, --labels, --parts)");
            };
            let shapes = preds
                .iter()
                .zip(&ds.samples)
                .map(|(p, s)| miou(p, &s.targets, parts).map(|(_, m)| m))
                .collect::<feastnet::Result<Vec<_>>>()?;
            let overall = overall_miou(&shapes)?;
            println!("miou {overall:.4}");
            json!({ "metric": "miou", "per_shape": shapes, "miou": overall })
        }
    };
    if let Some(out) = &cli.out {
        let mut w = create(out)?;
        serde_json::to_writer_pretty(&mut w, &result)?;
        w.flush()?;
    }
    Ok(true)
}

pub fn sweep(cli: &Cli, a: &SweepArgs) -> Result<bool> {
    let cfg = resolve(cli, Some(a.task))?;
    print!("{}", cfg.to_toml());
    let levels = hierarchy_levels(a.task, &cfg);
    let (mut train, mut test, classes) = match a.task {
        Task::Toy => {
            let t = data::toy(&cfg)?;
            let classes = t.classes();
            (t.train, t.test, classes)
        }
        Task::Correspondence => {
            ensure!(!a.data.test_meshes.is_empty(), "sweep needs held-out meshes (--test-meshes)");
            let train = data::load_meshes(&a.data.meshes, cfg.model.center)?;
            let test = data::load_meshes(&a.data.test_meshes, cfg.model.center)?;
            ensure!(train[0].targets.len() == test[0].targets.len(), "train and test meshes differ in vertex count");
            let classes = train[0].targets.len();
            (train, test, classes)
        }
        Task::Partlabel => bail!("sweeps are defined for the correspondence and toy tasks"),
    };
    data::attach_hierarchies(&mut train, levels)?;
    data::attach_hierarchies(&mut test, levels)?;

    let axis = match a.axis {
        Axis::M => {
            let ms = a
                .values
                .iter()
                .map(|&v| {
                    ensure!(v >= 1.0 && v.fract() == 0.0, "M values must be positive integers, got {v}");
                    Ok(v as usize)
                })
                .collect::<Result<Vec<_>>>()?;
            SweepAxis::M(ms)
        }
        Axis::Noise => {
            ensure!(a.values.iter().all(|&v| v >= 0.0), "noise levels must be nonnegative");
            SweepAxis::TestNoise(a.values.clone())
        }
    };
    let task = SweepTask {
        input_width: train[0].features.cols(),
        train,
        test,
        classes,
        architecture: cfg.model.architecture,
        arch: cfg.arch.clone(),
    };
    let rows = ablation_sweep(&task, &axis, &cfg.train)?;

    println!("{:>6} {:>10} {:>10}", "axis", "setting", "accuracy");
    for r in &rows {
        println!("{:>6} {:>10} {:>10.4}", r.axis, r.setting, r.accuracy);
    }
    if let Some(out) = &cli.out {
        let mut w = create(out)?;
        for r in &rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(true)
}
