use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate_accuracy;
use crate::error::{Error, Result};
use crate::model::{build_multi_scale, build_single_scale, ArchConfig, ModelParams, ModelSpec};
use crate::scalar::Scalar;
use crate::seed::{streams, sub_seed};
use crate::trainer::{train, Sample, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    SingleScale,
    MultiScale,
}

/// Training and test data plus the architecture being ablated.
#[derive(Clone, Debug)]
pub struct SweepTask<T> {
    pub train: Vec<Sample<T>>,
    pub test: Vec<Sample<T>>,
    pub input_width: usize,
    pub classes: usize,
    pub architecture: Architecture,
    pub arch: ArchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// One model per weight-matrix count.
    M(Vec<usize>),
    /// One model, evaluated on test copies at each relative noise level.
    TestNoise(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub setting: f64,
    pub accuracy: f64,
}

fn build<T: Scalar>(task: &SweepTask<T>, arch: &ArchConfig, seed: u64) -> Result<(ModelSpec, ModelParams<T>)> {
    let seed = sub_seed(seed, streams::PARAMS);
    match task.architecture {
        Architecture::SingleScale => build_single_scale(task.input_width, task.classes, arch, seed),
        Architecture::MultiScale => {
            let h = task
                .train
                .first()
                .and_then(|s| s.hierarchy.as_ref())
                .ok_or_else(|| Error::InvalidArgument("multi-scale sweep needs samples with a hierarchy".into()))?;
            build_multi_scale(task.input_width, task.classes, arch, h, seed)
        }
    }
}

/// Trains one model with `arch` and returns it with its test accuracy.
pub fn train_and_evaluate<T: Scalar>(
    task: &SweepTask<T>,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<(ModelSpec, ModelParams<T>, f64)> {
    let (spec, params) = build(task, arch, cfg.seed)?;
    let (params, _) = train(&spec, params, &task.train, cfg)?;
    let acc = evaluate_accuracy(&spec, &params, &task.test)?;
    Ok((spec, params, acc))
}

/// Runs the ablation; every setting shares `cfg.seed`.
pub fn ablation_sweep<T: Scalar>(task: &SweepTask<T>, axis: &SweepAxis, cfg: &TrainConfig) -> Result<Vec<SweepRow>> {
    match axis {
        SweepAxis::M(values) => values
            .par_iter()
            .map(|&m| {
                let arch = ArchConfig { m, ..task.arch.clone() };
                let (_, _, accuracy) = train_and_evaluate(task, &arch, cfg)?;
                Ok(SweepRow { axis: "m".into(), setting: m as f64, accuracy })
            })
            .collect(),
        SweepAxis::TestNoise(levels) => {
            let (spec, params, _) = train_and_evaluate(task, &task.arch, cfg)?;
            let eval_seed = sub_seed(cfg.seed, streams::EVAL);
            levels
                .par_iter()
                .map(|&sigma| {
                    let noisy = task
                        .test
                        .iter()
                        .enumerate()
                        .map(|(k, s)| s.with_noise(sigma, sub_seed(eval_seed, k as u64)))
                        .collect::<Result<Vec<_>>>()?;
                    let accuracy = evaluate_accuracy(&spec, &params, &noisy)?;
                    Ok(SweepRow { axis: "noise".into(), setting: sigma, accuracy })
                })
                .collect()
        }
    }
}
