//! Layered configuration: task preset, then TOML file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use feastnet::conv::ConvInit;
use feastnet::eval::Architecture;
use feastnet::model::ArchConfig;
use feastnet::toy::ToyConfig;
use feastnet::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Coarsening levels built for the multi-scale model.
    pub levels: usize,
    /// Neighbors per point for point-cloud graphs.
    pub knn_k: usize,
    /// Centroid-relative XYZ input.
    pub center: bool,
    /// Total part labels across categories (part labeling).
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { architecture: Architecture::SingleScale, levels: 2, knn_k: 16, center: true, classes: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub trials: usize,
    pub tolerance: f64,
    pub model_tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self { trials: 10, tolerance: 1e-5, model_tolerance: 1e-4 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub arch: ArchConfig,
    pub model: ModelConfig,
    pub toy: ToyConfig,
    pub gradcheck: GradcheckSection,
}

impl FileConfig {
    /// Defaults for a task before the config file is applied.
    pub fn preset(task: Option<Task>) -> Self {
        let mut cfg = Self::default();
        match task {
            Some(Task::Toy) => {
                cfg.train.learning_rate = 0.1;
                cfg.train.epochs = 500;
                cfg.arch = ArchConfig {
                    m: 8,
                    translation_invariant: true,
                    width_scale: 0.5,
                    conv_init: ConvInit::VariancePreserving,
                };
            }
            Some(Task::Partlabel) => cfg.arch.m = 16,
            Some(Task::Correspondence) | None => {}
        }
        cfg
    }

    /// Preset overlaid with the TOML file at `path`, if any.
    pub fn load(task: Option<Task>, path: Option<&Path>) -> Result<Self> {
        let preset = Self::preset(task);
        let Some(path) = path else {
            return Ok(preset);
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let mut base = toml::Table::try_from(&preset).context("serializing preset")?;
        merge(&mut base, file);
        toml::Value::Table(base)
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
