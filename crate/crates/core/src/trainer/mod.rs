//! Plain SGD training with weight decay, noise augmentation and checkpoints.

mod checkpoint;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::Parameters;
use crate::coarsen::CoarseningHierarchy;
use crate::error::{Error, Result};
use crate::graph::{add_vertex_noise, Graph, Mesh};
use crate::layers::{softmax_cross_entropy, ClassMask};
use crate::matrix::FeatureMatrix;
use crate::model::{model_backward, model_forward, ModelParams, ModelSpec};
use crate::scalar::Scalar;
use crate::seed::{streams, sub_seed};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Relative noise levels; one is drawn uniformly per sample presentation.
    pub noise_levels: Vec<f64>,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            epochs: 100,
            seed: 0,
            noise_levels: Vec::new(),
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight decay {} must be nonnegative", self.weight_decay)));
        }
        if self.noise_levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("noise levels must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One training or evaluation graph with per-node targets.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub graph: Graph,
    pub features: FeatureMatrix<T>,
    pub targets: Vec<usize>,
    /// Classes allowed for every node of this sample.
    pub class_mask: Option<Vec<bool>>,
    /// Source mesh; noise augmentation replaces the features with its
    /// perturbed XYZ coordinates.
    pub mesh: Option<Mesh<T>>,
    /// Whether XYZ features are taken relative to the mesh centroid.
    pub center: bool,
    pub hierarchy: Option<CoarseningHierarchy>,
}

impl<T: Scalar> Sample<T> {
    /// Mesh sample with XYZ features (optionally centered) and its 1-ring graph.
    pub fn from_mesh(mesh: Mesh<T>, targets: Vec<usize>, center: bool) -> Self {
        Self {
            graph: crate::graph::one_ring(&mesh),
            features: mesh_features(&mesh, center),
            targets,
            class_mask: None,
            mesh: Some(mesh),
            center,
            hierarchy: None,
        }
    }

    pub fn mask(&self) -> ClassMask<'_> {
        match &self.class_mask {
            Some(m) => ClassMask::Shared(m),
            None => ClassMask::All,
        }
    }

    /// Copy with vertex noise applied to the mesh and features.
    pub fn with_noise(&self, sigma_rel: f64, seed: u64) -> Result<Self> {
        if sigma_rel == 0.0 {
            return Ok(self.clone());
        }
        let mesh = self
            .mesh
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("noise augmentation needs a mesh sample".into()))?;
        let noisy = add_vertex_noise(mesh, sigma_rel, seed)?;
        Ok(Self { features: mesh_features(&noisy, self.center), mesh: Some(noisy), ..self.clone() })
    }

    pub fn forward(&self, spec: &ModelSpec, params: &ModelParams<T>) -> Result<FeatureMatrix<T>> {
        Ok(model_forward(spec, params, &self.features, &self.graph, self.hierarchy.as_ref())?.0)
    }

    /// Arg-max class per node, restricted to the sample's class mask.
    pub fn predict(&self, spec: &ModelSpec, params: &ModelParams<T>) -> Result<Vec<usize>> {
        Ok(masked_argmax(&self.forward(spec, params)?, self.class_mask.as_deref()))
    }
}

fn mesh_features<T: Scalar>(mesh: &Mesh<T>, center: bool) -> FeatureMatrix<T> {
    if center {
        mesh.centered().xyz_features()
    } else {
        mesh.xyz_features()
    }
}

/// Row-wise arg-max over allowed columns; ties go to the lowest index.
pub fn masked_argmax<T: Scalar>(logits: &FeatureMatrix<T>, mask: Option<&[bool]>) -> Vec<usize> {
    let Some(mask) = mask else {
        return logits.argmax_rows();
    };
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = None::<usize>;
            for k in (0..row.len()).filter(|&k| mask[k]) {
                if best.is_none_or(|b| row[k] > row[b]) {
                    best = Some(k);
                }
            }
            best.unwrap_or(0)
        })
        .collect()
}

/// `θ ← θ − lr·(g + wd·θ)`; blocks flagged as non-decaying skip the `wd` term.
pub fn sgd_step<T: Scalar, P: Parameters<T>>(params: &mut P, grads: &P, cfg: &TrainConfig) -> Result<()> {
    let gb = grads.blocks();
    let mut pb = params.blocks_mut();
    if gb.len() != pb.len() || pb.iter().zip(&gb).any(|(p, g)| p.values.len() != g.values.len()) {
        return Err(Error::dims("gradient blocks do not match parameter blocks"));
    }
    let lr = T::of(cfg.learning_rate);
    let wd = T::of(cfg.weight_decay);
    for (p, g) in pb.iter_mut().zip(&gb) {
        if p.decay {
            for (x, &d) in p.values.iter_mut().zip(g.values) {
                *x -= lr * (d + wd * *x);
            }
        } else {
            for (x, &d) in p.values.iter_mut().zip(g.values) {
                *x -= lr * d;
            }
        }
    }
    Ok(())
}

/// Per-epoch training metrics (one NDJSON line each).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean cross-entropy of the presented samples, each taken before its update.
    pub loss: f64,
    /// Mean per-node accuracy over the clean training set at the end of the epoch.
    pub accuracy: f64,
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients<T: Scalar>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    sample: &Sample<T>,
) -> Result<(f64, ModelParams<T>)> {
    let (logits, cache) = model_forward(spec, params, &sample.features, &sample.graph, sample.hierarchy.as_ref())?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, &sample.targets, sample.mask())?;
    let (grads, _) = model_backward(spec, params, &sample.graph, sample.hierarchy.as_ref(), &cache, &dlogits)?;
    Ok((loss.as_f64(), grads))
}

/// Mean per-node accuracy over `samples`.
pub fn mean_accuracy<T: Scalar>(spec: &ModelSpec, params: &ModelParams<T>, samples: &[Sample<T>]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let pred = s.predict(spec, params)?;
        let hits = pred.iter().zip(&s.targets).filter(|(p, t)| p == t).count();
        total += if pred.is_empty() { 0.0 } else { hits as f64 / pred.len() as f64 };
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Training state that can be checkpointed and resumed.
///
/// Epoch `e` shuffles and draws noise from a generator seeded by
/// `(seed, e)`, so `(seed, epoch)` is the whole random state.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub spec: ModelSpec,
    pub params: ModelParams<T>,
    pub cfg: TrainConfig,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(spec: ModelSpec, params: ModelParams<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        params.check_against(&spec)?;
        Ok(Self { spec, params, cfg, epoch: 0, history: Vec::new() })
    }

    /// Resumes from a checkpoint; `cfg.seed` is taken from the checkpoint.
    pub fn resume(ckpt: Checkpoint<T>, mut cfg: TrainConfig) -> Result<Self> {
        cfg.seed = ckpt.rng_seed;
        let mut t = Self::new(ckpt.spec, ckpt.params, cfg)?;
        t.epoch = ckpt.epoch;
        t.history = ckpt.history;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            spec: self.spec.clone(),
            params: self.params.clone(),
            epoch: self.epoch,
            rng_seed: self.cfg.seed,
            history: self.history.clone(),
        }
    }

    /// One shuffled pass over `data`.
    pub fn run_epoch(&mut self, data: &[Sample<T>]) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let epoch = self.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(sub_seed(self.cfg.seed, streams::TRAIN), epoch as u64));
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for &s in &order {
            let noisy;
            let sample = if self.cfg.noise_levels.is_empty() {
                &data[s]
            } else {
                let sigma = self.cfg.noise_levels[rng.random_range(0..self.cfg.noise_levels.len())];
                noisy = data[s].with_noise(sigma, rng.random())?;
                &noisy
            };
            let (loss, grads) = sample_gradients(&self.spec, &self.params, sample)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            sgd_step(&mut self.params, &grads, &self.cfg)?;
            loss_sum += loss;
        }
        let accuracy = mean_accuracy(&self.spec, &self.params, data)?;
        let rec = EpochRecord { epoch, loss: loss_sum / data.len() as f64, accuracy };
        self.epoch = epoch;
        self.history.push(rec.clone());
        Ok(rec)
    }

    /// Trains until `cfg.epochs`, logging NDJSON records and writing
    /// checkpoints every `checkpoint_interval` epochs and at the end.
    pub fn run(
        &mut self,
        data: &[Sample<T>],
        mut log: Option<&mut dyn Write>,
        checkpoint_path: Option<&Path>,
    ) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            let rec = self.run_epoch(data)?;
            if let Some(w) = log.as_deref_mut() {
                serde_json::to_writer(&mut *w, &rec)?;
                w.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
            }
            if let Some(path) = checkpoint_path {
                let every = self.cfg.checkpoint_interval;
                if (every > 0 && self.epoch.is_multiple_of(every)) || self.epoch == self.cfg.epochs {
                    save_checkpoint(path, &self.checkpoint())?;
                }
            }
        }
        Ok(())
    }
}

/// Trains `params` for `cfg.epochs` and returns them with the loss history.
pub fn train<T: Scalar>(
    spec: &ModelSpec,
    params: ModelParams<T>,
    data: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, Vec<EpochRecord>)> {
    let mut t = Trainer::new(spec.clone(), params, cfg.clone())?;
    t.run(data, None, None)?;
    Ok((t.params, t.history))
}
