use serde::{Deserialize, Serialize};

use super::spec::{LayerSpec, ModelSpec};
use crate::block::{Block, BlockMut, Parameters};
use crate::conv::{ConvInit, FeaStConvParams};
use crate::error::{Error, Result};
use crate::layers::{LinearParams, UnpoolParams};
use crate::scalar::Scalar;
use crate::seed::sub_seed;

/// Parameters owned by one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerParams<T> {
    None,
    Linear(LinearParams<T>),
    Conv(FeaStConvParams<T>),
    Unpool(UnpoolParams<T>),
}

impl<T: Scalar> LayerParams<T> {
    fn as_dyn(&self) -> Option<&dyn Parameters<T>> {
        match self {
            LayerParams::None => None,
            LayerParams::Linear(p) => Some(p),
            LayerParams::Conv(p) => Some(p),
            LayerParams::Unpool(p) => Some(p),
        }
    }

    fn as_dyn_mut(&mut self) -> Option<&mut dyn Parameters<T>> {
        match self {
            LayerParams::None => None,
            LayerParams::Linear(p) => Some(p),
            LayerParams::Conv(p) => Some(p),
            LayerParams::Unpool(p) => Some(p),
        }
    }

    pub fn blocks(&self) -> Vec<Block<'_, T>> {
        self.as_dyn().map(|p| p.blocks()).unwrap_or_default()
    }

    pub fn blocks_mut(&mut self) -> Vec<BlockMut<'_, T>> {
        self.as_dyn_mut().map(|p| p.blocks_mut()).unwrap_or_default()
    }
}

/// One parameter block per parameterized layer, aligned with `ModelSpec::layers`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Random parameters for `spec`; layer `k` draws from sub-seed `k`.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Self::init_with(spec, seed, ConvInit::MassScaled)
    }

    pub fn init_with(spec: &ModelSpec, seed: u64, conv_init: ConvInit) -> Result<Self> {
        let shapes = spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .enumerate()
            .map(|(k, (layer, s))| {
                let seed = sub_seed(seed, k as u64);
                match layer {
                    LayerSpec::Lin { out } => LayerParams::Linear(LinearParams::init(s.in_width, *out, seed)),
                    LayerSpec::Conv { out, m, translation_invariant } => {
                        LayerParams::Conv(FeaStConvParams::init_with(conv_init, *m, s.in_width, *out, seed, *translation_invariant))
                    }
                    LayerSpec::Unpool => LayerParams::Unpool(UnpoolParams::copy(s.in_width)),
                    _ => LayerParams::None,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero parameters for `spec` (unpool kernels included).
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, s)| match layer {
                LayerSpec::Lin { out } => LayerParams::Linear(LinearParams::zeros(s.in_width, *out)),
                LayerSpec::Conv { out, m, translation_invariant } => {
                    LayerParams::Conv(FeaStConvParams::zeros(*m, s.in_width, *out, *translation_invariant))
                }
                LayerSpec::Unpool => LayerParams::Unpool(UnpoolParams::zeros(s.in_width)),
                _ => LayerParams::None,
            })
            .collect();
        Ok(Self { layers })
    }

    /// Same structure as `self` with every entry zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for b in z.blocks_mut() {
            b.values.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    /// Checks that every layer's blocks have the shapes `spec` implies.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let shapes = spec.shapes()?;
        if self.layers.len() != spec.layers.len() {
            return Err(Error::dims("parameter layer count differs from the model spec"));
        }
        for (k, ((layer, s), p)) in spec.layers.iter().zip(&shapes).zip(&self.layers).enumerate() {
            let ok = match (layer, p) {
                (LayerSpec::Lin { out }, LayerParams::Linear(p)) => p.in_dim() == s.in_width && p.out_dim() == *out,
                (LayerSpec::Conv { out, m, translation_invariant }, LayerParams::Conv(p)) => {
                    p.in_dim() == s.in_width
                        && p.out_dim() == *out
                        && p.n_matrices() == *m
                        && p.translation_invariant() == *translation_invariant
                }
                (LayerSpec::Unpool, LayerParams::Unpool(p)) => p.channels() == s.in_width,
                (LayerSpec::Lin { .. } | LayerSpec::Conv { .. } | LayerSpec::Unpool, _) => false,
                (_, p) => matches!(p, LayerParams::None),
            };
            if !ok {
                return Err(Error::dims(format!("layer {k} parameter shapes differ from the model spec")));
            }
        }
        Ok(())
    }

    /// `θ += alpha · other`, block by block.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, &y) in a.values.iter_mut().zip(b.values) {
                *x += alpha * y;
            }
        }
    }
}

impl<T: Scalar> Parameters<T> for ModelParams<T> {
    fn blocks(&self) -> Vec<Block<'_, T>> {
        self.layers.iter().flat_map(|l| l.blocks()).collect()
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_, T>> {
        self.layers.iter_mut().flat_map(|l| l.blocks_mut()).collect()
    }
}
