use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::spec::{LayerSpec, ModelSpec};
use crate::coarsen::CoarseningHierarchy;
use crate::conv::ConvInit;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Knobs shared by the stock architectures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Weight matrices per convolution.
    pub m: usize,
    pub translation_invariant: bool,
    /// Multiplies every hidden width (rounded up); 1.0 gives the stock widths.
    pub width_scale: f64,
    pub conv_init: ConvInit,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { m: 32, translation_invariant: true, width_scale: 1.0, conv_init: ConvInit::MassScaled }
    }
}

impl ArchConfig {
    fn width(&self, w: usize) -> usize {
        ((w as f64 * self.width_scale).ceil() as usize).max(1)
    }

    fn conv(&self, w: usize) -> LayerSpec {
        LayerSpec::Conv { out: self.width(w), m: self.m, translation_invariant: self.translation_invariant }
    }

    fn lin(&self, w: usize) -> LayerSpec {
        LayerSpec::Lin { out: self.width(w) }
    }

    fn check(&self) -> Result<()> {
        if self.m == 0 || !(self.width_scale > 0.0 && self.width_scale.is_finite()) {
            return Err(Error::InvalidArgument("architecture needs M >= 1 and a positive width scale".into()));
        }
        Ok(())
    }
}

/// `Lin16 + Conv32 + Conv64 + Conv128 + Lin256 + LinC`, rectifier after
/// every hidden layer.
pub fn single_scale_spec(d_in: usize, classes: usize, arch: &ArchConfig) -> Result<ModelSpec> {
    arch.check()?;
    let layers = vec![
        arch.lin(16),
        LayerSpec::Relu,
        arch.conv(32),
        LayerSpec::Relu,
        arch.conv(64),
        LayerSpec::Relu,
        arch.conv(128),
        LayerSpec::Relu,
        arch.lin(256),
        LayerSpec::Relu,
        LayerSpec::Lin { out: classes },
    ];
    let spec = ModelSpec { input_width: d_in, classes, layers };
    spec.shapes()?;
    Ok(spec)
}

/// Two-level encoder/decoder with skip connections:
///
/// ```text
/// Lin16 Conv32 ─Pool─ Conv64 ─Pool─ Conv128
///          │            │              │
///          │            └──Skip── Unpool
///          │                  Conv64
///          └──────────Skip── Unpool
///                     Conv32 Lin256 LinC
/// ```
pub fn multi_scale_spec(d_in: usize, classes: usize, arch: &ArchConfig) -> Result<ModelSpec> {
    arch.check()?;
    use LayerSpec::*;
    let layers = vec![
        arch.lin(16), // 0
        Relu,
        arch.conv(32), // 2
        Relu,          // 3: level-0 skip source
        Pool,
        arch.conv(64), // 5
        Relu,          // 6: level-1 skip source
        Pool,
        arch.conv(128), // 8
        Relu,
        Unpool,
        SkipConcat { from: 6 },
        arch.conv(64), // 12
        Relu,
        Unpool,
        SkipConcat { from: 3 },
        arch.conv(32), // 16
        Relu,
        arch.lin(256),
        Relu,
        Lin { out: classes },
    ];
    let spec = ModelSpec { input_width: d_in, classes, layers };
    spec.shapes()?;
    Ok(spec)
}

/// `Lin16-Conv32-Conv64-Conv128-Lin512-Lin2048`, then every hidden output
/// concatenated with the global max of the last, then `Lin1024-LinC`.
pub fn part_labeler_spec(d_in: usize, classes: usize, arch: &ArchConfig) -> Result<ModelSpec> {
    arch.check()?;
    use LayerSpec::*;
    let layers = vec![
        arch.lin(16),
        Relu, // 1
        arch.conv(32),
        Relu, // 3
        arch.conv(64),
        Relu, // 5
        arch.conv(128),
        Relu, // 7
        arch.lin(512),
        Relu, // 9
        arch.lin(2048),
        Relu, // 11
        GlobalMaxConcat { from: vec![1, 3, 5, 7, 9, 11] },
        arch.lin(1024),
        Relu,
        Lin { out: classes },
    ];
    let spec = ModelSpec { input_width: d_in, classes, layers };
    spec.shapes()?;
    Ok(spec)
}

pub fn build_single_scale<T: Scalar>(
    d_in: usize,
    classes: usize,
    arch: &ArchConfig,
    seed: u64,
) -> Result<(ModelSpec, ModelParams<T>)> {
    let spec = single_scale_spec(d_in, classes, arch)?;
    let params = ModelParams::init_with(&spec, seed, arch.conv_init)?;
    Ok((spec, params))
}

pub fn build_multi_scale<T: Scalar>(
    d_in: usize,
    classes: usize,
    arch: &ArchConfig,
    hierarchy: &CoarseningHierarchy,
    seed: u64,
) -> Result<(ModelSpec, ModelParams<T>)> {
    let spec = multi_scale_spec(d_in, classes, arch)?;
    if hierarchy.levels() < spec.depth() {
        return Err(Error::InvalidArgument(format!(
            "multi-scale model needs {} coarsening levels, hierarchy has {}",
            spec.depth(),
            hierarchy.levels()
        )));
    }
    let params = ModelParams::init_with(&spec, seed, arch.conv_init)?;
    Ok((spec, params))
}

pub fn build_part_labeler<T: Scalar>(
    d_in: usize,
    classes: usize,
    arch: &ArchConfig,
    seed: u64,
) -> Result<(ModelSpec, ModelParams<T>)> {
    let spec = part_labeler_spec(d_in, classes, arch)?;
    let params = ModelParams::init_with(&spec, seed, arch.conv_init)?;
    Ok((spec, params))
}
