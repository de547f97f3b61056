//! Layer sequences, their parameters, and whole-model execution.

mod build;
mod exec;
mod params;
mod spec;

pub use build::{
    build_multi_scale, build_part_labeler, build_single_scale, multi_scale_spec, part_labeler_spec,
    single_scale_spec, ArchConfig,
};
pub use exec::{model_backward, model_forward, ForwardCache};
pub use params::{LayerParams, ModelParams};
pub use spec::{LayerShape, LayerSpec, ModelSpec};
