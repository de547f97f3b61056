//! Feature-steered graph convolutions for 3D shape analysis.

pub mod block;
pub mod coarsen;
pub mod conv;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod matrix;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod toy;
pub mod trainer;

pub use block::{Block, BlockMut, Parameters};
pub use error::{Error, Result};
pub use graph::{Graph, LabeledPointCloud, Mesh};
pub use matrix::FeatureMatrix;
pub use scalar::Scalar;

/// Double-precision instantiations, the default for training and checks.
pub type Features = FeatureMatrix<f64>;
pub type ConvParams = conv::FeaStConvParams<f64>;
pub type Params = model::ModelParams<f64>;
pub type Checkpoint = trainer::Checkpoint<f64>;

/// Single-precision instantiations.
pub type Features32 = FeatureMatrix<f32>;
pub type ConvParams32 = conv::FeaStConvParams<f32>;
pub type Params32 = model::ModelParams<f32>;
