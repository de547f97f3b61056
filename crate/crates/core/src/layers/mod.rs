//! Non-convolutional layers with hand-written reverse passes.

mod global;
mod linear;
mod loss;
mod pool;
mod relu;

pub use global::{global_max_concat, global_max_concat_backward, GlobalMaxArgs};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearParams};
pub use loss::{softmax_cross_entropy, ClassMask};
pub use pool::{max_pool, max_pool_backward, unpool, unpool_backward, PoolArgmax, PoolMap, UnpoolGrads, UnpoolParams};
pub use relu::{relu_backward, relu_forward};
