//! Minimal differentiable toolkit for small convolutional networks.
//!
//! Everything is `f64` and every layer has an explicit, hand-written backward
//! pass. There is no autodiff graph: the U-Net records what it needs in a
//! [`unet::Trace`] during the forward pass and replays it in reverse.
//!
//! Batch elements are processed in parallel, but all gradient reductions over
//! the batch happen in a fixed order, so results are bit-identical regardless
//! of the number of worker threads.

pub mod adam;
pub mod checkpoint;
pub mod conv;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod param;
pub mod tensor;
pub mod unet;

pub use adam::AdamState;
pub use error::{NetError, Result};
pub use param::{Grads, ParamId, ParamSet};
pub use tensor::Tensor;
pub use unet::{AdaptationConfig, NetConfig, SnapshotNet, UNetConfig, UpsampleMode};
