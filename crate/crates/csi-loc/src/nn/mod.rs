//! Minimal neural-network engine with explicit forward/backward passes.
//!
//! Covers exactly the layer set the localizer architectures need, a
//! mean-distance loss for coordinate regression, softmax cross-entropy for
//! the classification baseline, seeded deterministic training, and a binary
//! checkpoint format.

pub mod checkpoint;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_network, save_network};
pub use layer::{Affine, Conv2d, Layer, Mode};
pub use loss::{cross_entropy_loss, mde_loss};
pub use network::{Gradients, Network, Trace};
pub use optim::OptimizerKind;
pub use tensor::Tensor;
pub use train::{train, LossKind, TrainConfig, TrainSet, TrainTargets};
