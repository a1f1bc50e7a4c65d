//! Dense arrays, reverse-mode differentiation and the segmentation-guided
//! attention model built on them.

pub mod autodiff;
pub mod checkpoint;
pub mod features;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use model::{
    attention_forward, loss_and_grads, predict, sample_loss_and_grads, AttentionMode, FeatureBundle, Mode, ModelDims,
    ModelError, ModelParams,
};
pub use optim::Adam;
pub use tensor::{Real, Tensor};
pub use train::{accuracy, fit, infer, train, Sample, TrainConfig};
