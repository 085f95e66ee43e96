//! Fully convolutional time-series classifier with hand-written gradients.
//!
//! Three convolution / batch-norm / ReLU blocks keep the series length,
//! global average pooling collapses time, and a linear head with softmax
//! scores the damage classes.

mod adam;
pub mod layers;
mod model;
mod train;

pub use adam::{Adam, AdamConfig};
pub use model::{Architecture, ConvBlock, FcnModel, ForwardPass, Gradients, Mode, Prediction, BN_EPSILON, BN_MOMENTUM};
pub use train::{evaluate_split, train, PreparedSplit, TrainConfig, TrainingCurves};
