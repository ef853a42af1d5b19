//! Hand-differentiated layers for the two-branch relevance regressor.
//!
//! Branch one runs a time-distributed dense layer and an LSTM over a video's
//! frame features; branch two runs a dense stack over its video-level vector.
//! The two outputs are concatenated and fed to a sigmoid head with one unit
//! per candidate video.

mod adam;
#[cfg(test)]
mod gradcheck;
mod layers;
mod loss;
mod lstm;
mod regression;
mod tensor;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use layers::{dense_forward, time_distributed_dense, Activation, Dense, DenseCache};
pub use loss::{cosine_proximity_loss, poisson_loss, LossKind, POISSON_FLOOR};
pub use lstm::{Lstm, LstmCache};
pub use regression::{
    build_and_train_regression, predict_regression, RegressionModel, RegressionNetConfig, TrainingHistory,
};
pub use tensor::Tensor;
