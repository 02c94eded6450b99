//! Dense numeric substrate: matrices, ReLU MLPs, losses and SGD.

mod loss;
mod matrix;
mod mlp;
mod train;

pub use loss::{
    accuracy, cross_entropy, kl_divergence, log_sum_exp, onehot, onehot_class, softmax_rows,
    softmax_temp, KL_EPS,
};
pub use matrix::{argmax, Matrix};
pub use mlp::{init_mlp, Activation, Gradients, LossKind, MlpModel, MlpSpec, Tier};
pub use train::{train_minibatch, train_supervised, SgdConfig, TrainStats};
