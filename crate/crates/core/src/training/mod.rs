//! Toy-scale supervised training of attention stacks with a pair hinge loss.

mod backward;
mod config;
mod loss;
mod train;

pub use backward::{backward, layer_backward, Gradients, LayerGrads};
pub use config::{PairPolicy, TrainConfig};
pub use loss::{hinge_pair_loss, hinge_pair_loss_grad, PairBatch};
pub use train::{
    cosine_lr, enhance, init_model, save_loss_trace, sgd_step, train, write_loss_trace, EpochStat,
    TrainOutcome,
};
