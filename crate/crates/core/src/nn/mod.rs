pub mod checkpoint;
pub mod hessian;
pub mod mlp;
pub mod objective;
pub mod train;

pub use hessian::{hessian_diag, hvp_fd, HessianDiag, HessianEstimator};
pub use mlp::{
    argmax, forward, grad, loss, loss_and_grad, predict, sample_losses, weighted_loss_and_grad,
    Activation, Batch, Forward, GradVector, MlpSpec, Params,
};
pub use objective::{MlpObjective, Objective, Quadratic};
pub use train::{sgd_train, TrainConfig};
