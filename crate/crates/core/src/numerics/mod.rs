//! Dense-network and linear-algebra machinery.

mod io;
mod loss;
mod matrix;
mod mlp;
mod optim;
mod pca;

pub use io::{
    read_mlp, read_observations, read_pca, write_mlp, write_observations, write_pca,
};
pub use loss::{cross_entropy_from_logits, cross_entropy_grad, mse_grad, mse_loss, softmax, LossTarget};
pub use matrix::{dot, Matrix};
pub use mlp::{Activation, ForwardCache, LayerParams, MlpParams, MlpSpec, ParamGrads};
pub use optim::{OptimizerKind, OptimizerState};
pub use pca::{jacobi_eigen, PcaModel};
