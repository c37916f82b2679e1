//! Feed-forward policy and value networks, their exact gradients and Adam.

mod adam;
mod dist;
mod loss;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use dist::CategoricalDist;
pub use loss::LossHead;
pub use matrix::Matrix;
pub use mlp::{
    ForwardCache, LayerRecord, LossAndGrad, Mlp, MlpRecord, OutputInit, MLP_FORMAT, MLP_VERSION,
};
