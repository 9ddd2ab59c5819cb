//! Hand-rolled neural network pieces: dense layers, Adam, the hybrid
//! policy with its clipped-surrogate gradients, and plain-text
//! checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod policy;

pub use adam::Adam;
pub use checkpoint::{load_policy, policy_from_str, policy_to_string, save_policy};
pub use dense::{dense_backward, orthogonal_matrix, tanh_backward, tanh_inplace, Dense, DenseGrad};
pub use policy::{
    gaussian_logp, ActionSample, LossSample, ParamGroup, PolicyConfig, PolicyGrads, PolicySet,
    SurrogateStats,
};
