//! Minimal dense networks with explicit backward passes.

pub mod gradcheck;
mod mlp;
mod optim;

pub use gradcheck::{check_gradients, GradCheck};
pub use mlp::{softmax_rows, Activation, ForwardCache, Layer, Mlp, MlpGrads, SkipLink};
pub use optim::{OneCycle, Optimizer, OptimizerKind};
