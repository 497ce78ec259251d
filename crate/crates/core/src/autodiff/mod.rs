//! Dense tensors, a reverse-mode tape, Adam, and gradient verification.

mod adam;
mod checkpoint;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{finite_diff_check, relative_error, CoordSample, GradCheckReport, RELATIVE_FLOOR};
pub use params::{init_rng, ParamId, ParamStore, Parameter};
pub use tape::{log_sum_exp, mean_var, sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Layer-norm variance regularizer.
pub const LAYER_NORM_EPS: f64 = 1e-5;
