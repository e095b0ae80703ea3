//! Dense matrices, reverse-mode differentiation and finite-difference checks.
//!
//! All learnable computation in the crate is expressed with the operations
//! on [`Tape`]: matmul, transpose, broadcasting add and multiply, row
//! softmax, row and pairwise cosine, logistic, ReLU, layer normalization,
//! log, reciprocal, and sum/mean/max reductions.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{check_gradients, finite_diff_grad, relative_error, GradCheck, DEFAULT_STEP};
pub use matrix::Matrix;
pub use tape::{
    cosine_rows, logistic, softmax_rows, Axis, Gradients, Tape, Var, LAYER_NORM_EPS, ZERO_NORM,
};

#[cfg(test)]
mod tests;
