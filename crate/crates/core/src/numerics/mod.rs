//! Dense matrices, row-wise primitives and reverse-mode gradients.

pub mod gradcheck;
pub mod init;
pub mod matrix;
pub mod ops;
pub mod params;
pub mod tape;

pub use gradcheck::{finite_diff_check, finite_diff_check_sampled, GradCheckEntry, GradCheckReport};
pub use init::xavier_uniform;
pub use matrix::Matrix;
pub use ops::{layer_norm, softmax_rows};
pub use params::ParameterStore;
pub use tape::{Gradients, NodeId, Tape};
