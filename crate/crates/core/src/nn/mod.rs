//! Just enough of a neural-network stack for the histogram encoder:
//! dense f64 tensors, tape-based reverse-mode autodiff over a handful of
//! operators, AdamW, and a versioned checkpoint format.

mod adamw;
mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use adamw::{AdamWConfig, AdamWState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use graph::{Gradients, Graph, Var};
pub use ops::{conv1d_forward, l2_normalize, triplet_loss, NORM_EPSILON};
pub use tensor::Tensor;
