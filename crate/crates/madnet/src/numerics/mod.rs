//! Dense f64 arrays, reverse-mode differentiation, AdamW, checkpoints, and
//! finite-difference gradient verification.

pub mod array;
pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod tape;

pub use array::Array;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use gradcheck::grad_check;
pub use optim::{adamw_step, clip_global_norm, global_norm, OptState, ParamMap};
pub use tape::{
    attention_mask, causal_mask, concat_cols, concat_picked_rows, concat_rows, Gradients, Tape,
    Var,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: String,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("loss must be scalar, got [{rows}, {cols}]")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
