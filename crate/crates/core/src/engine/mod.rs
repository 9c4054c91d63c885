//! CPU tensor engine: NCHW `f64` tensors, a reverse-mode tape, Glorot
//! initialization, Adam, gradient checking and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod kernels;
mod param;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, restore_params, save_checkpoint,
    Checkpoint, CheckpointHeader, ParamRecord, CHECKPOINT_MAGIC,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use kernels::sigmoid;
pub use param::{glorot_uniform, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
