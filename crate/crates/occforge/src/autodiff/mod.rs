//! Dense f64 numerics with reverse-mode automatic differentiation,
//! a seeded parameter store, Adam, and a finite-difference gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod ops;
mod store;
mod tape;

pub use adam::Adam;
pub use checkpoint::{
    read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use ops::{
    bilinear_sample, conv2d, expand_head_scale, fill_volume, head_combine, kl_from_log_probs,
    nll_masked, trilinear_sample, upsample_nn3,
};
pub use store::{Init, Param, ParamBinder, ParameterStore};
pub use tape::{Tape, Tensor};
