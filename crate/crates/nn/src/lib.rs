//! Minimal reverse-mode autodiff over dense `f64` matrices, with the layers
//! and optimizer needed by the phasegen models.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use layers::{Conv1d, LayerNorm, Linear, TransformerBlock};
pub use optim::{Adam, LrSchedule};
pub use params::{ParamId, ParamStore};
pub use tape::{Function, Gradients, Mat, Tape, Var};
