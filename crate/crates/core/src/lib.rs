//! Frequency-domain text-to-motion generation at desk scale.

pub mod codec;
pub mod composer;
pub mod diffusion;
pub mod error;
pub mod motion;
pub mod phase;
pub mod rng;
pub mod segmentation;

pub use error::{Category, Error, Result};
