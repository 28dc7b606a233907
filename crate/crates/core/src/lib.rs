//! Trimap-free alpha matting: compositing and dataset synthesis, the
//! MSIA-matte network, the blended training loss, the standard matting
//! metrics, and the training and ablation loop.

pub mod compositor;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod trainer;

pub use error::{MattingError, Result};
