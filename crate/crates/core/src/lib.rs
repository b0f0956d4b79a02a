pub mod bnn;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod kernels;
pub mod lpf;
pub mod numeric;
pub mod nuts;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
