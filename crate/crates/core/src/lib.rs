//! Speckle-noise removal with a gray-level-indicator telegraph diffusion
//! model, a parabolic reference model, and the tooling to evaluate both.

pub mod diffusivity;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod noise;
pub mod smoothing;
pub mod solver;
pub mod synth;

pub use diffusivity::{ShanParams, TdeParams};
pub use error::{Error, Result};
pub use grid::{ImageGrid, StencilMode};
pub use noise::NoiseSpec;
pub use solver::{run, Model, RunReport, StoppingPolicy};
