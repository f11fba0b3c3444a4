//! Multi-receptive-field convolutional physics-informed network solver.
//!
//! The crate is organised bottom-up:
//!
//! - [`fieldgrid`]: structured grids, multi-channel fields, input
//!   initialisation by boundary mean filtering, error metrics and the
//!   `FGRD` field file format.
//! - [`stencil`]: exact central-difference kernels, Taylor-polynomial
//!   virtual-node padding, and derivative operators built from both.
//! - [`diffcore`]: a small tape-based reverse-mode engine with dilated
//!   convolution, enough to train the network below.
//! - [`model`]: six resolution-adapted dilated encoder-decoder branches
//!   combined by learnable superposition coefficients.
//! - [`problems`]: linear second-order benchmarks, the axisymmetric swirl
//!   Navier-Stokes system and manufactured solutions.
//! - [`weighting`]: loss terms and the manual, dynamic and
//!   dimensional-balance weighting schemes.
//! - [`trainer`]: Adam followed by L-BFGS fine-tuning, with instrumentation.
//! - [`oracle`]: a direct sparse finite-difference reference solver.
//! - [`cliio`]: run configuration, experiment matrices and result export.

pub mod cliio;
pub mod diffcore;
pub mod error;
pub mod fieldgrid;
pub mod model;
pub mod oracle;
pub mod problems;
pub mod stencil;
pub mod trainer;
pub mod weighting;

pub use error::{Error, Result};
pub use fieldgrid::{Field, Geometry, Grid2D};
