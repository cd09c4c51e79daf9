//! Stochastic error modeling for stop-to-stop origin-destination (O-D)
//! share matrices.
//!
//! The crate simulates random noise models on reference O-D matrices,
//! computes RMS errors on O-D shares and on boarding/alighting marginals,
//! sweeps the error ratios over the number of stops N, fits a Lowess
//! smoother to the ratio curve, and inverts it to estimate the O-D error
//! from count-based errors alone.

pub mod experiment;
pub mod io;
pub mod matrix;
pub mod noise;
pub mod regress;
pub mod svg;
pub mod synth;

pub use matrix::{DeltaMatrix, ErrorSummary, MatrixError, ODShareMatrix};
pub use noise::{Distribution, NoiseKind, NoiseSpec, NoiseTerm};
