//! Simulation and estimation of RIS-aided mmWave cascaded channels.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`channel_sim`]: geometric multipath channels, orthogonal pilots, noisy
//!   despread observations and the on-disk dataset format.
//! - [`tensor_nn`]: a small dense tensor plus hand-derived forward and backward
//!   passes for convolution, ReLU, softmax, normalisation, residual blocks,
//!   residual dense blocks and the conv-relu-conv attention block.
//! - [`models`]: the three estimators (CBDNet, GAN-CBD, MRDN), checkpoints and
//!   operation counting.
//! - [`training`]: losses, SGD, the mini-batch training loop and the
//!   finite-difference gradient checker.
//! - [`eval_bench`]: NMSE, the least-squares baseline, SNR sweeps and capacity
//!   sweeps.

pub mod channel_sim;
pub mod error;
pub mod eval_bench;
pub mod models;
pub mod rng;
pub mod tensor_nn;
pub mod training;

pub use error::{Error, Result};

/// Complex scalar used throughout the channel model.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix (column-major, nalgebra).
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense real matrix (column-major, nalgebra).
pub type RMatrix = nalgebra::DMatrix<f64>;
