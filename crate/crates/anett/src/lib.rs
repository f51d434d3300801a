//! Reconstruction of linear inverse problems with a learned encoder-decoder
//! regularizer.
//!
//! The penalty combines a complexity functional of the encoder coefficients
//! with the squared distance of the iterate to the autoencoder output,
//!
//! ```text
//!     R(x) = phi(E(x)) + (c/2) * ||x - D(E(x))||^2 ,
//! ```
//!
//! and reconstructions minimize `D(Kx, y) + alpha * R(x)` by ADMM on the
//! splitting `E(x) = xi`.  The crate provides:
//!
//! * matrix-free tomographic operators (parallel-beam Radon transform, its
//!   exact adjoint and filtered backprojection) plus dense toy operators,
//! * similarity measures (squared norm, Kullback-Leibler, and a
//!   discontinuously weighted norm used as a stability counterexample),
//! * the weighted `l^q` penalty with its proximal map and Huber smoothing,
//! * small convolutional encoder-decoder networks with handwritten
//!   forward/backward passes, Adam, and the two-stage training strategy,
//! * the ADMM solver with its inner gradient-descent signal update,
//! * verification experiments for coercivity, stability, the instability
//!   counterexample and Bregman-distance convergence rates,
//! * phantom generation, noise models and the binary grid/checkpoint and
//!   text config formats used by the command line tools.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gridfile;
pub mod image;
pub mod nnet;
pub mod noise;
pub mod operators;
pub mod phantom;
pub mod regularizer;
pub mod similarity;
pub mod solver;
pub mod theory;

pub use error::{AnettError, Result};
pub use image::{Image, ScanGeometry, Sinogram};
pub use regularizer::{AnettConfig, Coefficients, PhiSpec};
pub use similarity::SimilaritySpec;
