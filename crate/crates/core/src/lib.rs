//! Noise-adaptive flow-matching denoising.
//!
//! The pipeline has three stages:
//!
//! 1. [`noise`] estimates a global Gaussian noise level from order statistics
//!    of 2x2 blocks, without any training data.
//! 2. [`schedule`] turns that level into a start time on a shared grid and a
//!    coarse-to-fine list of integration times back to `t = 0`.
//! 3. [`solver`] integrates a [`flow::VectorField`] along that list with
//!    explicit Euler steps.
//!
//! [`flow`] holds the normalized training objective, a closed-form oracle
//! field and a small trainable MLP field. [`image`] provides the image type,
//! noise injection, PSNR/SSIM and PGM/PNG I/O.
//!
//! ```
//! use qfm::image::{add_gaussian_noise, Image};
//! use qfm::noise::{estimate_sigma, CalibrationConstants};
//!
//! let clean = Image::filled(256, 256, 0.5)?;
//! let noisy = add_gaussian_noise(&clean, 0.2, 1)?;
//! let est = estimate_sigma(&noisy, &CalibrationConstants::default(), 0)?;
//! assert!((est.sigma_hat - 0.2).abs() < 0.01);
//! # Ok::<(), qfm::Error>(())
//! ```

pub mod error;
pub mod flow;
pub mod image;
pub mod noise;
pub mod schedule;
pub mod solver;
pub mod synthetic;

pub use error::{Dims, Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide deterministic RNG.
pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
