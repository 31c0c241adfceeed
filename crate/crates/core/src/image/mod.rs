//! Grayscale image container, synthetic noise injection, metrics and file I/O.
//!
//! Intensities are stored as `f64` in row-major order. The nominal range is
//! `[0, 1]`, but nothing here clamps: noisy images routinely leave that range
//! and the noise estimator depends on seeing the untruncated values.

mod io;
mod metrics;

pub use io::{
    is_lossless_path, read_image, read_pfm, read_pgm, read_png, write_image, write_pfm, write_pgm,
    write_png, BitDepth,
};
pub use metrics::{mse, psnr, ssim, Metrics, SSIM_WINDOW};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Dims, Error, Result};
use crate::seeded_rng;

/// A single-channel image with finite `f64` intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Wraps a row-major buffer, validating its length and finiteness.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::param(format!(
                "buffer of {} values cannot back a {height}x{width} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite intensity at index {i}")));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// An image with every pixel set to `value`.
    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(height, width, vec![value; height * width])
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Image::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims(self.height, self.width)
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Errors unless `other` has the same height and width.
    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Applies `f` to every pixel. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn transpose(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.width {
            for r in 0..self.height {
                data.push(self.get(r, c));
            }
        }
        Image {
            height: self.width,
            width: self.height,
            data,
        }
    }

    /// Clamps every pixel into `[0, 1]`. Only meant for display exports.
    pub fn clipped(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Fraction of pixels sitting exactly on 0 or 1.
    ///
    /// A large value indicates the image was clipped after noise was added.
    pub fn saturated_fraction(&self) -> f64 {
        let n = self.data.iter().filter(|&&v| v == 0.0 || v == 1.0).count();
        n as f64 / self.data.len() as f64
    }
}

/// Returns `img + sigma * eps` with `eps` i.i.d. standard normal per pixel.
///
/// Noise is drawn serially in row-major order from a ChaCha stream seeded by
/// `seed`, so output is reproducible across platforms. With `sigma == 0` the
/// input is returned unchanged, bit for bit.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = seeded_rng(seed);
    let data = img
        .data
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + sigma * z
        })
        .collect();
    Image::new(img.height, img.width, data)
}
