//! Normalized flow-matching paths, the training objective and vector fields.
//!
//! A clean image `x0` and its noisy version `x1 = x0 + sigma_hat * eps` are
//! joined by the straight path `x_t = (1 - t) x0 + t x1`. The regression target
//! is the displacement rescaled to the maximal noise level,
//! `(sigma_max / sigma_hat) (x1 - x0) = sigma_max * eps`, so every noise level
//! shares one normalized direction field.

mod checkpoint;
mod mlp;
mod train;

pub use checkpoint::{load_field, Checkpoint, LayerRecord};
pub use mlp::{Dense, Gradients, MlpField};
pub use train::{gradient_check, train, Adam, GradientCheck, TrainConfig, TrainOutcome};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Dims, Error, Result};
use crate::image::Image;
use crate::seeded_rng;

/// What a [`VectorField`] is backed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Closed-form constant field built from a known clean/noisy pair.
    Oracle,
    /// Trained multilayer perceptron.
    Mlp,
}

/// A time- and noise-conditioned velocity field over images of one resolution.
pub trait VectorField {
    fn kind(&self) -> FieldKind;

    /// `(height, width)` of the states this field accepts.
    fn resolution(&self) -> Dims;

    /// Velocity at `state`, time `t` and noise level `sigma_hat`.
    fn evaluate(&self, state: &Image, t: f64, sigma_hat: f64) -> Result<Image>;

    fn check_state(&self, state: &Image) -> Result<()> {
        if state.dims() != self.resolution() {
            return Err(Error::Shape {
                expected: self.resolution(),
                actual: state.dims(),
            });
        }
        Ok(())
    }
}

impl<F: VectorField + ?Sized> VectorField for Box<F> {
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
    fn resolution(&self) -> Dims {
        (**self).resolution()
    }
    fn evaluate(&self, state: &Image, t: f64, sigma_hat: f64) -> Result<Image> {
        (**self).evaluate(state, t, sigma_hat)
    }
}

/// One point on a normalized path together with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x_t: Image,
    pub t: f64,
    pub sigma_hat: f64,
    /// `(sigma_max / sigma_hat) (x1 - x0)`; independent of `t`.
    pub target: Image,
    /// Noisy endpoint the path runs to.
    pub x1: Image,
}

fn check_levels(sigma_hat: f64, sigma_max: f64) -> Result<()> {
    if !(sigma_max > 0.0) || !sigma_max.is_finite() {
        return Err(Error::param(format!(
            "sigma_max must be positive, got {sigma_max}"
        )));
    }
    if !(sigma_hat > 0.0) || sigma_hat > sigma_max {
        return Err(Error::param(format!(
            "sigma_hat must lie in (0, sigma_max = {sigma_max}], got {sigma_hat}"
        )));
    }
    Ok(())
}

/// Builds the path sample for a given shared noise draw `eps`.
pub fn path_sample_from_noise(
    x0: &Image,
    eps: &[f64],
    sigma_hat: f64,
    sigma_max: f64,
    t: f64,
) -> Result<PathSample> {
    check_levels(sigma_hat, sigma_max)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("t must lie in [0, 1], got {t}")));
    }
    if eps.len() != x0.len() {
        return Err(Error::param(format!(
            "noise draw has {} values for an image of {}",
            eps.len(),
            x0.len()
        )));
    }
    let (h, w) = (x0.height(), x0.width());
    let x1: Vec<f64> = x0
        .data()
        .iter()
        .zip(eps)
        .map(|(a, e)| a + sigma_hat * e)
        .collect();
    let x_t = x0
        .data()
        .iter()
        .zip(&x1)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect();
    let scale = sigma_max / sigma_hat;
    let target = x0
        .data()
        .iter()
        .zip(&x1)
        .map(|(a, b)| scale * (b - a))
        .collect();
    Ok(PathSample {
        x_t: Image::new(h, w, x_t)?,
        t,
        sigma_hat,
        target: Image::new(h, w, target)?,
        x1: Image::new(h, w, x1)?,
    })
}

/// Draws `eps` from `seed` and builds the path sample at time `t`.
pub fn make_path_sample(
    x0: &Image,
    sigma_hat: f64,
    sigma_max: f64,
    t: f64,
    seed: u64,
) -> Result<PathSample> {
    let mut rng = seeded_rng(seed);
    let eps: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    path_sample_from_noise(x0, &eps, sigma_hat, sigma_max, t)
}

/// Mean over the batch of the per-sample mean squared residual
/// `|v(x_t, t, sigma_hat) - target|^2 / d`.
pub fn qfm_loss(field: &impl VectorField, batch: &[PathSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::param("loss needs a non-empty batch"));
    }
    let mut total = 0.0;
    for s in batch {
        let v = field.evaluate(&s.x_t, s.t, s.sigma_hat)?;
        v.check_same_shape(&s.target)?;
        let sq: f64 = v
            .data()
            .iter()
            .zip(s.target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sq / v.len() as f64;
    }
    Ok(total / batch.len() as f64)
}

/// A field that returns the same array everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleField {
    velocity: Image,
}

impl OracleField {
    pub fn constant(velocity: Image) -> Self {
        OracleField { velocity }
    }

    pub fn velocity(&self) -> &Image {
        &self.velocity
    }
}

/// The exact normalized field `(sigma_max / sigma_hat) (x1 - x0)` of one pair.
pub fn oracle_field(x0: &Image, x1: &Image, sigma_hat: f64, sigma_max: f64) -> Result<OracleField> {
    x0.check_same_shape(x1)?;
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(Error::param(format!(
            "oracle field needs sigma_hat > 0, got {sigma_hat}"
        )));
    }
    if !(sigma_max > 0.0) || !sigma_max.is_finite() {
        return Err(Error::param(format!(
            "sigma_max must be positive, got {sigma_max}"
        )));
    }
    let scale = sigma_max / sigma_hat;
    let v = x0
        .data()
        .iter()
        .zip(x1.data())
        .map(|(a, b)| scale * (b - a))
        .collect();
    Ok(OracleField::constant(Image::new(
        x0.height(),
        x0.width(),
        v,
    )?))
}

impl VectorField for OracleField {
    fn kind(&self) -> FieldKind {
        FieldKind::Oracle
    }

    fn resolution(&self) -> Dims {
        self.velocity.dims()
    }

    fn evaluate(&self, state: &Image, _t: f64, _sigma_hat: f64) -> Result<Image> {
        self.check_state(state)?;
        Ok(self.velocity.clone())
    }
}
