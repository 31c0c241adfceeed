use serde::Serialize;

use super::Image;
use crate::error::{Error, Result};

/// Side length of the square SSIM window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

/// PSNR and SSIM of a result against a reference.
///
/// `psnr` is `f64::INFINITY` when the two images are identical. `ssim` is
/// `None` for images smaller than the SSIM window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: Option<f64>,
}

impl Metrics {
    /// PSNR with unit peak plus SSIM.
    pub fn compare(reference: &Image, result: &Image) -> Result<Metrics> {
        let psnr = psnr(reference, result, 1.0)?;
        let ssim = if reference.height() >= SSIM_WINDOW && reference.width() >= SSIM_WINDOW {
            Some(ssim(reference, result)?)
        } else {
            None
        };
        Ok(Metrics { psnr, ssim })
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in decibels, `10 log10(peak^2 / mse)`.
///
/// Returns `f64::INFINITY` when the mean squared error is exactly zero.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::param(format!(
            "psnr peak must be positive, got {peak}"
        )));
    }
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, slot) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *slot = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" Gaussian filtering: output is (h-10) x (w-10).
fn filter_valid(
    data: &[f64],
    height: usize,
    width: usize,
    kernel: &[f64; SSIM_WINDOW],
) -> Vec<f64> {
    let out_w = width - SSIM_WINDOW + 1;
    let out_h = height - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; height * out_w];
    for r in 0..height {
        let src = &data[r * width..(r + 1) * width];
        for c in 0..out_w {
            rows[r * out_w + c] = kernel.iter().zip(&src[c..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for r in 0..out_h {
        for c in 0..out_w {
            out[r * out_w + c] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * rows[(r + i) * out_w + c])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over all fully-contained 11x11 windows.
///
/// Uses a normalized Gaussian window with standard deviation 1.5,
/// `K1 = 0.01`, `K2 = 0.03` and a dynamic range of 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::param(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    if a.data() == b.data() {
        return Ok(1.0);
    }
    let kernel = gaussian_window();
    let x = a.data();
    let y = b.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(x, h, w, &kernel);
    let mu_y = filter_valid(y, h, w, &kernel);
    let e_xx = filter_valid(&xx, h, w, &kernel);
    let e_yy = filter_valid(&yy, h, w, &kernel);
    let e_xy = filter_valid(&xy, h, w, &kernel);

    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}
