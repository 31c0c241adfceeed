//! Deterministic synthetic images for tests, demos and toy training.

use rand::Rng;

use crate::error::Result;
use crate::image::Image;
use crate::seeded_rng;

/// Four flat quadrants at 0.2, 0.4, 0.6 and 0.8.
pub fn quadrant_chart(height: usize, width: usize) -> Result<Image> {
    let (hh, hw) = (height / 2, width / 2);
    Image::from_fn(height, width, |r, c| match (r < hh, c < hw) {
        (true, true) => 0.2,
        (true, false) => 0.4,
        (false, true) => 0.6,
        (false, false) => 0.8,
    })
}

/// Gentle diagonal ramp from 0.3 to 0.7.
pub fn smooth_ramp(height: usize, width: usize) -> Result<Image> {
    let span = (height + width).saturating_sub(2).max(1) as f64;
    Image::from_fn(height, width, |r, c| 0.3 + 0.4 * (r + c) as f64 / span)
}

/// `count` small images drawn from a few structured families: ramps, soft
/// disks, stripes and flat patches, all inside `[0.1, 0.9]`.
pub fn toy_dataset(count: usize, size: usize, seed: u64) -> Result<Vec<Image>> {
    let mut rng = seeded_rng(seed);
    let n = size as f64;
    (0..count)
        .map(|i| {
            let lo: f64 = rng.random_range(0.1..0.4);
            let hi: f64 = rng.random_range(0.6..0.9);
            match i % 4 {
                0 => {
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let (dy, dx) = angle.sin_cos();
                    Image::from_fn(size, size, |r, c| {
                        let u = ((r as f64 - n / 2.0) * dy + (c as f64 - n / 2.0) * dx) / n + 0.5;
                        lo + (hi - lo) * u.clamp(0.0, 1.0)
                    })
                }
                1 => {
                    let cy: f64 = rng.random_range(0.3 * n..0.7 * n);
                    let cx: f64 = rng.random_range(0.3 * n..0.7 * n);
                    let rad: f64 = rng.random_range(0.2 * n..0.4 * n);
                    Image::from_fn(size, size, |r, c| {
                        let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                        lo + (hi - lo) * (-d2 / (2.0 * rad * rad)).exp()
                    })
                }
                2 => {
                    let period = rng.random_range(2..=4usize);
                    let vertical = rng.random_bool(0.5);
                    Image::from_fn(size, size, |r, c| {
                        let k = if vertical { c } else { r };
                        if (k / period) % 2 == 0 {
                            lo
                        } else {
                            hi
                        }
                    })
                }
                _ => {
                    let v = rng.random_range(lo..hi);
                    Image::filled(size, size, v)
                }
            }
        })
        .collect()
}
