//! Blind estimation of a global Gaussian noise level.
//!
//! The image is cut into non-overlapping 2x2 blocks. Under a locally constant
//! signal, the range and middle range of each block's four sorted pixels are
//! `sigma` times the range and middle range of four standard normals, whose
//! expectations are the calibration constants `c1` and `c2`. Each block thus
//! yields an unbiased estimate of `sigma`. A seeded random fifth of the blocks
//! use the range (efficient, edge-sensitive); the rest use the middle range
//! (robust, noisier). The estimate is the mean over all blocks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seeded_rng;

/// Range and middle range of one 2x2 block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStats {
    /// Largest minus smallest pixel.
    pub d1: f64,
    /// Third minus second smallest pixel.
    pub d2: f64,
}

impl BlockStats {
    pub fn from_pixels(pixels: [f64; 4]) -> BlockStats {
        let s = sort4(pixels);
        BlockStats {
            d1: s[3] - s[0],
            d2: s[2] - s[1],
        }
    }
}

#[inline]
fn sort4(mut v: [f64; 4]) -> [f64; 4] {
    #[inline(always)]
    fn cmp_swap(v: &mut [f64; 4], i: usize, j: usize) {
        if v[i] > v[j] {
            v.swap(i, j);
        }
    }
    cmp_swap(&mut v, 0, 1);
    cmp_swap(&mut v, 2, 3);
    cmp_swap(&mut v, 0, 2);
    cmp_swap(&mut v, 1, 3);
    cmp_swap(&mut v, 1, 2);
    v
}

/// Expected range (`c1`) and middle range (`c2`) of four i.i.d. standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConstants {
    pub c1: f64,
    pub c2: f64,
    /// Number of four-sample groups drawn.
    pub samples: u64,
    pub seed: u64,
}

impl CalibrationConstants {
    /// Frozen output of `calibrate_constants(10_000_000, 0)`.
    pub const FROZEN: CalibrationConstants = CalibrationConstants {
        c1: 2.0590285195400786,
        c2: 0.5943044978200018,
        samples: 10_000_000,
        seed: 0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.c1.is_finite()
            && self.c2.is_finite()
            && self.c1 > self.c2
            && self.c2 > 0.0
            && (2.0..=2.12).contains(&self.c1)
            && (0.55..=0.64).contains(&self.c2);
        if !ok {
            return Err(Error::param(format!(
                "calibration constants out of range: c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CalibrationConstants = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants always serialize")
    }
}

impl Default for CalibrationConstants {
    fn default() -> Self {
        CalibrationConstants::FROZEN
    }
}

/// Smallest accepted Monte-Carlo sample count for calibration.
pub const MIN_CALIBRATION_SAMPLES: u64 = 100_000;

/// Monte-Carlo estimate of `c1 = E[Z(4) - Z(1)]` and `c2 = E[Z(3) - Z(2)]`.
pub fn calibrate_constants(samples: u64, seed: u64) -> Result<CalibrationConstants> {
    if samples < MIN_CALIBRATION_SAMPLES {
        return Err(Error::param(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {samples}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let (mut range_sum, mut mid_sum) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let stats = BlockStats::from_pixels(z);
        range_sum += stats.d1;
        mid_sum += stats.d2;
    }
    let n = samples as f64;
    Ok(CalibrationConstants {
        c1: range_sum / n,
        c2: mid_sum / n,
        samples,
        seed,
    })
}

/// Statistics of every non-overlapping 2x2 block, row-major over the block grid.
///
/// A trailing odd row or column is ignored.
pub fn partition_blocks(img: &Image) -> Result<Vec<BlockStats>> {
    let (h, w) = (img.height(), img.width());
    if h < 2 || w < 2 {
        return Err(Error::param(format!(
            "noise estimation needs at least a 2x2 image, got {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity((h / 2) * (w / 2));
    for br in 0..h / 2 {
        let (r0, r1) = (2 * br, 2 * br + 1);
        for bc in 0..w / 2 {
            let (c0, c1) = (2 * bc, 2 * bc + 1);
            out.push(BlockStats::from_pixels([
                img.get(r0, c0),
                img.get(r0, c1),
                img.get(r1, c0),
                img.get(r1, c1),
            ]));
        }
    }
    Ok(out)
}

/// Global noise estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub sigma_hat: f64,
    /// Number of 2x2 blocks, `floor(H/2) * floor(W/2)`.
    pub block_count: usize,
    pub partition_seed: u64,
    /// Number of independent partitions averaged into `sigma_hat`.
    pub repeats: u32,
    /// Fraction of pixels at exactly 0 or 1; high values mean the input was clipped.
    pub saturated_fraction: f64,
    /// Fused per-block estimates `S_k` from the first partition, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_block: Option<Vec<f64>>,
}

/// Saturation above which an estimate is flagged as biased by clipping.
pub const CLIP_WARN_FRACTION: f64 = 0.01;

impl NoiseEstimate {
    pub fn likely_clipped(&self) -> bool {
        self.saturated_fraction > CLIP_WARN_FRACTION
    }
}

/// Size of the range subset: one fifth of the blocks, rounded half up.
pub fn range_subset_size(block_count: usize) -> usize {
    (2 * block_count + 5) / 10
}

fn fused_estimates(blocks: &[BlockStats], constants: &CalibrationConstants, seed: u64) -> Vec<f64> {
    let k = blocks.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut use_range = vec![false; k];
    for &i in &order[..range_subset_size(k)] {
        use_range[i] = true;
    }
    blocks
        .iter()
        .zip(&use_range)
        .map(|(b, &r)| {
            if r {
                b.d1 / constants.c1
            } else {
                b.d2 / constants.c2
            }
        })
        .collect()
}

/// Estimates the global noise standard deviation from one random partition.
pub fn estimate_sigma(
    img: &Image,
    constants: &CalibrationConstants,
    partition_seed: u64,
) -> Result<NoiseEstimate> {
    estimate_sigma_with(img, constants, partition_seed, 1, false)
}

/// Like [`estimate_sigma`], averaging over `repeats` partitions drawn with seeds
/// `partition_seed, partition_seed + 1, ...`, and optionally keeping the
/// per-block estimates of the first partition.
pub fn estimate_sigma_with(
    img: &Image,
    constants: &CalibrationConstants,
    partition_seed: u64,
    repeats: u32,
    keep_blocks: bool,
) -> Result<NoiseEstimate> {
    constants.validate()?;
    if repeats == 0 {
        return Err(Error::param("repeat count must be at least 1"));
    }
    let blocks = partition_blocks(img)?;
    let k = blocks.len();
    let mut total = 0.0;
    let mut first = None;
    for r in 0..repeats {
        let s = fused_estimates(&blocks, constants, partition_seed.wrapping_add(r as u64));
        total += s.iter().sum::<f64>() / k as f64;
        if r == 0 && keep_blocks {
            first = Some(s);
        }
    }
    let saturated_fraction = img.saturated_fraction();
    if saturated_fraction > CLIP_WARN_FRACTION {
        log::warn!(
            "{:.1}% of pixels are saturated; the input looks clipped and sigma will be underestimated",
            100.0 * saturated_fraction
        );
    }
    Ok(NoiseEstimate {
        sigma_hat: total / repeats as f64,
        block_count: k,
        partition_seed,
        repeats,
        saturated_fraction,
        per_block: first,
    })
}

/// Position of a noise level on the normalized time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRatio {
    pub value: f64,
    /// Set when `sigma_hat` exceeded `sigma_max` and the ratio was capped at 1.
    pub clamped: bool,
}

/// `min(sigma_hat / sigma_max, 1)`.
pub fn noise_to_ratio(estimate: &NoiseEstimate, sigma_max: f64) -> Result<NoiseRatio> {
    if !(sigma_max > 0.0) || !sigma_max.is_finite() {
        return Err(Error::param(format!(
            "sigma_max must be positive, got {sigma_max}"
        )));
    }
    let raw = estimate.sigma_hat / sigma_max;
    if raw > 1.0 {
        log::warn!(
            "estimated sigma {} exceeds sigma_max {}; starting from t = 1",
            estimate.sigma_hat,
            sigma_max
        );
        return Ok(NoiseRatio {
            value: 1.0,
            clamped: true,
        });
    }
    Ok(NoiseRatio {
        value: raw,
        clamped: false,
    })
}
