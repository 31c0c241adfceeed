//! Shared time grid and coarse-to-fine reverse-time schedules.
//!
//! Training and inference share a uniform grid `t_i = i / (S - 1)`. Inference
//! starts at a grid index chosen from the noise ratio and walks back to `t = 0`
//! on grid points only: strides of `M` indices while far from the clean end,
//! then single-index steps over the last `M` grid intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grid length.
pub const DEFAULT_GRID_SIZE: usize = 100;
/// Default coarse stride, in grid indices.
pub const DEFAULT_COARSE_INTERVAL: usize = 10;

/// Uniform grid on `[0, 1]` with both endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::param(format!(
                "time grid needs at least 2 points, got {size}"
            )));
        }
        let last = (size - 1) as f64;
        let points = (0..size).map(|i| i as f64 / last).collect();
        Ok(TimeGrid { points })
    }

    /// Number of grid points `S`.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn time(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Grid spacing `1 / (S - 1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.size() - 1) as f64
    }

    pub fn last_index(&self) -> usize {
        self.size() - 1
    }
}

pub fn build_grid(size: usize) -> Result<TimeGrid> {
    TimeGrid::new(size)
}

/// Maps a noise ratio in `[0, 1]` to a start index on `grid`.
///
/// `round(ratio * (S - 1))`, rounding halves up. A strictly positive ratio
/// always yields at least index 1 so noisy inputs get at least one step; a
/// zero ratio yields index 0, meaning no integration at all.
pub fn start_index(ratio: f64, grid: &TimeGrid) -> Result<usize> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::param(format!(
            "noise ratio must lie in [0, 1], got {ratio}"
        )));
    }
    if ratio == 0.0 {
        return Ok(0);
    }
    let last = grid.last_index();
    let i0 = (ratio * last as f64 + 0.5).floor() as usize;
    Ok(i0.clamp(1, last))
}

/// A strictly decreasing sequence of grid indices ending at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Grid length `S`.
    #[serde(rename = "S")]
    pub grid_size: usize,
    /// Coarse stride `M`.
    #[serde(rename = "M")]
    pub coarse_interval: usize,
    pub i0: usize,
    /// Visited grid indices, starting at `i0` and ending at 0.
    pub indices: Vec<usize>,
    /// Number of leading entries of `indices` on the coarse stride.
    #[serde(skip)]
    pub coarse_count: usize,
}

impl Schedule {
    /// Number of Euler steps, one fewer than the number of visited points.
    pub fn steps(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn times(&self, grid: &TimeGrid) -> Vec<f64> {
        self.indices.iter().map(|&i| grid.time(i)).collect()
    }

    pub fn t_start(&self, grid: &TimeGrid) -> f64 {
        grid.time(self.i0)
    }

    /// Step widths in grid units; they sum to `i0`.
    pub fn index_steps(&self) -> Vec<usize> {
        self.indices.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// `(t_k, dt_k)` for every step, with `dt_k = t_k - t_{k+1}`.
    pub fn steps_with_times(&self, grid: &TimeGrid) -> Vec<(f64, f64)> {
        self.indices
            .windows(2)
            .map(|w| {
                let (t, next) = (grid.time(w[0]), grid.time(w[1]));
                (t, t - next)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule always serializes")
    }

    /// Parses and re-validates a serialized schedule.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Schedule = serde_json::from_str(text)?;
        let grid = TimeGrid::new(raw.grid_size)?;
        let rebuilt = build_schedule(raw.i0, raw.coarse_interval, &grid)?;
        if rebuilt.indices != raw.indices {
            return Err(Error::param(
                "schedule indices do not follow the coarse-to-fine rule",
            ));
        }
        Ok(rebuilt)
    }
}

/// Builds the coarse-then-fine index sequence from `i0` down to 0.
///
/// Coarse points are `i0, i0 - M, i0 - 2M, ...` for as long as they stay above
/// index `M`. The fine tail then visits every index from `min(M, i0)` down to
/// 0 (or from just below `i0` when `i0 <= M`). The last coarse stride may
/// therefore be shorter than `M`. This keeps the step count non-decreasing in
/// `i0` and always resolves the final `M` grid intervals one by one.
pub fn build_schedule(i0: usize, coarse_interval: usize, grid: &TimeGrid) -> Result<Schedule> {
    let m = coarse_interval;
    if m == 0 {
        return Err(Error::param("coarse interval must be at least 1"));
    }
    if i0 > grid.last_index() {
        return Err(Error::param(format!(
            "start index {i0} outside grid of size {}",
            grid.size()
        )));
    }
    let mut indices = vec![i0];
    let mut cur = i0;
    while cur > m && cur - m > m {
        cur -= m;
        indices.push(cur);
    }
    let coarse_count = indices.len();
    let fine_top = if i0 > m { m } else { i0.saturating_sub(1) };
    if i0 > 0 {
        indices.extend((0..=fine_top).rev());
    }
    Ok(Schedule {
        grid_size: grid.size(),
        coarse_interval: m,
        i0,
        indices,
        coarse_count,
    })
}
