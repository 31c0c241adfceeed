//! Reverse-time explicit Euler integration and the denoising pipelines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::VectorField;
use crate::image::{Image, Metrics};
use crate::noise::{estimate_sigma_with, noise_to_ratio, CalibrationConstants, NoiseEstimate};
use crate::schedule::{
    build_schedule, start_index, Schedule, TimeGrid, DEFAULT_COARSE_INTERVAL, DEFAULT_GRID_SIZE,
};

/// State of one point along an integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 0 for the initial state, `k + 1` after the `k`-th Euler step.
    pub k: usize,
    pub t: f64,
    pub nfe: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub state: Option<Image>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub steps: Vec<StepRecord>,
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) if x == f64::INFINITY => "inf".to_string(),
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

impl TrajectoryLog {
    /// CSV with columns `step,t,nfe,psnr,ssim`; metrics are blank when not
    /// recorded and PSNR of an exact match is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t,nfe,psnr,ssim\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k,
                r.t,
                r.nfe,
                fmt_metric(r.psnr),
                fmt_metric(r.ssim)
            ));
        }
        out
    }
}

/// What to record while integrating.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogOptions<'a> {
    /// Clean image to score every intermediate state against.
    pub reference: Option<&'a Image>,
    /// Keep a copy of every intermediate state.
    pub keep_states: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    pub output: Image,
    /// Noise estimate that chose the start time, when one was made.
    pub estimate: Option<NoiseEstimate>,
    pub schedule: Schedule,
    pub trajectory: TrajectoryLog,
    pub total_nfe: usize,
}

fn record(k: usize, t: f64, nfe: usize, state: &Image, opts: &LogOptions) -> Result<StepRecord> {
    let (psnr, ssim) = match opts.reference {
        Some(r) => {
            let m = Metrics::compare(r, state)?;
            (Some(m.psnr), m.ssim)
        }
        None => (None, None),
    };
    Ok(StepRecord {
        k,
        t,
        nfe,
        psnr,
        ssim,
        state: opts.keep_states.then(|| state.clone()),
    })
}

/// Integrates `dx/dt = v(x, t, sigma_hat)` backwards along `schedule` with
/// `x_{k+1} = x_k - dt_k v(x_k, t_k, sigma_hat)`, one field evaluation per step.
pub fn euler_integrate(
    x_init: &Image,
    field: &(impl VectorField + ?Sized),
    schedule: &Schedule,
    sigma_hat: f64,
    opts: LogOptions,
) -> Result<DenoiseResult> {
    field.check_state(x_init)?;
    if let Some(r) = opts.reference {
        r.check_same_shape(x_init)?;
    }
    let grid = TimeGrid::new(schedule.grid_size)?;
    let steps = schedule.steps_with_times(&grid);
    let (h, w) = (x_init.height(), x_init.width());

    let mut x = x_init.clone();
    let mut log = TrajectoryLog::default();
    log.steps
        .push(record(0, schedule.t_start(&grid), 0, &x, &opts)?);
    for (k, &(t, dt)) in steps.iter().enumerate() {
        let v = field.evaluate(&x, t, sigma_hat).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence {
                stage: "integration",
                unit: "step",
                index: k,
            },
            other => other,
        })?;
        let next: Vec<f64> = x
            .data()
            .iter()
            .zip(v.data())
            .map(|(a, b)| a - dt * b)
            .collect();
        if next.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                stage: "integration",
                unit: "step",
                index: k,
            });
        }
        x = Image::new(h, w, next)?;
        let t_next = grid.time(schedule.indices[k + 1]);
        log.steps.push(record(k + 1, t_next, k + 1, &x, &opts)?);
    }
    Ok(DenoiseResult {
        output: x,
        estimate: None,
        schedule: schedule.clone(),
        trajectory: log,
        total_nfe: steps.len(),
    })
}

/// Settings shared by the adaptive and fixed pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub sigma_max: f64,
    pub grid_size: usize,
    pub coarse_interval: usize,
    /// Seed of the estimator's random block partition.
    pub seed: u64,
    /// Number of partitions averaged by the estimator.
    pub repeats: u32,
    pub constants: CalibrationConstants,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            sigma_max: 1.0,
            grid_size: DEFAULT_GRID_SIZE,
            coarse_interval: DEFAULT_COARSE_INTERVAL,
            seed: 0,
            repeats: 1,
            constants: CalibrationConstants::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// Start where the estimated noise level places the input.
    Adaptive,
    /// Always start from `t = 1`.
    Fixed,
}

fn denoise(
    noisy: &Image,
    field: &(impl VectorField + ?Sized),
    cfg: &InferenceConfig,
    mode: StartMode,
    opts: LogOptions,
) -> Result<DenoiseResult> {
    let grid = TimeGrid::new(cfg.grid_size)?;
    let estimate = estimate_sigma_with(noisy, &cfg.constants, cfg.seed, cfg.repeats, false)?;
    let ratio = noise_to_ratio(&estimate, cfg.sigma_max)?;
    let i0 = match mode {
        StartMode::Adaptive => start_index(ratio.value, &grid)?,
        StartMode::Fixed => grid.last_index(),
    };
    let schedule = build_schedule(i0, cfg.coarse_interval, &grid)?;
    let mut result = euler_integrate(noisy, field, &schedule, estimate.sigma_hat, opts)?;
    result.estimate = Some(estimate);
    Ok(result)
}

/// Estimate the noise level, start at the matching grid time and integrate to 0.
pub fn denoise_adaptive(
    noisy: &Image,
    field: &(impl VectorField + ?Sized),
    cfg: &InferenceConfig,
    opts: LogOptions,
) -> Result<DenoiseResult> {
    denoise(noisy, field, cfg, StartMode::Adaptive, opts)
}

/// Ablation baseline: same pipeline, but always integrate from `t = 1`.
pub fn denoise_fixed(
    noisy: &Image,
    field: &(impl VectorField + ?Sized),
    cfg: &InferenceConfig,
    opts: LogOptions,
) -> Result<DenoiseResult> {
    denoise(noisy, field, cfg, StartMode::Fixed, opts)
}

pub fn denoise_with_mode(
    noisy: &Image,
    field: &(impl VectorField + ?Sized),
    cfg: &InferenceConfig,
    mode: StartMode,
    opts: LogOptions,
) -> Result<DenoiseResult> {
    denoise(noisy, field, cfg, mode, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::OracleField;

    fn grid() -> TimeGrid {
        TimeGrid::new(100).unwrap()
    }

    #[test]
    fn zero_field_is_passthrough() {
        let x = Image::from_fn(4, 4, |r, c| (r * c) as f64 / 9.0).unwrap();
        let f = OracleField::constant(Image::filled(4, 4, 0.0).unwrap());
        let s = build_schedule(57, 10, &grid()).unwrap();
        let out = euler_integrate(&x, &f, &s, 0.5, LogOptions::default()).unwrap();
        assert_eq!(out.output, x);
        assert_eq!(out.total_nfe, s.steps());
    }

    #[test]
    fn empty_schedule_is_passthrough() {
        let x = Image::from_fn(3, 3, |r, c| (r + c) as f64).unwrap();
        let f = OracleField::constant(Image::filled(3, 3, 1.0).unwrap());
        let s = build_schedule(0, 10, &grid()).unwrap();
        let out = euler_integrate(&x, &f, &s, 0.0, LogOptions::default()).unwrap();
        assert_eq!(out.output, x);
        assert_eq!(out.total_nfe, 0);
        assert_eq!(out.trajectory.steps.len(), 1);
    }

    #[test]
    fn divergence_carries_step() {
        // each coarse step adds 0.101e308; the eighth one overflows
        let x = Image::filled(2, 2, 1e308).unwrap();
        let f = OracleField::constant(Image::filled(2, 2, -1e308).unwrap());
        let s = build_schedule(99, 10, &grid()).unwrap();
        match euler_integrate(&x, &f, &s, 0.5, LogOptions::default()) {
            Err(Error::Divergence {
                stage: "integration",
                index,
                ..
            }) => assert_eq!(index, 7),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_bookkeeping() {
        let x = Image::filled(12, 12, 0.8).unwrap();
        let reference = Image::filled(12, 12, 0.5).unwrap();
        let f = OracleField::constant(Image::filled(12, 12, 0.9).unwrap());
        let s = build_schedule(33, 10, &grid()).unwrap();
        let opts = LogOptions {
            reference: Some(&reference),
            keep_states: true,
        };
        let out = euler_integrate(&x, &f, &s, 0.3, opts).unwrap();
        let steps = &out.trajectory.steps;
        assert_eq!(steps.len(), s.steps() + 1);
        for (i, pair) in steps.windows(2).enumerate() {
            assert!(pair[1].t < pair[0].t);
            assert_eq!(pair[1].nfe, pair[0].nfe + 1);
            assert_eq!(pair[1].k, i + 1);
        }
        assert_eq!(steps.last().unwrap().t, 0.0);
        assert!(steps.iter().all(|r| r.psnr.is_some() && r.ssim.is_some()));
        assert_eq!(steps.last().unwrap().state.as_ref(), Some(&out.output));
        let csv = out.trajectory.to_csv();
        assert!(csv.starts_with("step,t,nfe,psnr,ssim\n0,"));
        assert_eq!(csv.lines().count(), steps.len() + 1);
    }

    #[test]
    fn mismatched_reference_rejected() {
        let x = Image::filled(4, 4, 0.0).unwrap();
        let r = Image::filled(5, 4, 0.0).unwrap();
        let f = OracleField::constant(x.clone());
        let s = build_schedule(3, 10, &grid()).unwrap();
        let opts = LogOptions {
            reference: Some(&r),
            keep_states: false,
        };
        assert!(matches!(
            euler_integrate(&x, &f, &s, 0.1, opts),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn fmt_metric_sentinels() {
        assert_eq!(fmt_metric(Some(f64::INFINITY)), "inf");
        assert_eq!(fmt_metric(None), "");
        assert_eq!(fmt_metric(Some(20.5)), "20.5");
    }
}
