use std::path::{Path, PathBuf};

use clap::Args;
use qfm::flow::load_field;
use qfm::image::Metrics;
use qfm::solver::{denoise_with_mode, LogOptions, StartMode};
use serde::{Deserialize, Serialize};

use super::Common;
use crate::config::{
    export_image, load_layer, read_input, resolve_seed, write_run_record, InferenceArgs,
    InferenceFile,
};
use crate::error::{CliError, Result};

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Noisy input image (PGM, PNG or PFM)
    pub input: PathBuf,
    /// Checkpoint JSON written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Output image
    #[arg(long, short)]
    pub out: PathBuf,
    /// Integrate from t = 1 regardless of the estimated noise level
    #[arg(long)]
    pub fixed: bool,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Per-step trajectory CSV (step, t, nfe, psnr, ssim)
    #[arg(long)]
    pub traj: Option<PathBuf>,
    /// Clean image used to score the trajectory and the output
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Clip the result to [0, 1] before writing
    #[arg(long)]
    pub clip: bool,
    /// Bits per sample for PGM and PNG output (8 or 16) [default: 8]
    #[arg(long)]
    pub depth: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct DenoiseConfig {
    mode: StartMode,
    seed: u64,
    #[serde(flatten)]
    inference: InferenceFile,
    clip: bool,
    depth: u8,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            mode: StartMode::Adaptive,
            seed: 0,
            inference: InferenceFile::default(),
            clip: false,
            depth: 8,
        }
    }
}

#[derive(Debug, Serialize)]
struct DenoiseReport {
    sigma_hat: Option<f64>,
    likely_clipped: bool,
    t_start: f64,
    nfe: usize,
    schedule: qfm::schedule::Schedule,
    input_metrics: Option<Metrics>,
    output_metrics: Option<Metrics>,
}

pub fn run(args: &DenoiseArgs, common: &Common) -> Result<()> {
    let layer = load_layer::<DenoiseConfig>(common.config.as_deref())?;
    let mut cfg = layer.value;
    cfg.seed = resolve_seed(common.seed, layer.has_seed.then_some(cfg.seed))?;
    if args.fixed {
        cfg.mode = StartMode::Fixed;
    }
    cfg.inference.apply(&args.inference);
    cfg.clip |= args.clip;
    if let Some(d) = args.depth {
        cfg.depth = d;
    }

    let (field, checkpoint_sigma_max) =
        load_field(&args.model).map_err(CliError::file(&args.model))?;
    let icfg = cfg.inference.resolve(checkpoint_sigma_max, cfg.seed)?;
    let noisy = read_input(&args.input)?;
    let reference = args.reference.as_deref().map(read_input).transpose()?;
    let opts = LogOptions {
        reference: reference.as_ref(),
        keep_states: false,
    };
    let result = denoise_with_mode(&noisy, field.as_ref(), &icfg, cfg.mode, opts)?;
    export_image(&args.out, &result.output, cfg.clip, cfg.depth)?;
    if let Some(traj) = &args.traj {
        std::fs::write(traj, result.trajectory.to_csv())?;
    }

    let grid = qfm::schedule::TimeGrid::new(icfg.grid_size)?;
    let (input_metrics, output_metrics) = match &reference {
        Some(r) => (
            Some(Metrics::compare(r, &noisy)?),
            Some(Metrics::compare(r, &result.output)?),
        ),
        None => (None, None),
    };
    let report = DenoiseReport {
        sigma_hat: result.estimate.as_ref().map(|e| e.sigma_hat),
        likely_clipped: result.estimate.as_ref().is_some_and(|e| e.likely_clipped()),
        t_start: result.schedule.t_start(&grid),
        nfe: result.total_nfe,
        schedule: result.schedule.clone(),
        input_metrics,
        output_metrics,
    };
    println!(
        "sigma_hat {:.6}, t_start {:.4}, nfe {}",
        report.sigma_hat.unwrap_or(f64::NAN),
        report.t_start,
        report.nfe
    );

    let mut inputs: Vec<&Path> = vec![&args.input, &args.model];
    inputs.extend(args.reference.as_deref());
    let mut outputs: Vec<&Path> = vec![&args.out];
    outputs.extend(args.traj.as_deref());
    write_run_record(&args.out, "denoise", &cfg, &inputs, &outputs, &report)?;
    Ok(())
}
