use std::path::PathBuf;

use clap::Args;
use qfm::image::add_gaussian_noise;
use qfm::noise::{estimate_sigma_with, noise_to_ratio};
use serde::{Deserialize, Serialize};

use super::Common;
use crate::config::{
    export_image, load_constants, load_layer, read_input, resolve_seed, write_run_record,
};
use crate::error::{CliError, Result};

#[derive(Debug, Args)]
pub struct AddNoiseArgs {
    /// Clean input image (PGM, PNG or PFM)
    pub input: PathBuf,
    /// Noise standard deviation on the [0, 1] intensity scale
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output image; `.pfm` keeps values outside [0, 1]
    #[arg(long, short)]
    pub out: PathBuf,
    /// Clip the noisy image to [0, 1] before writing
    #[arg(long)]
    pub clip: bool,
    /// Bits per sample for PGM and PNG output (8 or 16) [default: 8]
    #[arg(long)]
    pub depth: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct AddNoiseConfig {
    sigma: Option<f64>,
    seed: u64,
    clip: bool,
    depth: u8,
}

impl Default for AddNoiseConfig {
    fn default() -> Self {
        AddNoiseConfig {
            sigma: None,
            seed: 0,
            clip: false,
            depth: 8,
        }
    }
}

pub fn add_noise(args: &AddNoiseArgs, common: &Common) -> Result<()> {
    let layer = load_layer::<AddNoiseConfig>(common.config.as_deref())?;
    let mut cfg = layer.value;
    cfg.seed = resolve_seed(common.seed, layer.has_seed.then_some(cfg.seed))?;
    if args.sigma.is_some() {
        cfg.sigma = args.sigma;
    }
    cfg.clip |= args.clip;
    if let Some(d) = args.depth {
        cfg.depth = d;
    }
    let sigma = cfg
        .sigma
        .ok_or_else(|| CliError::param("--sigma is required"))?;
    let clean = read_input(&args.input)?;
    let noisy = add_gaussian_noise(&clean, sigma, cfg.seed)?;
    export_image(&args.out, &noisy, cfg.clip, cfg.depth)?;
    write_run_record(
        &args.out,
        "add-noise",
        &cfg,
        &[&args.input],
        &[&args.out],
        (),
    )?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Noisy image (PGM, PNG or PFM)
    pub input: PathBuf,
    /// Calibration constants JSON [default: built-in 10^7-sample constants]
    #[arg(long)]
    pub constants: Option<PathBuf>,
    /// Partitions to average [default: 1]
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Noise level mapped to t = 1, used for the reported ratio [default: 1.0]
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Print the full estimate as JSON instead of just sigma
    #[arg(long)]
    pub json: bool,
    /// Also write the estimate JSON to this file
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct EstimateConfig {
    seed: u64,
    repeats: u32,
    sigma_max: f64,
    constants: Option<PathBuf>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            seed: 0,
            repeats: 1,
            sigma_max: 1.0,
            constants: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    sigma_hat: f64,
    ratio: f64,
    ratio_clamped: bool,
    block_count: usize,
    partition_seed: u64,
    repeats: u32,
    saturated_fraction: f64,
    likely_clipped: bool,
}

pub fn estimate(args: &EstimateArgs, common: &Common) -> Result<()> {
    let layer = load_layer::<EstimateConfig>(common.config.as_deref())?;
    let mut cfg = layer.value;
    cfg.seed = resolve_seed(common.seed, layer.has_seed.then_some(cfg.seed))?;
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = args.sigma_max {
        cfg.sigma_max = s;
    }
    if args.constants.is_some() {
        cfg.constants = args.constants.clone();
    }
    let constants = load_constants(cfg.constants.as_deref())?;
    let img = read_input(&args.input)?;
    let est = estimate_sigma_with(&img, &constants, cfg.seed, cfg.repeats, false)?;
    let ratio = noise_to_ratio(&est, cfg.sigma_max)?;
    let report = EstimateReport {
        sigma_hat: est.sigma_hat,
        ratio: ratio.value,
        ratio_clamped: ratio.clamped,
        block_count: est.block_count,
        partition_seed: est.partition_seed,
        repeats: est.repeats,
        saturated_fraction: est.saturated_fraction,
        likely_clipped: est.likely_clipped(),
    };
    let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
    if args.json {
        println!("{json}");
    } else {
        println!("{:?}", est.sigma_hat);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{json}\n"))?;
        write_run_record(out, "estimate-noise", &cfg, &[&args.input], &[out], &report)?;
    }
    Ok(())
}
