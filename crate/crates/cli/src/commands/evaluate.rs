use std::path::{Path, PathBuf};

use clap::Args;
use qfm::flow::{load_field, VectorField};
use qfm::image::{add_gaussian_noise, Image, Metrics};
use qfm::solver::{denoise_with_mode, InferenceConfig, LogOptions, StartMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::list_images;
use super::Common;
use crate::config::{
    load_layer, read_input, resolve_seed, write_run_record, InferenceArgs, InferenceFile,
};
use crate::error::{CliError, Result};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of clean images
    #[arg(long)]
    pub clean_dir: PathBuf,
    /// Noise levels to sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Checkpoint JSON written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Also run fixed-start inference for every case
    #[arg(long)]
    pub with_fixed: bool,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Worker threads; 0 uses all cores [default: 0]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Metrics CSV to write
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvaluateConfig {
    sigmas: Vec<f64>,
    with_fixed: bool,
    seed: u64,
    jobs: usize,
    #[serde(flatten)]
    inference: InferenceFile,
}

const HEADER: [&str; 9] = [
    "image",
    "sigma",
    "sigma_hat",
    "mode",
    "nfe",
    "psnr_in",
    "psnr_out",
    "ssim_in",
    "ssim_out",
];

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Noise seed of one (image, sigma) case, decorrelated from its neighbours.
fn case_seed(base: u64, image: usize, sigma: usize) -> u64 {
    let mut z = base ^ ((image as u64) << 20 | sigma as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn case_rows(
    name: &str,
    clean: &Image,
    sigma: f64,
    noise_seed: u64,
    field: &(dyn VectorField + Send + Sync),
    icfg: &InferenceConfig,
    modes: &[StartMode],
) -> Result<Vec<Vec<String>>> {
    let noisy = add_gaussian_noise(clean, sigma, noise_seed)?;
    let before = Metrics::compare(clean, &noisy)?;
    let mut rows = Vec::new();
    for &mode in modes {
        let out = denoise_with_mode(&noisy, field, icfg, mode, LogOptions::default())?;
        let after = Metrics::compare(clean, &out.output)?;
        let mode_name = match mode {
            StartMode::Adaptive => "adaptive",
            StartMode::Fixed => "fixed",
        };
        rows.push(vec![
            name.to_string(),
            num(sigma),
            opt(out.estimate.map(|e| e.sigma_hat)),
            mode_name.to_string(),
            out.total_nfe.to_string(),
            num(before.psnr),
            num(after.psnr),
            opt(before.ssim),
            opt(after.ssim),
        ]);
    }
    Ok(rows)
}

fn skipped_row(name: &str, sigma: Option<f64>) -> Vec<String> {
    let mut row = vec![String::new(); HEADER.len()];
    row[0] = name.to_string();
    row[1] = opt(sigma);
    row[3] = "skipped".to_string();
    row
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    images: usize,
    skipped: usize,
    rows: usize,
}

pub fn run(args: &EvaluateArgs, common: &Common) -> Result<()> {
    let layer = load_layer::<EvaluateConfig>(common.config.as_deref())?;
    let mut cfg = layer.value;
    cfg.seed = resolve_seed(common.seed, layer.has_seed.then_some(cfg.seed))?;
    if let Some(s) = &args.sigmas {
        cfg.sigmas = s.clone();
    }
    cfg.with_fixed |= args.with_fixed;
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    cfg.inference.apply(&args.inference);

    if cfg.sigmas.is_empty() {
        return Err(CliError::param("--sigmas needs at least one noise level"));
    }
    let (field, checkpoint_sigma_max) =
        load_field(&args.model).map_err(CliError::file(&args.model))?;
    let icfg = cfg.inference.resolve(checkpoint_sigma_max, cfg.seed)?;
    if let Some(&bad) = cfg
        .sigmas
        .iter()
        .find(|s| !(0.0..=icfg.sigma_max).contains(*s))
    {
        return Err(CliError::param(format!(
            "sigma {bad} outside [0, sigma_max = {}]",
            icfg.sigma_max
        )));
    }
    let modes: &[StartMode] = if cfg.with_fixed {
        &[StartMode::Adaptive, StartMode::Fixed]
    } else {
        &[StartMode::Adaptive]
    };

    let paths = list_images(&args.clean_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::param(format!("cannot start worker pool: {e}")))?;
    let images: Vec<(String, Option<Image>)> = pool.install(|| {
        paths
            .par_iter()
            .map(|p| {
                let name = file_name(p);
                match read_input(p) {
                    Ok(img) => (name, Some(img)),
                    Err(e) => {
                        log::warn!("skipping {}: {e}", p.display());
                        (name, None)
                    }
                }
            })
            .collect()
    });
    let cases: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (0..cfg.sigmas.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| images[i].1.is_some() || j == 0)
        .collect();
    let results: Vec<Vec<Vec<String>>> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(i, j)| {
                let (name, img) = &images[i];
                let Some(img) = img else {
                    return vec![skipped_row(name, None)];
                };
                let sigma = cfg.sigmas[j];
                let seed = case_seed(cfg.seed, i, j);
                case_rows(name, img, sigma, seed, field.as_ref(), &icfg, modes).unwrap_or_else(
                    |e| {
                        log::warn!("skipping {name} at sigma {sigma}: {e}");
                        vec![skipped_row(name, Some(sigma))]
                    },
                )
            })
            .collect()
    });

    let mut writer = csv::Writer::from_path(&args.out)?;
    writer.write_record(HEADER)?;
    let mut rows = 0;
    for row in results.iter().flatten() {
        writer.write_record(row)?;
        rows += 1;
    }
    writer.flush()?;
    let skipped = results
        .iter()
        .flatten()
        .filter(|r| r[3] == "skipped")
        .count();
    let report = EvaluateReport {
        images: images.len(),
        skipped,
        rows,
    };
    println!(
        "{rows} rows for {} images ({skipped} skipped)",
        images.len()
    );
    let inputs: Vec<&Path> = vec![&args.clean_dir, &args.model];
    write_run_record(&args.out, "evaluate", &cfg, &inputs, &[&args.out], &report)?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(
        || p.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}
