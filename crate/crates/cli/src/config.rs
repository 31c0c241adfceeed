//! Config layering (flags over file over defaults), seeds and run records.

use std::path::{Path, PathBuf};

use clap::Args;
use qfm::image::{is_lossless_path, write_image, BitDepth, Image};
use qfm::noise::CalibrationConstants;
use qfm::solver::InferenceConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "QFM_SEED";

/// A config file layer. `has_seed` records whether the file set `seed`, so
/// that `QFM_SEED` only fills in when neither flag nor file did.
pub struct Layer<T> {
    pub value: T,
    pub has_seed: bool,
}

/// Reads a JSON config file. A run record written by an earlier command is
/// accepted too; its `config` member is used.
pub fn load_layer<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<Layer<T>> {
    let Some(path) = path else {
        return Ok(Layer {
            value: T::default(),
            has_seed: false,
        });
    };
    let err = |source| CliError::Config {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path)(e.into()))?;
    let mut json: Value = serde_json::from_str(&text).map_err(err)?;
    if let Some(inner) = json.get_mut("config") {
        json = inner.take();
    }
    let has_seed = json.get("seed").is_some_and(|s| !s.is_null());
    Ok(Layer {
        value: serde_json::from_value(json).map_err(err)?,
        has_seed,
    })
}

/// Flag, then config file, then `QFM_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::param(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn depth_from_bits(bits: u8) -> Result<BitDepth> {
    match bits {
        8 => Ok(BitDepth::Eight),
        16 => Ok(BitDepth::Sixteen),
        other => Err(CliError::param(format!(
            "bit depth must be 8 or 16, got {other}"
        ))),
    }
}

/// Writes an image, clipping on request. Integer formats cannot hold values
/// outside [0, 1]; a warning says how many will be clamped.
pub fn export_image(path: &Path, img: &Image, clip: bool, bits: u8) -> Result<()> {
    let depth = depth_from_bits(bits)?;
    if clip {
        write_image(path, &img.clipped(), depth)?;
        return Ok(());
    }
    if !is_lossless_path(path) {
        let outside = img
            .data()
            .iter()
            .filter(|v| !(0.0..=1.0).contains(*v))
            .count();
        if outside > 0 {
            log::warn!(
                "{outside} of {} values lie outside [0, 1] and are clamped in {}; use a .pfm path to keep them",
                img.len(),
                path.display()
            );
        }
    }
    write_image(path, img, depth)?;
    Ok(())
}

/// Inference options shared by `denoise` and `evaluate`.
#[derive(Debug, Clone, Default, Args)]
pub struct InferenceArgs {
    /// Largest noise level the model covers [default: the checkpoint's]
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Number of points on the time grid [default: 100]
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Stride of the coarse part of the schedule [default: 10]
    #[arg(long)]
    pub coarse_interval: Option<usize>,
    /// Partitions averaged by the noise estimator [default: 1]
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Calibration constants JSON [default: built-in 10^7-sample constants]
    #[arg(long)]
    pub constants: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceFile {
    pub sigma_max: Option<f64>,
    pub grid_size: usize,
    pub coarse_interval: usize,
    pub repeats: u32,
    pub constants: Option<PathBuf>,
}

impl Default for InferenceFile {
    fn default() -> Self {
        let d = InferenceConfig::default();
        InferenceFile {
            sigma_max: None,
            grid_size: d.grid_size,
            coarse_interval: d.coarse_interval,
            repeats: d.repeats,
            constants: None,
        }
    }
}

impl InferenceFile {
    pub fn apply(&mut self, args: &InferenceArgs) {
        if args.sigma_max.is_some() {
            self.sigma_max = args.sigma_max;
        }
        if let Some(v) = args.grid_size {
            self.grid_size = v;
        }
        if let Some(v) = args.coarse_interval {
            self.coarse_interval = v;
        }
        if let Some(v) = args.repeats {
            self.repeats = v;
        }
        if args.constants.is_some() {
            self.constants = args.constants.clone();
        }
    }

    /// Fills in the checkpoint's `sigma_max` when none was given.
    pub fn resolve(&mut self, checkpoint_sigma_max: f64, seed: u64) -> Result<InferenceConfig> {
        let sigma_max = *self.sigma_max.get_or_insert(checkpoint_sigma_max);
        if sigma_max != checkpoint_sigma_max {
            log::warn!("sigma_max {sigma_max} overrides the checkpoint's {checkpoint_sigma_max}");
        }
        Ok(InferenceConfig {
            sigma_max,
            grid_size: self.grid_size,
            coarse_interval: self.coarse_interval,
            seed,
            repeats: self.repeats,
            constants: load_constants(self.constants.as_deref())?,
        })
    }
}

pub fn load_constants(path: Option<&Path>) -> Result<CalibrationConstants> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::file(p)(e.into()))?;
            CalibrationConstants::from_json(&text).map_err(CliError::file(p))
        }
        None => Ok(CalibrationConstants::default()),
    }
}

pub fn read_input(path: &Path) -> Result<Image> {
    qfm::image::read_image(path).map_err(CliError::file(path))
}

/// Everything needed to re-run a command, written next to its main output as
/// `<output>.run.json`.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub invocation: Vec<String>,
    pub config: &'a C,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub result: R,
}

pub fn run_record_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".run.json");
    PathBuf::from(name)
}

pub fn write_run_record<C: Serialize, R: Serialize>(
    output: &Path,
    command: &str,
    config: &C,
    inputs: &[&Path],
    outputs: &[&Path],
    result: R,
) -> Result<()> {
    let record = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        invocation: std::env::args().collect(),
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        result,
    };
    let text = serde_json::to_string_pretty(&record).expect("run records always serialize");
    std::fs::write(run_record_path(output), text + "\n")?;
    Ok(())
}
