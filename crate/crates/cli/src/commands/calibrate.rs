use std::path::PathBuf;

use clap::Args;
use qfm::noise::calibrate_constants;
use serde::{Deserialize, Serialize};

use super::Common;
use crate::config::{load_layer, resolve_seed, write_run_record};
use crate::error::Result;

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Number of four-sample groups to draw [default: 1000000]
    #[arg(long)]
    pub samples: Option<u64>,
    /// Output JSON file; printed to stdout when omitted
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct CalibrateConfig {
    samples: u64,
    seed: u64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            samples: 1_000_000,
            seed: 0,
        }
    }
}

pub fn run(args: &CalibrateArgs, common: &Common) -> Result<()> {
    let layer = load_layer::<CalibrateConfig>(common.config.as_deref())?;
    let mut cfg = layer.value;
    cfg.seed = resolve_seed(common.seed, layer.has_seed.then_some(cfg.seed))?;
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    let constants = calibrate_constants(cfg.samples, cfg.seed)?;
    let json = constants.to_json();
    match &args.out {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))?;
            write_run_record(path, "calibrate", &cfg, &[], &[path], constants)?;
            println!("c1 = {}, c2 = {}", constants.c1, constants.c2);
        }
        None => println!("{json}"),
    }
    Ok(())
}
