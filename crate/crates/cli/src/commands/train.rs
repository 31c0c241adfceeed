use std::path::{Path, PathBuf};

use clap::Args;
use qfm::flow::{train, Checkpoint, MlpField, TrainConfig};
use qfm::image::Image;
use qfm::synthetic::toy_dataset;
use qfm::Dims;
use serde::{Deserialize, Serialize};

use super::Common;
use crate::config::{load_layer, read_input, resolve_seed, write_run_record};
use crate::error::{CliError, Result};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of clean training images, all the same size
    #[arg(long, conflicts_with = "toy")]
    pub data: Option<PathBuf>,
    /// Train on this many synthetic toy images instead of a directory
    #[arg(long)]
    pub toy: Option<usize>,
    /// Side length of the toy images [default: 8]
    #[arg(long)]
    pub toy_size: Option<usize>,
    /// Hidden layer widths, comma separated [default: 128]
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 1e-4]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [default: 1.0]
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Lower end of the training noise range [default: 0.05]
    #[arg(long)]
    pub noise_low: Option<f64>,
    /// Upper end of the training noise range [default: 1.0]
    #[arg(long)]
    pub noise_high: Option<f64>,
    /// Checkpoint JSON to write
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-epoch loss CSV [default: <out>.loss.csv]
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    data: Option<PathBuf>,
    toy: Option<usize>,
    toy_size: usize,
    hidden: Vec<usize>,
    #[serde(flatten)]
    train: TrainConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        TrainFile {
            data: None,
            toy: None,
            toy_size: 8,
            hidden: vec![128],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainReport {
    images: usize,
    resolution: [usize; 2],
    parameters: usize,
    first_loss: f64,
    final_loss: f64,
}

/// Readable images of a directory in file-name order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    Ok(paths)
}

fn load_dataset(cfg: &TrainFile) -> Result<Vec<Image>> {
    match (&cfg.data, cfg.toy) {
        (Some(dir), None) => list_images(dir)?.iter().map(|p| read_input(p)).collect(),
        (None, Some(n)) => Ok(toy_dataset(n, cfg.toy_size, cfg.train.seed)?),
        (Some(_), Some(_)) => Err(CliError::param("give either --data or --toy, not both")),
        (None, None) => Err(CliError::param(
            "training needs --data <dir> or --toy <count>",
        )),
    }
}

pub fn run(args: &TrainArgs, common: &Common) -> Result<()> {
    let layer = load_layer::<TrainFile>(common.config.as_deref())?;
    let mut cfg = layer.value;
    cfg.train.seed = resolve_seed(common.seed, layer.has_seed.then_some(cfg.train.seed))?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
        cfg.toy = None;
    }
    if args.toy.is_some() {
        cfg.toy = args.toy;
        cfg.data = None;
    }
    if let Some(v) = args.toy_size {
        cfg.toy_size = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = v.clone();
    }
    let t = &mut cfg.train;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.sigma_max {
        t.sigma_max = v;
    }
    if let Some(v) = args.noise_low {
        t.noise_level_range.0 = v;
    }
    if let Some(v) = args.noise_high {
        t.noise_level_range.1 = v;
    }
    cfg.train.validate()?;

    let data = load_dataset(&cfg)?;
    let first = data
        .first()
        .ok_or_else(|| CliError::param("the training set is empty"))?;
    let (h, w) = (first.height(), first.width());
    let field = MlpField::new(Dims(h, w), &cfg.hidden, cfg.train.sigma_max, cfg.train.seed)?;
    let parameters = field.param_count();
    log::info!(
        "training {parameters} parameters on {} images of {h}x{w}",
        data.len()
    );
    let outcome = train(field, &data, &cfg.train)?;

    Checkpoint::from_mlp(&outcome.field).save(&args.out)?;
    let loss_path = args.loss_csv.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".loss.csv");
        PathBuf::from(name)
    });
    std::fs::write(&loss_path, outcome.history_csv())?;

    let history = &outcome.loss_history;
    let report = TrainReport {
        images: data.len(),
        resolution: [h, w],
        parameters,
        first_loss: history[0],
        final_loss: history[history.len() - 1],
    };
    println!(
        "epoch 1 loss {:.6}, epoch {} loss {:.6}",
        report.first_loss,
        history.len(),
        report.final_loss
    );
    let inputs: Vec<&Path> = cfg.data.as_deref().into_iter().collect();
    write_run_record(
        &args.out,
        "train",
        &cfg,
        &inputs,
        &[&args.out, &loss_path],
        &report,
    )?;
    Ok(())
}
