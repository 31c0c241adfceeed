pub mod calibrate;
pub mod denoise;
pub mod evaluate;
pub mod noise;
pub mod train;

use std::path::PathBuf;

/// Options accepted by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
}
