//! JSON checkpoints for vector fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, MlpField, OracleField, VectorField};
use crate::error::{Dims, Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Serialized field. The `kind` tag selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Checkpoint {
    Mlp {
        resolution: [usize; 2],
        hidden: Vec<usize>,
        layers: Vec<LayerRecord>,
        sigma_max: f64,
        seed: u64,
    },
    /// A constant field, mainly for exercising the solver end to end.
    Oracle {
        resolution: [usize; 2],
        velocity: Vec<f64>,
        sigma_max: f64,
    },
}

impl Checkpoint {
    pub fn from_mlp(field: &MlpField) -> Checkpoint {
        let Dims(h, w) = field.resolution();
        Checkpoint::Mlp {
            resolution: [h, w],
            hidden: field.hidden().to_vec(),
            layers: field
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    rows: l.rows,
                    cols: l.cols,
                    w: l.w.clone(),
                    b: l.b.clone(),
                })
                .collect(),
            sigma_max: field.sigma_max(),
            seed: field.seed(),
        }
    }

    pub fn from_oracle(field: &OracleField, sigma_max: f64) -> Checkpoint {
        let v = field.velocity();
        Checkpoint::Oracle {
            resolution: [v.height(), v.width()],
            velocity: v.data().to_vec(),
            sigma_max,
        }
    }

    pub fn sigma_max(&self) -> f64 {
        match self {
            Checkpoint::Mlp { sigma_max, .. } | Checkpoint::Oracle { sigma_max, .. } => *sigma_max,
        }
    }

    pub fn to_mlp(&self) -> Result<MlpField> {
        match self {
            Checkpoint::Mlp {
                resolution,
                hidden,
                layers,
                sigma_max,
                seed,
            } => {
                let layers: Vec<Dense> = layers
                    .iter()
                    .map(|l| Dense {
                        rows: l.rows,
                        cols: l.cols,
                        w: l.w.clone(),
                        b: l.b.clone(),
                    })
                    .collect();
                let field = MlpField::from_layers(
                    Dims(resolution[0], resolution[1]),
                    layers,
                    *sigma_max,
                    *seed,
                )?;
                if field.hidden() != hidden.as_slice() {
                    return Err(Error::param(
                        "checkpoint hidden sizes disagree with its layers",
                    ));
                }
                Ok(field)
            }
            Checkpoint::Oracle { .. } => {
                Err(Error::param("checkpoint holds an oracle field, not an mlp"))
            }
        }
    }

    pub fn into_field(self) -> Result<Box<dyn VectorField + Send + Sync>> {
        match self {
            Checkpoint::Mlp { .. } => Ok(Box::new(self.to_mlp()?)),
            Checkpoint::Oracle {
                resolution,
                velocity,
                ..
            } => {
                let img = Image::new(resolution[0], resolution[1], velocity)?;
                Ok(Box::new(OracleField::constant(img)))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint always serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if !(ckpt.sigma_max() > 0.0) {
            return Err(Error::param("checkpoint sigma_max must be positive"));
        }
        Ok(ckpt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Loads a checkpoint and returns its field with the stored `sigma_max`.
pub fn load_field(path: impl AsRef<Path>) -> Result<(Box<dyn VectorField + Send + Sync>, f64)> {
    let ckpt = Checkpoint::load(path)?;
    let sigma_max = ckpt.sigma_max();
    Ok((ckpt.into_field()?, sigma_max))
}
