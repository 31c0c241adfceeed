use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{path_sample_from_noise, qfm_loss, Gradients, MlpField, PathSample, VectorField};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seeded_rng;

/// Optimization settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub sigma_max: f64,
    /// Closed interval `sigma_hat` is drawn from uniformly.
    pub noise_level_range: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 4,
            epochs: 100,
            sigma_max: 1.0,
            noise_level_range: (0.05, 1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::param("batch size and epoch count must be positive"));
        }
        let (lo, hi) = self.noise_level_range;
        if !(self.sigma_max > 0.0 && 0.0 < lo && lo <= hi && hi <= self.sigma_max) {
            return Err(Error::param(format!(
                "noise range [{lo}, {hi}] must satisfy 0 < low <= high <= sigma_max = {}",
                self.sigma_max
            )));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn update(&mut self, field: &mut MlpField, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let moments = self.m.iter_mut().zip(self.v.iter_mut());
        for ((p, g), (m, v)) in field.params_mut().zip(grads.iter()).zip(moments) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A trained network and its per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: MlpField,
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    /// Loss history as `epoch,mean_loss` CSV with 1-based epochs.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, loss) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, loss));
        }
        out
    }
}

/// Fits `field` to the normalized flow-matching objective on `dataset`.
///
/// Each epoch visits the images in a fresh seeded order. Every visit draws a
/// new `t ~ U[0, 1]`, `sigma_hat ~ U(noise_level_range)` and noise vector.
pub fn train(mut field: MlpField, dataset: &[Image], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::param("training needs at least one image"));
    }
    for img in dataset {
        field.check_state(img)?;
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(field.param_count(), cfg.learning_rate);
    let (lo, hi) = cfg.noise_level_range;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let x0 = &dataset[i];
                let t: f64 = rng.random_range(0.0..=1.0);
                let sigma_hat: f64 = rng.random_range(lo..=hi);
                let eps: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
                batch.push(path_sample_from_noise(
                    x0,
                    &eps,
                    sigma_hat,
                    cfg.sigma_max,
                    t,
                )?);
            }
            let (loss, grads) = field.loss_and_gradients(&batch)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    stage: "training",
                    unit: "epoch",
                    index: epoch,
                });
            }
            epoch_total += loss * chunk.len() as f64;
            adam.update(&mut field, &grads);
        }
        let mean = epoch_total / dataset.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainOutcome {
        field,
        loss_history: history,
    })
}

/// Result of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub checked: usize,
}

/// Gradient magnitude below which relative error is measured against this floor.
const RELATIVE_FLOOR: f64 = 1e-6;
const CHECKED_PARAMS: usize = 128;

/// Compares backpropagated gradients of the loss on `sample` with central
/// differences `(L(p + eps) - L(p - eps)) / 2 eps` over a seeded random subset
/// of parameters (all of them when the network has fewer than 128).
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    field: &MlpField,
    sample: &PathSample,
    epsilon: f64,
    seed: u64,
) -> Result<GradientCheck> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::param(format!(
            "epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let batch = std::slice::from_ref(sample);
    let (_, grads) = field.loss_and_gradients(batch)?;
    let n = field.param_count();
    let picks = index::sample(&mut seeded_rng(seed), n, CHECKED_PARAMS.min(n)).into_vec();

    let mut probe = field.clone();
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    for &i in &picks {
        let p = field.param(i);
        probe.set_param(i, p + epsilon);
        let up = qfm_loss(&probe, batch)?;
        probe.set_param(i, p - epsilon);
        let down = qfm_loss(&probe, batch)?;
        probe.set_param(i, p);
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grads.get(i);
        let abs = (analytic - numeric).abs();
        let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        worst_abs = worst_abs.max(abs);
        worst_rel = worst_rel.max(abs / denom);
    }
    Ok(GradientCheck {
        max_relative_error: worst_rel,
        max_absolute_error: worst_abs,
        checked: picks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Dims;
    use crate::flow::make_path_sample;

    fn toy_images() -> Vec<Image> {
        (0..8)
            .map(|k| Image::from_fn(4, 4, |r, c| 0.1 * k as f64 + 0.05 * (r + c) as f64).unwrap())
            .collect()
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            noise_level_range: (0.0, 0.5),
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            noise_level_range: (0.5, 1.5),
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let field = MlpField::new(Dims(4, 4), &[8], 1.0, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let out = train(field.clone(), &toy_images(), &cfg).unwrap();
        assert_eq!(out.field, field);
        assert_eq!(out.loss_history.len(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        let field = MlpField::new(Dims(4, 4), &[8], 1.0, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 4,
            seed: 12,
            ..TrainConfig::default()
        };
        let a = train(field.clone(), &toy_images(), &cfg).unwrap();
        let b = train(field, &toy_images(), &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn training_rejects_bad_data() {
        let field = MlpField::new(Dims(4, 4), &[8], 1.0, 3).unwrap();
        assert!(train(field.clone(), &[], &TrainConfig::default()).is_err());
        let wrong = vec![Image::filled(5, 4, 0.0).unwrap()];
        assert!(matches!(
            train(field, &wrong, &TrainConfig::default()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let field = MlpField::new(Dims(4, 4), &[8], 1.0, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            ..TrainConfig::default()
        };
        match train(field, &toy_images(), &cfg) {
            Err(Error::Divergence {
                stage: "training",
                index,
                ..
            }) => assert!(index >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn history_csv_format() {
        let out = TrainOutcome {
            field: MlpField::zeros(Dims(2, 2), &[], 1.0).unwrap(),
            loss_history: vec![1.5, 0.25],
        };
        assert_eq!(out.history_csv(), "epoch,mean_loss\n1,1.5\n2,0.25\n");
    }

    #[test]
    fn gradient_check_small_network() {
        let field = MlpField::new(Dims(3, 3), &[6, 5], 1.0, 8).unwrap();
        let x0 = Image::from_fn(3, 3, |r, c| 0.3 + 0.1 * (r as f64 - c as f64)).unwrap();
        let sample = make_path_sample(&x0, 0.4, 1.0, 0.6, 2).unwrap();
        let check = gradient_check(&field, &sample, 1e-5, 0).unwrap();
        assert_eq!(check.checked, 128);
        assert!(check.max_relative_error < 1e-4, "{check:?}");
        assert_eq!(check, gradient_check(&field, &sample, 1e-5, 0).unwrap());
        assert!(gradient_check(&field, &sample, 1e-2, 0).is_err());
    }
}
