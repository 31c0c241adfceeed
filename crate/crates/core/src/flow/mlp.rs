//! Fully connected velocity network with hand-written backpropagation.
//!
//! The input is the flattened state followed by `t` and `sigma_hat`; hidden
//! layers use `tanh`, the output layer is linear and has one unit per pixel.

use rand::Rng;

use super::{FieldKind, PathSample, VectorField};
use crate::error::{Dims, Error, Result};
use crate::image::Image;
use crate::seeded_rng;

/// One affine layer, `y = W x + b`, with `W` stored row-major as `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Dense {
        Dense {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.w
                .chunks_exact(self.cols)
                .zip(&self.b)
                .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b),
        );
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Flat view in the same order as [`MlpField::param`].
    pub fn get(&self, index: usize) -> f64 {
        let (l, slot) = locate(&self.layers, index);
        let layer = &self.layers[l];
        match slot {
            Slot::Weight(i) => layer.w[i],
            Slot::Bias(i) => layer.b[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
    }
}

enum Slot {
    Weight(usize),
    Bias(usize),
}

fn locate(layers: &[Dense], mut index: usize) -> (usize, Slot) {
    for (l, layer) in layers.iter().enumerate() {
        if index < layer.w.len() {
            return (l, Slot::Weight(index));
        }
        index -= layer.w.len();
        if index < layer.b.len() {
            return (l, Slot::Bias(index));
        }
        index -= layer.b.len();
    }
    panic!("parameter index out of range");
}

/// Multilayer perceptron velocity field for one fixed image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    resolution: Dims,
    hidden: Vec<usize>,
    layers: Vec<Dense>,
    sigma_max: f64,
    seed: u64,
}

fn layer_sizes(resolution: Dims, hidden: &[usize]) -> Vec<usize> {
    let d = resolution.0 * resolution.1;
    let mut sizes = vec![d + 2];
    sizes.extend_from_slice(hidden);
    sizes.push(d);
    sizes
}

impl MlpField {
    /// Randomly initialized network; weights and biases are uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(resolution: Dims, hidden: &[usize], sigma_max: f64, seed: u64) -> Result<Self> {
        let mut field = MlpField::zeros(resolution, hidden, sigma_max)?;
        field.seed = seed;
        let mut rng = seeded_rng(seed);
        for layer in &mut field.layers {
            let bound = 1.0 / (layer.cols as f64).sqrt();
            for p in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(field)
    }

    /// Network with every parameter set to zero.
    pub fn zeros(resolution: Dims, hidden: &[usize], sigma_max: f64) -> Result<Self> {
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(Error::param("network resolution must be positive"));
        }
        if hidden.contains(&0) {
            return Err(Error::param("hidden layer sizes must be positive"));
        }
        if !(sigma_max > 0.0) || !sigma_max.is_finite() {
            return Err(Error::param(format!(
                "sigma_max must be positive, got {sigma_max}"
            )));
        }
        let sizes = layer_sizes(resolution, hidden);
        let layers = sizes.windows(2).map(|p| Dense::zeros(p[1], p[0])).collect();
        Ok(MlpField {
            resolution,
            hidden: hidden.to_vec(),
            layers,
            sigma_max,
            seed: 0,
        })
    }

    /// Assembles a network from explicit layers, checking that shapes chain
    /// from `d + 2` inputs to `d` outputs and that every parameter is finite.
    pub fn from_layers(
        resolution: Dims,
        layers: Vec<Dense>,
        sigma_max: f64,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("network needs at least one layer"));
        }
        let hidden: Vec<usize> = layers[..layers.len() - 1].iter().map(|l| l.rows).collect();
        let expected = layer_sizes(resolution, &hidden);
        for (i, layer) in layers.iter().enumerate() {
            if layer.cols != expected[i] || layer.rows != expected[i + 1] {
                return Err(Error::param(format!(
                    "layer {i} is {}x{}, expected {}x{}",
                    layer.rows,
                    layer.cols,
                    expected[i + 1],
                    expected[i]
                )));
            }
            if layer.w.len() != layer.rows * layer.cols || layer.b.len() != layer.rows {
                return Err(Error::param(format!(
                    "layer {i} buffers do not match its shape"
                )));
            }
            if layer.w.iter().chain(&layer.b).any(|v| !v.is_finite()) {
                return Err(Error::param(format!("layer {i} has non-finite parameters")));
            }
        }
        let mut field = MlpField::zeros(resolution, &hidden, sigma_max)?;
        field.layers = layers;
        field.seed = seed;
        Ok(field)
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flattened state size plus the two conditioning scalars.
    pub fn input_dim(&self) -> usize {
        self.resolution.0 * self.resolution.1 + 2
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameter by flat index: each layer's weights, then its biases.
    pub fn param(&self, index: usize) -> f64 {
        let (l, slot) = locate(&self.layers, index);
        match slot {
            Slot::Weight(i) => self.layers[l].w[i],
            Slot::Bias(i) => self.layers[l].b[i],
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, slot) = locate(&self.layers, index);
        match slot {
            Slot::Weight(i) => self.layers[l].w[i] = value,
            Slot::Bias(i) => self.layers[l].b[i] = value,
        }
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    fn input(&self, state: &Image, t: f64, sigma_hat: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(state.data());
        x.push(t);
        x.push(sigma_hat);
        x
    }

    /// Activations of every layer, input first and network output last.
    fn forward(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(acts.last().unwrap(), &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulates parameter gradients given the loss gradient at the output.
    fn backward(&self, acts: &[Vec<f64>], d_out: Vec<f64>, grads: &mut Gradients) {
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let g = &mut grads.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                g.b[r] += d;
                let row = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                row.iter_mut().zip(input).for_each(|(gw, a)| *gw += d * a);
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.cols];
            for (row, &d) in layer.w.chunks_exact(layer.cols).zip(&delta) {
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
            }
            // tanh'(z) = 1 - tanh(z)^2
            prev.iter_mut()
                .zip(input)
                .for_each(|(p, a)| *p *= 1.0 - a * a);
            delta = prev;
        }
    }

    /// Loss over `batch` and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &[PathSample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::param("loss needs a non-empty batch"));
        }
        let mut grads = self.zero_gradients();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for s in batch {
            self.check_state(&s.x_t)?;
            s.x_t.check_same_shape(&s.target)?;
            let acts = self.forward(self.input(&s.x_t, s.t, s.sigma_hat));
            let out = acts.last().unwrap();
            let d = out.len() as f64;
            let residual: Vec<f64> = out
                .iter()
                .zip(s.target.data())
                .map(|(v, y)| v - y)
                .collect();
            total += residual.iter().map(|r| r * r).sum::<f64>() / d;
            let d_out = residual.iter().map(|r| 2.0 * r * scale / d).collect();
            self.backward(&acts, d_out, &mut grads);
        }
        Ok((total * scale, grads))
    }
}

impl VectorField for MlpField {
    fn kind(&self) -> FieldKind {
        FieldKind::Mlp
    }

    fn resolution(&self) -> Dims {
        self.resolution
    }

    fn evaluate(&self, state: &Image, t: f64, sigma_hat: f64) -> Result<Image> {
        self.check_state(state)?;
        let mut acts = self.forward(self.input(state, t, sigma_hat));
        let out = acts.pop().unwrap();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                stage: "field evaluation",
                unit: "output",
                index: i,
            });
        }
        Image::new(self.resolution.0, self.resolution.1, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{make_path_sample, qfm_loss};

    fn small() -> MlpField {
        MlpField::new(Dims(3, 2), &[5, 4], 1.0, 17).unwrap()
    }

    #[test]
    fn shapes_chain() {
        let f = small();
        let dims: Vec<(usize, usize)> = f.layers().iter().map(|l| (l.rows, l.cols)).collect();
        assert_eq!(dims, vec![(5, 8), (4, 5), (6, 4)]);
        assert_eq!(f.param_count(), 5 * 8 + 5 + 4 * 5 + 4 + 6 * 4 + 6);
        assert_eq!(f.params().count(), f.param_count());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let f = small();
        for layer in f.layers() {
            let bound = 1.0 / (layer.cols as f64).sqrt();
            assert!(layer.w.iter().chain(&layer.b).all(|v| v.abs() <= bound));
        }
        assert_eq!(f, small());
        assert_ne!(f, MlpField::new(Dims(3, 2), &[5, 4], 1.0, 18).unwrap());
    }

    #[test]
    fn flat_param_access() {
        let mut f = small();
        let n = f.param_count();
        let flat: Vec<f64> = f.params().collect();
        for i in [0, 39, 40, 44, 45, n - 1] {
            assert_eq!(f.param(i), flat[i]);
        }
        f.set_param(44, 3.5);
        assert_eq!(f.layers()[0].b[4], 3.5);
    }

    #[test]
    fn loss_matches_generic_loss() {
        let f = small();
        let x0 = Image::from_fn(3, 2, |r, c| 0.2 * r as f64 + 0.1 * c as f64).unwrap();
        let batch: Vec<_> = (0..3)
            .map(|i| make_path_sample(&x0, 0.3, 1.0, 0.25 * i as f64, i).unwrap())
            .collect();
        let (loss, _) = f.loss_and_gradients(&batch).unwrap();
        assert!((loss - qfm_loss(&f, &batch).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn from_layers_validates() {
        let f = small();
        let mut layers = f.layers().to_vec();
        assert!(MlpField::from_layers(Dims(3, 2), layers.clone(), 1.0, 0).is_ok());
        assert!(MlpField::from_layers(Dims(2, 2), layers.clone(), 1.0, 0).is_err());
        layers[1].b[0] = f64::NAN;
        assert!(MlpField::from_layers(Dims(3, 2), layers, 1.0, 0).is_err());
    }

    #[test]
    fn evaluate_rejects_wrong_resolution() {
        let f = small();
        assert!(matches!(
            f.evaluate(&Image::filled(2, 3, 0.0).unwrap(), 0.5, 0.5),
            Err(Error::Shape { .. })
        ));
    }
}
