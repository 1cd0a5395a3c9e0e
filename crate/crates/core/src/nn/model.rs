//! Dense feed-forward regressor with per-connection masks.
//!
//! Every layer computes `z = (W ⊙ M) a + b` where `M` is a binary mask of the
//! same shape as `W` (`output_dim × input_dim`, row-major). Hidden layers apply
//! their activation to `z`; the final layer is a scalar linear head.
//!
//! Stored weights at masked-out positions are always exactly zero: every
//! mutator that touches weights or masks re-applies the mask, so the forward
//! pass can read `W` directly.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn relu(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            activation: Activation::Linear,
        }
    }
}

/// ReLU hidden layers of the given widths followed by a scalar linear head.
pub fn hidden_stack(input_dim: usize, hidden: &[usize]) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &width in hidden {
        specs.push(LayerSpec::relu(prev, width));
        prev = width;
    }
    specs.push(LayerSpec::linear(prev, 1));
    specs
}

/// One hidden layer of 256 units.
pub fn two_layer(input_dim: usize) -> Vec<LayerSpec> {
    hidden_stack(input_dim, &[256])
}

/// Hidden layers of 768, 512, 384 and 192 units.
pub fn five_layer(input_dim: usize) -> Vec<LayerSpec> {
    hidden_stack(input_dim, &[768, 512, 384, 192])
}

pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    let Some(last) = specs.last() else {
        return Err(Error::Config("model needs at least one layer".into()));
    };
    for (l, spec) in specs.iter().enumerate() {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Config(format!("layer {l} has a zero dimension")));
        }
    }
    for (l, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Config(format!(
                "layer {} outputs {} units but layer {} expects {}",
                l,
                pair[0].output_dim,
                l + 1,
                pair[1].input_dim
            )));
        }
    }
    if last.output_dim != 1 || last.activation != Activation::Linear {
        return Err(Error::Config(
            "final layer must be a scalar linear output".into(),
        ));
    }
    Ok(())
}

/// Per-layer activations captured by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[l]` is the batch fed into layer `l` (`batch × input_dim`).
    /// `inputs[0]` is the raw batch.
    pub inputs: Vec<Array2<f64>>,
    /// `pre_activations[l]` is `z` of layer `l` (`batch × output_dim`).
    pub pre_activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn predictions(&self) -> ArrayView1<'_, f64> {
        self.pre_activations
            .last()
            .expect("trace has at least one layer")
            .column(0)
    }

    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// How the squared errors of a batch are reduced into the loss that is
/// differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossReduction {
    /// `L = mean_b (ŷ_b − y_b)²`, used for training.
    Mean,
    /// `L = Σ_b (ŷ_b − y_b)²`, so that row `b` of every delta is the gradient
    /// of that sample's own squared error.
    Sum,
}

#[derive(Debug, Clone)]
pub struct BackwardTrace {
    /// `deltas[l]` is dL/dz for layer `l` (`batch × output_dim`).
    pub deltas: Vec<Array2<f64>>,
    /// Same shape as the weights. Entries at masked positions are reported
    /// as computed; the optimizer discards them.
    pub weight_grads: Vec<Array2<f64>>,
    pub bias_grads: Vec<Array1<f64>>,
    /// Mean squared error of the batch, independent of the reduction.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    specs: Vec<LayerSpec>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    masks: Vec<Array2<bool>>,
}

impl Mlp {
    /// He-normal weights (variance `2 / fan_in`), zero biases, all-ones masks.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(specs.len());
        for spec in specs {
            let std = (2.0 / spec.input_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite positive std");
            let w = Array2::from_shape_simple_fn((spec.output_dim, spec.input_dim), || {
                normal.sample(&mut rng)
            });
            weights.push(w);
        }
        Ok(Self {
            specs: specs.to_vec(),
            biases: specs.iter().map(|s| Array1::zeros(s.output_dim)).collect(),
            masks: specs
                .iter()
                .map(|s| Array2::from_elem((s.output_dim, s.input_dim), true))
                .collect(),
            weights,
        })
    }

    pub fn from_parts(
        specs: Vec<LayerSpec>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        masks: Vec<Array2<bool>>,
    ) -> Result<Self> {
        validate_specs(&specs)?;
        let n = specs.len();
        if weights.len() != n || biases.len() != n || masks.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} weight, bias and mask arrays, got {}, {}, {}",
                weights.len(),
                biases.len(),
                masks.len()
            )));
        }
        for (l, spec) in specs.iter().enumerate() {
            let shape = (spec.output_dim, spec.input_dim);
            if weights[l].dim() != shape || masks[l].dim() != shape {
                return Err(Error::Shape(format!(
                    "layer {l}: weights {:?} / mask {:?} do not match {shape:?}",
                    weights[l].dim(),
                    masks[l].dim()
                )));
            }
            if biases[l].len() != spec.output_dim {
                return Err(Error::Shape(format!(
                    "layer {l}: {} biases for {} outputs",
                    biases[l].len(),
                    spec.output_dim
                )));
            }
        }
        let mut model = Self {
            specs,
            weights,
            biases,
            masks,
        };
        for l in 0..n {
            model.reapply_mask(l);
        }
        Ok(model)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].input_dim
    }

    pub fn weights(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &Array1<f64> {
        &self.biases[layer]
    }

    pub fn mask(&self, layer: usize) -> &Array2<bool> {
        &self.masks[layer]
    }

    pub fn masks(&self) -> &[Array2<bool>] {
        &self.masks
    }

    /// Number of weight entries over all layers (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Number of unmasked weight entries.
    pub fn active_weight_count(&self) -> usize {
        self.masks
            .iter()
            .map(|m| m.iter().filter(|&&keep| keep).count())
            .sum()
    }

    pub fn set_weights(&mut self, layer: usize, weights: Array2<f64>) -> Result<()> {
        if weights.dim() != self.weights[layer].dim() {
            return Err(Error::Shape(format!(
                "layer {layer}: weights {:?} do not match {:?}",
                weights.dim(),
                self.weights[layer].dim()
            )));
        }
        self.weights[layer] = weights;
        self.reapply_mask(layer);
        Ok(())
    }

    pub fn set_biases(&mut self, layer: usize, biases: Array1<f64>) -> Result<()> {
        if biases.len() != self.biases[layer].len() {
            return Err(Error::Shape(format!(
                "layer {layer}: {} biases for {} outputs",
                biases.len(),
                self.biases[layer].len()
            )));
        }
        self.biases[layer] = biases;
        Ok(())
    }

    /// Replace every layer's mask. Weights at newly masked positions become 0.
    pub fn set_masks(&mut self, masks: Vec<Array2<bool>>) -> Result<()> {
        if masks.len() != self.masks.len() {
            return Err(Error::Shape(format!(
                "{} masks for {} layers",
                masks.len(),
                self.masks.len()
            )));
        }
        for (l, m) in masks.iter().enumerate() {
            if m.dim() != self.masks[l].dim() {
                return Err(Error::Shape(format!(
                    "layer {l}: mask {:?} does not match {:?}",
                    m.dim(),
                    self.masks[l].dim()
                )));
            }
        }
        self.masks = masks;
        for l in 0..self.masks.len() {
            self.reapply_mask(l);
        }
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub(crate) fn reapply_mask(&mut self, layer: usize) {
        Zip::from(&mut self.weights[layer])
            .and(&self.masks[layer])
            .for_each(|w, &keep| {
                if !keep {
                    *w = 0.0;
                }
            });
    }

    fn check_batch(&self, batch: &ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        self.check_batch(&batch)?;
        let n = self.num_layers();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut a = batch.to_owned();
        for l in 0..n {
            let mut z = a.dot(&self.weights[l].t());
            z += &self.biases[l];
            let next = if l + 1 < n {
                let act = self.specs[l].activation;
                Some(z.mapv(|v| act.apply(v)))
            } else {
                None
            };
            inputs.push(a);
            pre_activations.push(z);
            if let Some(next) = next {
                a = next;
            } else {
                break;
            }
        }
        Ok(ForwardTrace {
            inputs,
            pre_activations,
        })
    }

    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward(batch)?.predictions().to_owned())
    }

    /// Mean squared error of the model on a batch.
    pub fn mse(&self, batch: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<f64> {
        if targets.len() != batch.nrows() {
            return Err(Error::Shape(format!(
                "{} targets for {} samples",
                targets.len(),
                batch.nrows()
            )));
        }
        if targets.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let pred = self.predict(batch)?;
        let sq: f64 = pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
        Ok(sq / targets.len() as f64)
    }

    /// Backpropagates the mean squared error of `trace`'s batch.
    pub fn backward(&self, trace: &ForwardTrace, targets: ArrayView1<'_, f64>) -> Result<BackwardTrace> {
        self.backward_with(trace, targets, LossReduction::Mean)
    }

    pub fn backward_with(
        &self,
        trace: &ForwardTrace,
        targets: ArrayView1<'_, f64>,
        reduction: LossReduction,
    ) -> Result<BackwardTrace> {
        let n = self.num_layers();
        if trace.inputs.len() != n || trace.pre_activations.len() != n {
            return Err(Error::Shape(format!(
                "trace has {} layers, model has {n}",
                trace.inputs.len()
            )));
        }
        for l in 0..n {
            let spec = &self.specs[l];
            if trace.inputs[l].ncols() != spec.input_dim
                || trace.pre_activations[l].ncols() != spec.output_dim
            {
                return Err(Error::Shape(format!("trace layer {l} does not match model")));
            }
        }
        let batch = trace.batch_size();
        if targets.len() != batch {
            return Err(Error::Shape(format!(
                "{} targets for batch of {batch}",
                targets.len()
            )));
        }
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }

        let pred = trace.predictions();
        let scale = match reduction {
            LossReduction::Mean => 2.0 / batch as f64,
            LossReduction::Sum => 2.0,
        };
        let mut sq_sum = 0.0;
        let mut delta = Array2::zeros((batch, 1));
        for b in 0..batch {
            let err = pred[b] - targets[b];
            sq_sum += err * err;
            delta[[b, 0]] = scale * err;
        }

        let mut deltas = vec![Array2::zeros((0, 0)); n];
        let mut weight_grads = vec![Array2::zeros((0, 0)); n];
        let mut bias_grads = vec![Array1::zeros(0); n];
        for l in (0..n).rev() {
            weight_grads[l] = delta.t().dot(&trace.inputs[l]);
            bias_grads[l] = delta.sum_axis(Axis(0));
            let next = if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                let act = self.specs[l - 1].activation;
                Zip::from(&mut back)
                    .and(&trace.pre_activations[l - 1])
                    .for_each(|d, &z| *d *= act.derivative(z));
                Some(back)
            } else {
                None
            };
            deltas[l] = std::mem::replace(&mut delta, next.unwrap_or_else(|| Array2::zeros((0, 0))));
        }

        Ok(BackwardTrace {
            deltas,
            weight_grads,
            bias_grads,
            mse: sq_sum / batch as f64,
        })
    }
}
