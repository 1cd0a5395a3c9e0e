use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{BackwardTrace, Mlp};
use crate::data::WindowedDataset;
use crate::{Error, Result};

// Shuffling draws from its own ChaCha stream so it never aliases the
// initialisation stream when both are seeded with the same value.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// First/second moment accumulators for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &Mlp) -> Self {
        let ws: Vec<Array2<f64>> = (0..model.num_layers())
            .map(|l| Array2::zeros(model.weights(l).dim()))
            .collect();
        let bs: Vec<Array1<f64>> = (0..model.num_layers())
            .map(|l| Array1::zeros(model.biases(l).len()))
            .collect();
        Self {
            m_weights: ws.clone(),
            v_weights: ws,
            m_biases: bs.clone(),
            v_biases: bs,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    fn matches(&self, model: &Mlp) -> bool {
        self.m_weights.len() == model.num_layers()
            && (0..model.num_layers()).all(|l| {
                self.m_weights[l].dim() == model.weights(l).dim()
                    && self.m_biases[l].len() == model.biases(l).len()
            })
    }
}

/// One bias-corrected Adam update. Gradients at masked connections are
/// discarded and the mask is re-applied afterwards.
pub fn adam_step(
    model: &mut Mlp,
    grads: &BackwardTrace,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if !state.matches(model) {
        return Err(Error::Shape("optimizer state does not match model".into()));
    }
    let n = model.num_layers();
    if grads.weight_grads.len() != n || grads.bias_grads.len() != n {
        return Err(Error::Shape("gradients do not match model".into()));
    }
    for l in 0..n {
        if grads.weight_grads[l].dim() != model.weights(l).dim()
            || grads.bias_grads[l].len() != model.biases(l).len()
        {
            return Err(Error::Shape(format!("layer {l}: gradient shape mismatch")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;
    let update = move |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for l in 0..n {
        let mask = model.mask(l).clone();
        Zip::from(&mut model.weights_mut()[l])
            .and(&mut state.m_weights[l])
            .and(&mut state.v_weights[l])
            .and(&grads.weight_grads[l])
            .and(&mask)
            .for_each(|p, m, v, &g, &keep| update(p, m, v, if keep { g } else { 0.0 }));
        Zip::from(&mut model.biases_mut()[l])
            .and(&mut state.m_biases[l])
            .and(&mut state.v_biases[l])
            .and(&grads.bias_grads[l])
            .for_each(|p, m, v, &g| update(p, m, v, g));
        model.reapply_mask(l);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    /// Mean training loss of each epoch, accumulated over its mini-batches.
    pub loss_history: Vec<f64>,
}

/// Mini-batch Adam on the mean squared error. Samples are reshuffled every
/// epoch with a seeded Fisher-Yates permutation; the last partial batch is
/// kept.
pub fn train(mut model: Mlp, train_set: &WindowedDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = train_set.len();
    if n == 0 {
        return Err(Error::Input("training set is empty".into()));
    }
    if train_set.feature_dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "training set has {} features, model expects {}",
            train_set.feature_dim(),
            model.input_dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = AdamState::new(&model);
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sq_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = train_set.features.select(Axis(0), chunk);
            let y = train_set.targets.select(Axis(0), chunk);
            let trace = model.forward(x.view())?;
            let grads = model.backward(&trace, y.view())?;
            sq_total += grads.mse * chunk.len() as f64;
            adam_step(&mut model, &grads, &mut state, config)?;
        }
        let epoch_loss = sq_total / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss became non-finite at epoch {epoch}"
            )));
        }
        loss_history.push(epoch_loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history,
    })
}
