//! JSON checkpoints.
//!
//! Floats are written in shortest round-trip decimal form and parsed back
//! exactly, so `load(save(m)) == m` bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Activation, LayerSpec, Mlp};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "vrprune-mlp/1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    input_dim: usize,
    output_dim: usize,
    activation: Activation,
    /// Row-major, `output_dim × input_dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    /// Row-major 0/1 entries.
    mask: Vec<u8>,
}

impl Mlp {
    pub fn to_json(&self) -> Result<String> {
        let layers = (0..self.num_layers())
            .map(|l| {
                let spec = self.specs()[l];
                LayerDoc {
                    input_dim: spec.input_dim,
                    output_dim: spec.output_dim,
                    activation: spec.activation,
                    weights: self.weights(l).iter().copied().collect(),
                    biases: self.biases(l).to_vec(),
                    mask: self.mask(l).iter().map(|&k| k as u8).collect(),
                }
            })
            .collect();
        let doc = CheckpointDoc {
            format: CHECKPOINT_FORMAT.to_string(),
            layers,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Input(format!(
                "unsupported checkpoint format {:?}",
                doc.format
            )));
        }
        let mut specs = Vec::with_capacity(doc.layers.len());
        let mut weights = Vec::with_capacity(doc.layers.len());
        let mut biases = Vec::with_capacity(doc.layers.len());
        let mut masks = Vec::with_capacity(doc.layers.len());
        for (l, layer) in doc.layers.into_iter().enumerate() {
            let shape = (layer.output_dim, layer.input_dim);
            let w = Array2::from_shape_vec(shape, layer.weights)
                .map_err(|e| Error::Shape(format!("checkpoint layer {l} weights: {e}")))?;
            if layer.mask.iter().any(|&m| m > 1) {
                return Err(Error::Input(format!(
                    "checkpoint layer {l} mask has entries other than 0/1"
                )));
            }
            let m = Array2::from_shape_vec(shape, layer.mask.iter().map(|&m| m == 1).collect())
                .map_err(|e| Error::Shape(format!("checkpoint layer {l} mask: {e}")))?;
            specs.push(LayerSpec {
                input_dim: layer.input_dim,
                output_dim: layer.output_dim,
                activation: layer.activation,
            });
            weights.push(w);
            biases.push(Array1::from(layer.biases));
            masks.push(m);
        }
        Mlp::from_parts(specs, weights, biases, masks)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Zeroed connections as `layer row col` lines in lexicographic order.
    pub fn mask_export(&self) -> String {
        let mut out = String::new();
        for l in 0..self.num_layers() {
            for ((r, c), &keep) in self.mask(l).indexed_iter() {
                if !keep {
                    out.push_str(&format!("{l} {r} {c}\n"));
                }
            }
        }
        out
    }
}
