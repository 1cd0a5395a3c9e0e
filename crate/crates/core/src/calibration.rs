//! Single-pass activation/gradient second moments over held-out data.
//!
//! For layer `l`, `act_sq[i] = E[a_i²]` over the inputs feeding the layer
//! (raw features for the first layer, post-activation outputs otherwise) and
//! `grad_sq[j] = E[g_j²]` with `g_j = ∂(ŷ − y)²/∂z_j`, the gradient of each
//! sample's own squared error with respect to the layer's pre-activation.
//! Moments are computed once over the whole set and once per group.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroupId, WindowedDataset};
use crate::nn::{LossReduction, Mlp};
use crate::{Error, Result};

// Rows per forward/backward chunk. Group and global paths use the same
// chunking so a single-group set yields bit-identical moments on both.
const CHUNK_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMoments {
    pub act_sq: Vec<f64>,
    pub grad_sq: Vec<f64>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub global: Vec<LayerMoments>,
    pub per_group: BTreeMap<GroupId, Vec<LayerMoments>>,
}

fn accumulate(
    model: &Mlp,
    features: ArrayView2<'_, f64>,
    targets: &[f64],
    rows: &[usize],
) -> Result<Vec<LayerMoments>> {
    let mut act = Vec::with_capacity(model.num_layers());
    let mut grad = Vec::with_capacity(model.num_layers());
    for spec in model.specs() {
        act.push(vec![0.0; spec.input_dim]);
        grad.push(vec![0.0; spec.output_dim]);
    }
    for chunk in rows.chunks(CHUNK_ROWS) {
        let x = features.select(Axis(0), chunk);
        let y: ndarray::Array1<f64> = chunk.iter().map(|&i| targets[i]).collect();
        let trace = model.forward(x.view())?;
        let back = model.backward_with(&trace, y.view(), LossReduction::Sum)?;
        for l in 0..model.num_layers() {
            for row in trace.inputs[l].rows() {
                for (s, v) in act[l].iter_mut().zip(row) {
                    *s += v * v;
                }
            }
            for row in back.deltas[l].rows() {
                for (s, v) in grad[l].iter_mut().zip(row) {
                    *s += v * v;
                }
            }
        }
    }
    let n = rows.len() as f64;
    Ok(act
        .into_iter()
        .zip(grad)
        .map(|(a, g)| LayerMoments {
            act_sq: a.into_iter().map(|v| v / n).collect(),
            grad_sq: g.into_iter().map(|v| v / n).collect(),
            sample_count: rows.len(),
        })
        .collect())
}

/// Runs the calibration pass. The model is not modified.
pub fn calibrate(model: &Mlp, calib_set: &WindowedDataset) -> Result<CalibrationStats> {
    if calib_set.is_empty() {
        return Err(Error::Calibration("calibration set is empty".into()));
    }
    if calib_set.feature_dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "calibration set has {} features, model expects {}",
            calib_set.feature_dim(),
            model.input_dim()
        )));
    }
    let targets = calib_set.targets.as_slice().expect("contiguous targets");
    let features = calib_set.features.view();
    let all: Vec<usize> = (0..calib_set.len()).collect();
    let global = accumulate(model, features, targets, &all)?;

    let groups: Vec<(GroupId, Vec<usize>)> = calib_set.indices_by_group().into_iter().collect();
    let per_group = groups
        .into_par_iter()
        .map(|(g, rows)| {
            if rows.is_empty() {
                return Err(Error::Calibration(format!("group {g} has no samples")));
            }
            if rows.len() < 2 {
                log::warn!("calibration group {g} has a single sample; its moments are noisy");
            }
            Ok((g, accumulate(model, features, targets, &rows)?))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    Ok(CalibrationStats { global, per_group })
}

/// Sample-count-weighted mean of the per-group moments, layer by layer.
/// Groups are combined in sorted order.
pub fn merge_group_moments(stats: &CalibrationStats) -> Result<Vec<LayerMoments>> {
    let mut groups = stats.per_group.values();
    let Some(first) = groups.next() else {
        return Err(Error::Calibration("no groups to merge".into()));
    };
    let mut acc: Vec<LayerMoments> = first
        .iter()
        .map(|m| LayerMoments {
            act_sq: m.act_sq.iter().map(|v| v * m.sample_count as f64).collect(),
            grad_sq: m.grad_sq.iter().map(|v| v * m.sample_count as f64).collect(),
            sample_count: m.sample_count,
        })
        .collect();
    for layers in groups {
        if layers.len() != acc.len() {
            return Err(Error::Calibration("groups disagree on layer count".into()));
        }
        for (a, m) in acc.iter_mut().zip(layers) {
            if a.act_sq.len() != m.act_sq.len() || a.grad_sq.len() != m.grad_sq.len() {
                return Err(Error::Calibration("groups disagree on layer widths".into()));
            }
            let w = m.sample_count as f64;
            a.act_sq.iter_mut().zip(&m.act_sq).for_each(|(s, v)| *s += w * v);
            a.grad_sq.iter_mut().zip(&m.grad_sq).for_each(|(s, v)| *s += w * v);
            a.sample_count += m.sample_count;
        }
    }
    for a in &mut acc {
        let n = a.sample_count as f64;
        a.act_sq.iter_mut().for_each(|v| *v /= n);
        a.grad_sq.iter_mut().for_each(|v| *v /= n);
    }
    Ok(acc)
}

impl CalibrationStats {
    pub fn groups(&self) -> impl Iterator<Item = &GroupId> {
        self.per_group.keys()
    }

    pub fn group(&self, g: &GroupId) -> Result<&[LayerMoments]> {
        self.per_group
            .get(g)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Calibration(format!("unknown group {g}")))
    }

    /// Checks layer alignment with `model`, non-negativity and sample counts.
    pub fn validate_for(&self, model: &Mlp) -> Result<()> {
        let check = |who: &str, layers: &[LayerMoments]| -> Result<()> {
            if layers.len() != model.num_layers() {
                return Err(Error::Shape(format!(
                    "{who}: {} layers of moments for a {}-layer model",
                    layers.len(),
                    model.num_layers()
                )));
            }
            for (l, (m, spec)) in layers.iter().zip(model.specs()).enumerate() {
                if m.act_sq.len() != spec.input_dim || m.grad_sq.len() != spec.output_dim {
                    return Err(Error::Shape(format!("{who}: layer {l} moments do not match model")));
                }
                if m.sample_count == 0 {
                    return Err(Error::Calibration(format!("{who}: layer {l} has no samples")));
                }
                if m.act_sq.iter().chain(&m.grad_sq).any(|v| !(*v >= 0.0)) {
                    return Err(Error::Calibration(format!("{who}: layer {l} has a negative moment")));
                }
            }
            Ok(())
        };
        check("global", &self.global)?;
        for (g, layers) in &self.per_group {
            check(&format!("group {g}"), layers)?;
        }
        let total: usize = self.per_group.values().map(|ls| ls[0].sample_count).sum();
        if total != self.global[0].sample_count {
            return Err(Error::Calibration(format!(
                "group sample counts sum to {total}, global count is {}",
                self.global[0].sample_count
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
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
}
