//! Connection saliency, variance-regularised scores and the pruning
//! operators built on them.
//!
//! Saliency of weight `W_ij` (row `j` = output unit, column `i` = input):
//!
//! ```text
//! φ_ij     = ½ · E[a_i²]   · E[g_j²]   · W_ij²
//! φ^(g)_ij = ½ · E_g[a_i²] · E_g[g_j²] · W_ij²
//! S_ij     = mean_g φ^(g)_ij + λ_var · var_g φ^(g)_ij
//! ```
//!
//! Mean and variance over groups are unweighted, with the variance taken
//! over the population of groups (divide by G). Connections with the
//! smallest score are pruned first.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationStats, LayerMoments};
use crate::data::GroupId;
use crate::nn::Mlp;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    PhiMean,
    PhiGroup,
    VrScore,
    AbsWeight,
}

/// Per-connection scores aligned with the model's weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionScore {
    pub kind: ScoreKind,
    pub layers: Vec<Array2<f64>>,
}

impl ConnectionScore {
    fn check_aligned(&self, model: &Mlp) -> Result<()> {
        if self.layers.len() != model.num_layers() {
            return Err(Error::Shape(format!(
                "{} score layers for a {}-layer model",
                self.layers.len(),
                model.num_layers()
            )));
        }
        for (l, s) in self.layers.iter().enumerate() {
            if s.dim() != model.weights(l).dim() {
                return Err(Error::Shape(format!(
                    "layer {l}: scores {:?} vs weights {:?}",
                    s.dim(),
                    model.weights(l).dim()
                )));
            }
        }
        Ok(())
    }
}

/// Binary keep-mask per layer (`true` = connection kept).
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub layers: Vec<Array2<bool>>,
    pub achieved_sparsity: f64,
}

impl PruneMask {
    pub fn new(layers: Vec<Array2<bool>>) -> Self {
        let total: usize = layers.iter().map(|m| m.len()).sum();
        let zeros: usize = layers.iter().map(|m| m.iter().filter(|&&k| !k).count()).sum();
        let achieved_sparsity = if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        };
        Self {
            layers,
            achieved_sparsity,
        }
    }

    pub fn of_model(model: &Mlp) -> Self {
        Self::new(model.masks().to_vec())
    }

    /// Copy of `model` carrying this mask.
    pub fn apply(&self, model: &Mlp) -> Result<Mlp> {
        let mut out = model.clone();
        out.set_masks(self.layers.clone())?;
        Ok(out)
    }

    pub fn zeroed_count(&self) -> usize {
        self.layers
            .iter()
            .map(|m| m.iter().filter(|&&k| !k).count())
            .sum()
    }
}

/// Fraction of weight entries that are masked out.
pub fn achieved_sparsity(mask: &PruneMask) -> f64 {
    mask.achieved_sparsity
}

#[derive(Debug, Clone, PartialEq)]
pub enum SparsityTarget {
    Global(f64),
    PerLayer(Vec<f64>),
    /// Retained neurons per hidden layer.
    NeuronBudget(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrConfig {
    pub lambda_var: f64,
}

impl Default for VrConfig {
    fn default() -> Self {
        Self { lambda_var: 1.0 }
    }
}

impl VrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_var >= 0.0 && self.lambda_var.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_var must be finite and non-negative, got {}",
                self.lambda_var
            )));
        }
        Ok(())
    }
}

fn phi_from_moments(moments: &[LayerMoments], model: &Mlp, kind: ScoreKind) -> Result<ConnectionScore> {
    if moments.len() != model.num_layers() {
        return Err(Error::Shape(format!(
            "{} layers of moments for a {}-layer model",
            moments.len(),
            model.num_layers()
        )));
    }
    let mut layers = Vec::with_capacity(moments.len());
    for (l, m) in moments.iter().enumerate() {
        let w = model.weights(l);
        let (rows, cols) = w.dim();
        if m.grad_sq.len() != rows || m.act_sq.len() != cols {
            return Err(Error::Shape(format!(
                "layer {l}: moments ({} grads, {} acts) vs weights {rows}x{cols}",
                m.grad_sq.len(),
                m.act_sq.len()
            )));
        }
        let phi = Array2::from_shape_fn((rows, cols), |(j, i)| {
            0.5 * m.act_sq[i] * m.grad_sq[j] * w[[j, i]] * w[[j, i]]
        });
        layers.push(phi);
    }
    Ok(ConnectionScore { kind, layers })
}

/// Pooled saliency φ from global moments. Masked weights score 0.
pub fn saliency_phi(moments: &[LayerMoments], model: &Mlp) -> Result<ConnectionScore> {
    phi_from_moments(moments, model, ScoreKind::PhiMean)
}

/// Saliency φ^(g) from group `g`'s moments.
pub fn saliency_phi_group(stats: &CalibrationStats, model: &Mlp, g: &GroupId) -> Result<ConnectionScore> {
    phi_from_moments(stats.group(g)?, model, ScoreKind::PhiGroup)
}

/// Elementwise `mean_g φ^(g) + λ_var · var_g φ^(g)`.
pub fn score_vr(group_scores: &BTreeMap<GroupId, ConnectionScore>, cfg: &VrConfig) -> Result<ConnectionScore> {
    cfg.validate()?;
    let mut it = group_scores.values();
    let Some(first) = it.next() else {
        return Err(Error::Input("variance-regularised score needs at least one group".into()));
    };
    for s in it {
        if s.layers.len() != first.layers.len()
            || s.layers.iter().zip(&first.layers).any(|(a, b)| a.dim() != b.dim())
        {
            return Err(Error::Shape("group scores are not shape-aligned".into()));
        }
    }
    let g = group_scores.len() as f64;
    let mut layers = Vec::with_capacity(first.layers.len());
    for l in 0..first.layers.len() {
        let mut mean = Array2::<f64>::zeros(first.layers[l].dim());
        for s in group_scores.values() {
            mean += &s.layers[l];
        }
        mean /= g;
        let mut var = Array2::<f64>::zeros(mean.dim());
        for s in group_scores.values() {
            Zip::from(&mut var)
                .and(&s.layers[l])
                .and(&mean)
                .for_each(|v, &x, &m| *v += (x - m) * (x - m));
        }
        var /= g;
        layers.push(mean + var * cfg.lambda_var);
    }
    Ok(ConnectionScore {
        kind: ScoreKind::VrScore,
        layers,
    })
}

/// All group saliencies and their variance-regularised combination.
pub fn vr_scores(stats: &CalibrationStats, model: &Mlp, cfg: &VrConfig) -> Result<ConnectionScore> {
    let groups = stats
        .groups()
        .map(|g| Ok((g.clone(), saliency_phi_group(stats, model, g)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    score_vr(&groups, cfg)
}

/// `|W|` scores used by the magnitude baselines.
pub fn magnitude_scores(model: &Mlp) -> ConnectionScore {
    ConnectionScore {
        kind: ScoreKind::AbsWeight,
        layers: (0..model.num_layers())
            .map(|l| model.weights(l).mapv(f64::abs))
            .collect(),
    }
}

fn check_fraction(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Input(format!("sparsity must lie in [0, 1), got {s}")));
    }
    Ok(())
}

/// `floor(s · n)`. The product is nudged by 1e-9 so that fractions such as
/// 0.29·100 that land a hair below an integer in binary still count it.
pub fn pruned_count(s: f64, n: usize) -> usize {
    ((s * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Masks the `count` lowest-scoring candidates. Candidates arrive in
/// (layer, row, col) order; the stable sort keeps that order among ties.
fn mask_lowest(masks: &mut [Array2<bool>], mut candidates: Vec<(f64, usize, usize, usize)>, count: usize) {
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(_, l, r, c) in candidates.iter().take(count) {
        masks[l][[r, c]] = false;
    }
}

/// Prunes `floor(s · N_active)` more connections across all layers, lowest
/// score first. Already-masked connections are not candidates.
pub fn prune_global_by_score(model: &Mlp, scores: &ConnectionScore, s: f64) -> Result<PruneMask> {
    check_fraction(s)?;
    scores.check_aligned(model)?;
    let mut masks = model.masks().to_vec();
    let mut candidates = Vec::with_capacity(model.active_weight_count());
    for (l, (mask, sc)) in masks.iter().zip(&scores.layers).enumerate() {
        for ((r, c), &keep) in mask.indexed_iter() {
            if keep {
                candidates.push((sc[[r, c]], l, r, c));
            }
        }
    }
    let count = pruned_count(s, candidates.len());
    mask_lowest(&mut masks, candidates, count);
    Ok(PruneMask::new(masks))
}

/// Magnitude pruning with an independent target per layer.
pub fn prune_layerwise(model: &Mlp, per_layer: &[f64]) -> Result<PruneMask> {
    if per_layer.len() != model.num_layers() {
        return Err(Error::Input(format!(
            "{} layer sparsities for a {}-layer model",
            per_layer.len(),
            model.num_layers()
        )));
    }
    per_layer.iter().try_for_each(|&s| check_fraction(s))?;
    let mut masks = model.masks().to_vec();
    for (l, &s) in per_layer.iter().enumerate() {
        let w = model.weights(l);
        let candidates: Vec<_> = masks[l]
            .indexed_iter()
            .filter(|(_, &keep)| keep)
            .map(|((r, c), _)| (w[[r, c]].abs(), l, r, c))
            .collect();
        let count = pruned_count(s, candidates.len());
        mask_lowest(&mut masks, candidates, count);
    }
    Ok(PruneMask::new(masks))
}

/// Indices of the `k` hidden units with the largest incoming L2 norm, in
/// ascending index order. Ties go to the lower index.
fn top_neurons(weights: &Array2<f64>, k: usize) -> Vec<usize> {
    let norms: Vec<f64> = weights
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_unstable();
    kept
}

fn check_budget(model: &Mlp, budget: &[usize]) -> Result<()> {
    let hidden = model.num_layers() - 1;
    if budget.len() != hidden {
        return Err(Error::Input(format!(
            "{} neuron budgets for {hidden} hidden layers",
            budget.len()
        )));
    }
    for (l, &k) in budget.iter().enumerate() {
        let width = model.specs()[l].output_dim;
        if k == 0 || k > width {
            return Err(Error::Input(format!(
                "layer {l}: budget {k} outside 1..={width}"
            )));
        }
    }
    Ok(())
}

/// Retained hidden units per layer under a neuron budget.
pub fn retained_neurons(model: &Mlp, budget: &[usize]) -> Result<Vec<Vec<usize>>> {
    check_budget(model, budget)?;
    Ok(budget
        .iter()
        .enumerate()
        .map(|(l, &k)| top_neurons(model.weights(l), k))
        .collect())
}

/// Rebuilds a smaller network keeping the top-`K_l` units of every hidden
/// layer by incoming-weight norm. The output layer is never reduced.
pub fn prune_neurons_incoming_norm(model: &Mlp, budget: &[usize]) -> Result<Mlp> {
    let kept = retained_neurons(model, budget)?;
    let n = model.num_layers();
    let mut specs = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut biases = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    let mut cols: Vec<usize> = (0..model.input_dim()).collect();
    for l in 0..n {
        let rows: Vec<usize> = if l + 1 < n {
            kept[l].clone()
        } else {
            (0..model.specs()[l].output_dim).collect()
        };
        let w = model.weights(l).select(Axis(0), &rows).select(Axis(1), &cols);
        let m = model.mask(l).select(Axis(0), &rows).select(Axis(1), &cols);
        let b: Array1<f64> = rows.iter().map(|&r| model.biases(l)[r]).collect();
        let mut spec = model.specs()[l];
        spec.input_dim = cols.len();
        spec.output_dim = rows.len();
        specs.push(spec);
        weights.push(w);
        biases.push(b);
        masks.push(m);
        cols = rows;
    }
    Mlp::from_parts(specs, weights, biases, masks)
}

/// Mask on the original architecture that silences the units dropped by a
/// neuron budget (their incoming rows and outgoing columns).
pub fn neuron_budget_mask(model: &Mlp, budget: &[usize]) -> Result<PruneMask> {
    let kept = retained_neurons(model, budget)?;
    let mut masks = model.masks().to_vec();
    for (l, keep) in kept.iter().enumerate() {
        let width = model.specs()[l].output_dim;
        let mut alive = vec![false; width];
        keep.iter().for_each(|&u| alive[u] = true);
        for (u, _) in alive.iter().enumerate().filter(|(_, a)| !**a) {
            masks[l].row_mut(u).fill(false);
            masks[l + 1].column_mut(u).fill(false);
        }
    }
    Ok(PruneMask::new(masks))
}

/// `K_l = round((1 − s) · width_l)`, at least one unit per layer.
pub fn default_neuron_budget(model: &Mlp, s: f64) -> Result<Vec<usize>> {
    check_fraction(s)?;
    Ok(model.specs()[..model.num_layers() - 1]
        .iter()
        .map(|spec| {
            (((1.0 - s) * spec.output_dim as f64).round() as usize).clamp(1, spec.output_dim)
        })
        .collect())
}

/// Pruning methods compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Variance-regularised connection pruning.
    #[serde(rename = "CP-VR")]
    CpVr,
    /// Global magnitude threshold.
    #[serde(rename = "CP-G")]
    CpG,
    /// Per-layer magnitude thresholds.
    #[serde(rename = "CP-L")]
    CpL,
    /// Neuron pruning by incoming-weight norm.
    #[serde(rename = "NP-IN")]
    NpIn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CpVr, Method::CpG, Method::CpL, Method::NpIn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CpVr => "CP-VR",
            Method::CpG => "CP-G",
            Method::CpL => "CP-L",
            Method::NpIn => "NP-IN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('_', "-").as_str() {
            "CP-VR" => Ok(Method::CpVr),
            "CP-G" => Ok(Method::CpG),
            "CP-L" => Ok(Method::CpL),
            "NP-IN" => Ok(Method::NpIn),
            _ => Err(Error::Config(format!(
                "unknown pruning method {s:?} (expected CP-VR, CP-G, CP-L or NP-IN)"
            ))),
        }
    }
}

/// A pruned network plus the fraction of the original weight entries it no
/// longer carries.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub model: Mlp,
    pub achieved_sparsity: f64,
}

/// Applies `method` at nominal sparsity `s`. `vr` must be present for CP-VR.
pub fn prune_with(
    model: &Mlp,
    method: Method,
    s: f64,
    vr: Option<&ConnectionScore>,
) -> Result<PruneOutcome> {
    match method {
        Method::CpVr => {
            let scores = vr.ok_or_else(|| Error::Input("CP-VR needs calibration scores".into()))?;
            let mask = prune_global_by_score(model, scores, s)?;
            Ok(PruneOutcome {
                model: mask.apply(model)?,
                achieved_sparsity: mask.achieved_sparsity,
            })
        }
        Method::CpG => {
            let mask = prune_global_by_score(model, &magnitude_scores(model), s)?;
            Ok(PruneOutcome {
                model: mask.apply(model)?,
                achieved_sparsity: mask.achieved_sparsity,
            })
        }
        Method::CpL => {
            let mask = prune_layerwise(model, &vec![s; model.num_layers()])?;
            Ok(PruneOutcome {
                model: mask.apply(model)?,
                achieved_sparsity: mask.achieved_sparsity,
            })
        }
        Method::NpIn => {
            let budget = default_neuron_budget(model, s)?;
            let reduced = prune_neurons_incoming_norm(model, &budget)?;
            let achieved = 1.0 - reduced.active_weight_count() as f64 / model.weight_count() as f64;
            Ok(PruneOutcome {
                model: reduced,
                achieved_sparsity: achieved,
            })
        }
    }
}
