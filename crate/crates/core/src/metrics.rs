//! Regression metrics and the variance-regularised risk.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{GroupId, WindowedDataset};
use crate::nn::Mlp;
use crate::{Error, Result};

fn check_lengths(pred: &[f64], target: &[f64], min: usize) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < min {
        return Err(Error::Input(format!(
            "need at least {min} samples, got {}",
            pred.len()
        )));
    }
    Ok(())
}

/// Shifted by the first element so that a constant vector has exactly its
/// own value as mean (and therefore exactly zero deviations).
fn mean(v: &[f64]) -> f64 {
    let v0 = v[0];
    v0 + v.iter().map(|x| x - v0).sum::<f64>() / v.len() as f64
}

/// Divide-by-N variance. Zero for an empty slice.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target, 1)?;
    let sq: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / pred.len() as f64)
}

/// Lin's concordance correlation coefficient with population moments:
///
/// `2·cov(p, t) / (var(p) + var(t) + (mean(p) − mean(t))²)`
///
/// Two constant, equal vectors score 1.
pub fn ccc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target, 2)?;
    let n = pred.len() as f64;
    let (mp, mt) = (mean(pred), mean(target));
    let mut vp = 0.0;
    let mut vt = 0.0;
    let mut cov = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let (dp, dt) = (p - mp, t - mt);
        vp += dp * dp;
        vt += dt * dt;
        cov += dp * dt;
    }
    let (vp, vt, cov) = (vp / n, vt / n, cov / n);
    let gap = mp - mt;
    let denom = vp + vt + gap * gap;
    if denom == 0.0 {
        return Ok(if vp == 0.0 && vt == 0.0 && gap == 0.0 { 1.0 } else { 0.0 });
    }
    Ok((2.0 * cov / denom).clamp(-1.0, 1.0))
}

fn by_group<'a>(groups: &'a [GroupId]) -> BTreeMap<&'a GroupId, Vec<usize>> {
    let mut map: BTreeMap<&GroupId, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        map.entry(g).or_default().push(i);
    }
    map
}

pub fn group_mse(pred: &[f64], target: &[f64], groups: &[GroupId]) -> Result<BTreeMap<GroupId, f64>> {
    check_lengths(pred, target, 1)?;
    if groups.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} group ids for {} samples",
            groups.len(),
            pred.len()
        )));
    }
    by_group(groups)
        .into_iter()
        .map(|(g, rows)| {
            let p: Vec<f64> = rows.iter().map(|&i| pred[i]).collect();
            let t: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
            Ok((g.clone(), mse(&p, &t)?))
        })
        .collect()
}

/// Per-group CCC for groups with at least two samples.
pub fn group_ccc(pred: &[f64], target: &[f64], groups: &[GroupId]) -> Result<BTreeMap<GroupId, f64>> {
    check_lengths(pred, target, 1)?;
    if groups.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} group ids for {} samples",
            groups.len(),
            pred.len()
        )));
    }
    let mut out = BTreeMap::new();
    for (g, rows) in by_group(groups) {
        if rows.len() < 2 {
            continue;
        }
        let p: Vec<f64> = rows.iter().map(|&i| pred[i]).collect();
        let t: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
        out.insert(g.clone(), ccc(&p, &t)?);
    }
    Ok(out)
}

/// `J = MSE + λ_var · Var_g(MSE_g)`, population variance taken over groups
/// with equal weight.
pub fn risk_j(group_mses: &BTreeMap<GroupId, f64>, global_mse: f64, lambda_var: f64) -> Result<f64> {
    if group_mses.is_empty() {
        return Err(Error::Input("risk needs at least one group".into()));
    }
    if !(lambda_var >= 0.0 && lambda_var.is_finite()) {
        return Err(Error::Config("lambda_var must be non-negative".into()));
    }
    let v: Vec<f64> = group_mses.values().copied().collect();
    Ok(global_mse + lambda_var * population_variance(&v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    /// Pooled over all samples.
    pub ccc: f64,
    /// Unweighted mean of `per_group_ccc`; NaN when no group has two samples.
    pub ccc_group_mean: f64,
    pub per_group_mse: BTreeMap<GroupId, f64>,
    pub per_group_ccc: BTreeMap<GroupId, f64>,
    pub per_group_count: BTreeMap<GroupId, usize>,
    pub mse_group_variance: f64,
    pub risk_j: f64,
    pub lambda_var: f64,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn evaluate_predictions(
    pred: &[f64],
    target: &[f64],
    groups: &[GroupId],
    lambda_var: f64,
) -> Result<EvalReport> {
    let mse_all = mse(pred, target)?;
    let ccc_all = ccc(pred, target)?;
    let per_group_mse = group_mse(pred, target, groups)?;
    let per_group_ccc = group_ccc(pred, target, groups)?;
    let per_group_count = by_group(groups)
        .into_iter()
        .map(|(g, rows)| (g.clone(), rows.len()))
        .collect();
    let vals: Vec<f64> = per_group_mse.values().copied().collect();
    let cccs: Vec<f64> = per_group_ccc.values().copied().collect();
    let ccc_group_mean = if cccs.is_empty() { f64::NAN } else { mean(&cccs) };
    let report = EvalReport {
        mse: mse_all,
        ccc: ccc_all,
        ccc_group_mean,
        mse_group_variance: population_variance(&vals),
        risk_j: risk_j(&per_group_mse, mse_all, lambda_var)?,
        per_group_mse,
        per_group_ccc,
        per_group_count,
        lambda_var,
        n_samples: pred.len(),
    };
    if !report.mse.is_finite() || !report.risk_j.is_finite() {
        return Err(Error::Numeric("evaluation produced a non-finite error".into()));
    }
    Ok(report)
}

pub fn evaluate(model: &Mlp, dataset: &WindowedDataset, lambda_var: f64) -> Result<EvalReport> {
    let pred = model.predict(dataset.features.view())?;
    evaluate_predictions(
        pred.as_slice().expect("contiguous predictions"),
        dataset.targets.as_slice().expect("contiguous targets"),
        &dataset.group_ids,
        lambda_var,
    )
}
