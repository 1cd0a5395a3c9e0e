//! Multi-environment regression surrogate.
//!
//! Each participant shares the stable coefficients but draws its own
//! coefficients for the spurious features, so a predictor that leans on the
//! spurious block fits some participants and misfits others.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SessionTrace;
use crate::kv::KvConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_participants: usize,
    pub samples_per_participant: usize,
    pub n_stable_features: usize,
    pub n_spurious_features: usize,
    pub noise_std: f64,
    pub spurious_coeff_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_participants: 20,
            samples_per_participant: 300,
            n_stable_features: 10,
            n_spurious_features: 30,
            noise_std: 0.5,
            spurious_coeff_std: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub const KEYS: [&'static str; 7] = [
        "n_participants",
        "samples_per_participant",
        "n_stable_features",
        "n_spurious_features",
        "noise_std",
        "spurious_coeff_std",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.n_participants == 0
            || self.samples_per_participant == 0
            || self.n_stable_features == 0
            || self.n_spurious_features == 0
        {
            return Err(Error::Config("synthetic counts must be at least 1".into()));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("spurious_coeff_std", self.spurious_coeff_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Reads fields from `kv` under `prefix` (e.g. `"synthetic."`).
    pub fn from_kv(kv: &KvConfig, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let key = |k: &str| format!("{prefix}{k}");
        let cfg = Self {
            n_participants: kv.get_or(&key("n_participants"), d.n_participants)?,
            samples_per_participant: kv
                .get_or(&key("samples_per_participant"), d.samples_per_participant)?,
            n_stable_features: kv.get_or(&key("n_stable_features"), d.n_stable_features)?,
            n_spurious_features: kv.get_or(&key("n_spurious_features"), d.n_spurious_features)?,
            noise_std: kv.get_or(&key("noise_std"), d.noise_std)?,
            spurious_coeff_std: kv.get_or(&key("spurious_coeff_std"), d.spurious_coeff_std)?,
            seed: kv.get_or(&key("seed"), d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Generated sessions together with the coefficients that produced them.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub sessions: Vec<SessionTrace>,
    pub stable_coefficients: Vec<f64>,
    /// One row per participant.
    pub spurious_coefficients: Vec<Vec<f64>>,
    /// Raw targets were mapped by `(y − offset) / scale` into `[0, 1]`.
    pub target_offset: f64,
    pub target_scale: f64,
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<SessionTrace>> {
    Ok(generate_synthetic_with_truth(cfg)?.sessions)
}

pub fn generate_synthetic_with_truth(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ns, nu, t) = (
        cfg.n_stable_features,
        cfg.n_spurious_features,
        cfg.samples_per_participant,
    );
    let d = ns + nu;
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
    let coeff = Normal::new(0.0, cfg.spurious_coeff_std).expect("validated std");

    let stable: Vec<f64> = (0..ns).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut spurious = Vec::with_capacity(cfg.n_participants);
    let mut raw = Vec::with_capacity(cfg.n_participants);
    for _ in 0..cfg.n_participants {
        let beta_u: Vec<f64> = (0..nu).map(|_| coeff.sample(&mut rng)).collect();
        let x = Array2::from_shape_simple_fn((t, d), || StandardNormal.sample(&mut rng));
        let y: Array1<f64> = x
            .rows()
            .into_iter()
            .map(|row| {
                let s: f64 = stable.iter().zip(row.iter()).map(|(b, v)| b * v).sum();
                let u: f64 = beta_u.iter().zip(row.iter().skip(ns)).map(|(b, v)| b * v).sum();
                s + u + noise.sample(&mut rng)
            })
            .collect();
        spurious.push(beta_u);
        raw.push((x, y));
    }

    let lo = raw
        .iter()
        .flat_map(|(_, y)| y.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = raw
        .iter()
        .flat_map(|(_, y)| y.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { hi - lo } else { 1.0 };

    let names: Vec<String> = (0..ns)
        .map(|i| format!("stable_{i}"))
        .chain((0..nu).map(|i| format!("spurious_{i}")))
        .collect();
    let width = cfg.n_participants.to_string().len().max(3);
    let sessions = raw
        .into_iter()
        .enumerate()
        .map(|(p, (x, y))| SessionTrace {
            participant_id: format!("P{p:0width$}"),
            game_id: "synthetic".into(),
            timestamps: (0..t).map(|i| i as f64).collect(),
            features: x,
            feature_names: names.clone(),
            arousal: y.iter().map(|v| ((v - lo) / scale).clamp(0.0, 1.0)).collect(),
        })
        .collect();
    Ok(SyntheticData {
        sessions,
        stable_coefficients: stable,
        spurious_coefficients: spurious,
        target_offset: lo,
        target_scale: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts() {
        let cfg = SyntheticConfig {
            n_participants: 5,
            samples_per_participant: 200,
            ..SyntheticConfig::default()
        };
        let s = generate_synthetic(&cfg).unwrap();
        assert_eq!(s.iter().map(|t| t.len()).sum::<usize>(), 1000);
        let ids: BTreeSet<&str> = s.iter().map(|t| t.participant_id.as_str()).collect();
        assert_eq!(ids.len(), 5);
        for t in &s {
            t.validate().unwrap();
            assert!(t.arousal.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            n_participants: 3,
            samples_per_participant: 10,
            ..SyntheticConfig::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
    }

    #[test]
    fn zero_spread_shares_one_law() {
        let cfg = SyntheticConfig {
            n_participants: 4,
            samples_per_participant: 5,
            spurious_coeff_std: 0.0,
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic_with_truth(&cfg).unwrap();
        assert!(d.spurious_coefficients.iter().flatten().all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_zero_counts() {
        let cfg = SyntheticConfig {
            n_stable_features: 0,
            ..SyntheticConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
