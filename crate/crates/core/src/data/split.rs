use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvironmentSplit, GroupId, WindowedDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config("split ratios must be positive".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must sum to 1".into()));
        }
        Ok(())
    }
}

/// Shuffles the sorted participant list with `seed` and cuts it by
/// cumulative ratio. Every partition receives at least one participant.
pub fn partition_participants(
    participants: &[GroupId],
    ratios: &SplitRatios,
    seed: u64,
) -> Result<[Vec<GroupId>; 3]> {
    ratios.validate()?;
    let mut ids: Vec<GroupId> = participants
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = ids.len();
    if n < 3 {
        return Err(Error::Input(format!(
            "participant split needs at least 3 participants, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let cut1 = ((ratios.train * n as f64).round() as usize).clamp(1, n - 2);
    let cut2 = (((ratios.train + ratios.val) * n as f64).round() as usize).clamp(cut1 + 1, n - 1);
    let test = ids.split_off(cut2);
    let val = ids.split_off(cut1);
    Ok([ids, val, test])
}

/// Routes every sample to the partition of its participant.
pub fn split_by_participant(
    dataset: &WindowedDataset,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<EnvironmentSplit> {
    let [train_ids, val_ids, _] = partition_participants(&dataset.groups(), ratios, seed)?;
    let train_set: BTreeSet<&GroupId> = train_ids.iter().collect();
    let val_set: BTreeSet<&GroupId> = val_ids.iter().collect();
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for (i, g) in dataset.group_ids.iter().enumerate() {
        if train_set.contains(g) {
            tr.push(i);
        } else if val_set.contains(g) {
            va.push(i);
        } else {
            te.push(i);
        }
    }
    Ok(EnvironmentSplit {
        train: dataset.subset(&tr),
        val: dataset.subset(&va),
        test: dataset.subset(&te),
    })
}
