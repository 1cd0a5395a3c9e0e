//! Session telemetry, windowed datasets and the preprocessing pipeline that
//! turns one into the other.

mod ingest;
mod preprocess;
mod split;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use ingest::{load_session_file, load_sessions, write_sessions};
pub use preprocess::{
    minmax_normalize, prepare_split, shift_and_average_labels, variance_filter, window_features,
    window_session, window_sessions, ColumnRanges, PreparedData, PreprocessConfig, WindowSpan,
    Windows,
};
pub use split::{partition_participants, split_by_participant, SplitRatios};
pub use synthetic::{generate_synthetic, generate_synthetic_with_truth, SyntheticConfig, SyntheticData};

/// Participant identifier; each participant is one environment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub String);

impl GroupId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GroupId {
    fn from(s: &str) -> Self {
        GroupId(s.to_string())
    }
}

impl From<String> for GroupId {
    fn from(s: String) -> Self {
        GroupId(s)
    }
}

/// One recorded session on a uniform 1 Hz grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub participant_id: String,
    pub game_id: String,
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    /// `time × raw_feature_dim`.
    pub features: Array2<f64>,
    pub feature_names: Vec<String>,
    /// Raw (unbounded) annotation aligned with `timestamps`.
    pub arousal: Vec<f64>,
}

impl SessionTrace {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.timestamps.len();
        if self.features.nrows() != t || self.arousal.len() != t {
            return Err(Error::Input(format!(
                "session {}: {} timestamps, {} feature rows, {} arousal values",
                self.participant_id,
                t,
                self.features.nrows(),
                self.arousal.len()
            )));
        }
        if self.features.ncols() != self.feature_names.len() {
            return Err(Error::Input(format!(
                "session {}: {} feature columns but {} names",
                self.participant_id,
                self.features.ncols(),
                self.feature_names.len()
            )));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "session {}: timestamps not strictly increasing at index {}",
                self.participant_id,
                i + 1
            )));
        }
        Ok(())
    }
}

/// Feature/target pairs with one group identifier per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// `samples × feature_dim`.
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub group_ids: Vec<GroupId>,
    pub feature_names: Vec<String>,
}

impl WindowedDataset {
    pub fn new(
        features: Array2<f64>,
        targets: Array1<f64>,
        group_ids: Vec<GroupId>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != targets.len() || targets.len() != group_ids.len() {
            return Err(Error::Shape(format!(
                "{} feature rows, {} targets, {} group ids",
                features.nrows(),
                targets.len(),
                group_ids.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} feature columns but {} names",
                features.ncols(),
                feature_names.len()
            )));
        }
        Ok(Self {
            features,
            targets,
            group_ids,
            feature_names,
        })
    }

    pub fn empty(feature_names: Vec<String>) -> Self {
        Self {
            features: Array2::zeros((0, feature_names.len())),
            targets: Array1::zeros(0),
            group_ids: Vec::new(),
            feature_names,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Distinct groups in sorted order.
    pub fn groups(&self) -> Vec<GroupId> {
        self.indices_by_group().into_keys().collect()
    }

    /// Sample indices of every group, in sample order, keyed in sorted order.
    pub fn indices_by_group(&self) -> BTreeMap<GroupId, Vec<usize>> {
        let mut map: BTreeMap<GroupId, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.group_ids.iter().enumerate() {
            map.entry(g.clone()).or_default().push(i);
        }
        map
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
            group_ids: rows.iter().map(|&i| self.group_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(1), cols),
            targets: self.targets.clone(),
            group_ids: self.group_ids.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
        }
    }

    /// Appends `other`'s rows. Feature names must agree.
    pub fn append(&mut self, other: &WindowedDataset) -> Result<()> {
        if self.feature_names != other.feature_names {
            return Err(Error::Pipeline(
                "cannot concatenate datasets with different feature columns".into(),
            ));
        }
        self.features
            .append(Axis(0), other.features.view())
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.targets
            .append(Axis(0), other.targets.view())
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.group_ids.extend(other.group_ids.iter().cloned());
        Ok(())
    }

    /// Writes `group_id,target,<features...>`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["group_id".to_string(), "target".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(self.feature_dim() + 2);
            rec.push(self.group_ids[i].0.clone());
            rec.push(self.targets[i].to_string());
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "group_id" || &header[1] != "target" {
            return Err(Error::Ingest {
                file: path.to_path_buf(),
                row: 1,
                msg: "expected header group_id,target,<features...>".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let dim = names.len();
        let mut flat = Vec::new();
        let mut targets = Vec::new();
        let mut groups = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let bad = |msg: String| Error::Ingest {
                file: path.to_path_buf(),
                row,
                msg,
            };
            if rec.len() != dim + 2 {
                return Err(bad(format!("expected {} fields, found {}", dim + 2, rec.len())));
            }
            groups.push(GroupId(rec[0].to_string()));
            for (j, cell) in rec.iter().enumerate().skip(1) {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("cannot parse {cell:?} as a number")))?;
                if !v.is_finite() {
                    return Err(bad(format!("non-finite value in column {}", j + 1)));
                }
                if j == 1 {
                    targets.push(v);
                } else {
                    flat.push(v);
                }
            }
        }
        let n = targets.len();
        let features = Array2::from_shape_vec((n, dim), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(features, Array1::from(targets), groups, names)
    }
}

/// Participant-disjoint train/validation/test partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSplit {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

impl EnvironmentSplit {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.write_csv(dir.join("train.csv"))?;
        self.val.write_csv(dir.join("val.csv"))?;
        self.test.write_csv(dir.join("test.csv"))?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self {
            train: WindowedDataset::read_csv(dir.join("train.csv"))?,
            val: WindowedDataset::read_csv(dir.join("val.csv"))?,
            test: WindowedDataset::read_csv(dir.join("test.csv"))?,
        })
    }
}
