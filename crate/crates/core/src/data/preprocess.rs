//! Windowing, label alignment, normalisation and variance filtering.
//!
//! Traces live on a 1 Hz grid, so every duration in [`PreprocessConfig`]
//! must be a whole number of seconds.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::split::{split_by_participant, SplitRatios};
use super::{EnvironmentSplit, GroupId, SessionTrace, WindowedDataset};
use crate::kv::KvConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub window_seconds: f64,
    pub overlap_seconds: f64,
    pub label_shift_seconds: f64,
    pub variance_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3.0,
            overlap_seconds: 1.0,
            label_shift_seconds: 1.0,
            variance_threshold: 0.01,
        }
    }
}

fn whole_seconds(name: &str, v: f64) -> Result<usize> {
    if !v.is_finite() || v < 0.0 || (v - v.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{name} must be a non-negative whole number of seconds, got {v}"
        )));
    }
    Ok(v.round() as usize)
}

impl PreprocessConfig {
    pub const KEYS: [&'static str; 4] = [
        "window_seconds",
        "overlap_seconds",
        "label_shift_seconds",
        "variance_threshold",
    ];

    pub fn validate(&self) -> Result<()> {
        let w = whole_seconds("window_seconds", self.window_seconds)?;
        let o = whole_seconds("overlap_seconds", self.overlap_seconds)?;
        whole_seconds("label_shift_seconds", self.label_shift_seconds)?;
        if w == 0 {
            return Err(Error::Config("window_seconds must be at least 1".into()));
        }
        if o >= w {
            return Err(Error::Config("overlap_seconds must be below window_seconds".into()));
        }
        if !(self.variance_threshold >= 0.0 && self.variance_threshold.is_finite()) {
            return Err(Error::Config("variance_threshold must be non-negative".into()));
        }
        Ok(())
    }

    /// Settings for data without temporal structure: each one-second sample
    /// is its own window and labels are not shifted.
    pub fn pointwise() -> Self {
        Self {
            window_seconds: 1.0,
            overlap_seconds: 0.0,
            label_shift_seconds: 0.0,
            ..Self::default()
        }
    }

    /// Reads the four fields from `kv`, falling back to defaults. Other keys
    /// are ignored.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        Self::from_kv_or(kv, Self::default())
    }

    pub fn from_kv_or(kv: &KvConfig, d: Self) -> Result<Self> {
        let cfg = Self {
            window_seconds: kv.get_or("window_seconds", d.window_seconds)?,
            overlap_seconds: kv.get_or("overlap_seconds", d.overlap_seconds)?,
            label_shift_seconds: kv.get_or("label_shift_seconds", d.label_shift_seconds)?,
            variance_threshold: kv.get_or("variance_threshold", d.variance_threshold)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window_len(&self) -> usize {
        self.window_seconds.round() as usize
    }

    pub fn stride(&self) -> usize {
        (self.window_seconds - self.overlap_seconds).round() as usize
    }

    pub fn shift_len(&self) -> usize {
        self.label_shift_seconds.round() as usize
    }
}

/// Half-open time interval `[start, end)` of one window, with the grid
/// indices it covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpan {
    pub start_index: usize,
    pub len: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    /// `n_windows × (window_len · raw_dim)`, time-major concatenation.
    pub vectors: Array2<f64>,
    pub spans: Vec<WindowSpan>,
    pub feature_names: Vec<String>,
    /// Set when the trace was shorter than one window.
    pub too_short: bool,
}

pub fn window_features(trace: &SessionTrace, cfg: &PreprocessConfig) -> Result<Windows> {
    cfg.validate()?;
    trace.validate()?;
    let (w, stride) = (cfg.window_len(), cfg.stride());
    let t = trace.len();
    let d = trace.features.ncols();
    let feature_names = (0..w)
        .flat_map(|k| trace.feature_names.iter().map(move |n| format!("{n}@t{k}")))
        .collect();
    if t < w {
        log::warn!(
            "session {}/{} has {t} s of data, shorter than one {w} s window",
            trace.participant_id,
            trace.game_id
        );
        return Ok(Windows {
            vectors: Array2::zeros((0, w * d)),
            spans: Vec::new(),
            feature_names,
            too_short: true,
        });
    }
    let count = (t - w) / stride + 1;
    let mut vectors = Array2::zeros((count, w * d));
    let mut spans = Vec::with_capacity(count);
    for k in 0..count {
        let s = k * stride;
        let mut row = vectors.row_mut(k);
        for step in 0..w {
            row.slice_mut(ndarray::s![step * d..(step + 1) * d])
                .assign(&trace.features.row(s + step));
        }
        let start = trace.timestamps[s];
        spans.push(WindowSpan {
            start_index: s,
            len: w,
            start,
            end: start + w as f64,
        });
    }
    Ok(Windows {
        vectors,
        spans,
        feature_names,
        too_short: false,
    })
}

/// The annotation stream advanced by `shift` samples: `shifted[t] = arousal[t + shift]`.
fn shifted_labels<'a>(trace: &'a SessionTrace, cfg: &PreprocessConfig) -> &'a [f64] {
    let shift = cfg.shift_len().min(trace.arousal.len());
    &trace.arousal[shift..]
}

/// Mean of the shifted annotation inside each window. `None` marks a
/// window whose labels were all lost to the shift.
pub fn shift_and_average_labels(
    trace: &SessionTrace,
    windows: &[WindowSpan],
    cfg: &PreprocessConfig,
) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    let shifted = shifted_labels(trace, cfg);
    windows
        .iter()
        .map(|span| {
            if span.start_index + span.len > trace.len() {
                return Err(Error::Input(format!(
                    "window at index {} extends past a trace of length {}",
                    span.start_index,
                    trace.len()
                )));
            }
            let end = (span.start_index + span.len).min(shifted.len());
            if span.start_index >= end {
                return Ok(None);
            }
            let vals = &shifted[span.start_index..end];
            // Centred on the first value so a constant stream averages to
            // itself exactly.
            let v0 = vals[0];
            let dev: f64 = vals.iter().map(|v| v - v0).sum();
            Ok(Some(v0 + dev / vals.len() as f64))
        })
        .collect()
}

/// Windows one session and attaches per-window targets.
///
/// The shifted annotation stream is min-max normalised to `[0, 1]` over the
/// whole trace before averaging (applied as the equivalent affine map on the
/// window means). Windows without labels are dropped.
pub fn window_session(trace: &SessionTrace, cfg: &PreprocessConfig) -> Result<WindowedDataset> {
    let windows = window_features(trace, cfg)?;
    let labels = shift_and_average_labels(trace, &windows.spans, cfg)?;
    let shifted = shifted_labels(trace, cfg);
    let lo = shifted.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|_| i))
        .collect();
    let targets: Array1<f64> = keep
        .iter()
        .map(|&i| {
            let v = labels[i].expect("kept windows have labels");
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let group = GroupId(trace.participant_id.clone());
    WindowedDataset::new(
        windows.vectors.select(Axis(0), &keep),
        targets,
        vec![group; keep.len()],
        windows.feature_names,
    )
}

pub fn window_sessions(sessions: &[SessionTrace], cfg: &PreprocessConfig) -> Result<WindowedDataset> {
    let Some(first) = sessions.first() else {
        return Err(Error::Pipeline("no sessions to preprocess".into()));
    };
    let mut all = window_session(first, cfg)?;
    for s in &sessions[1..] {
        let next = window_session(s, cfg)?;
        all.append(&next).map_err(|_| {
            Error::Pipeline(format!(
                "session {}/{} has a different feature schema",
                s.participant_id, s.game_id
            ))
        })?;
    }
    Ok(all)
}

/// Per-column minimum and maximum fitted on one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ColumnRanges {
    pub fn fit(dataset: &WindowedDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Pipeline("cannot fit normalisation on an empty dataset".into()));
        }
        let min = dataset
            .features
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let max = dataset
            .features
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self { min, max })
    }

    /// `(x − min) / (max − min)` clipped to `[0, 1]`; constant columns map to 0.
    pub fn apply(&self, dataset: &WindowedDataset) -> Result<WindowedDataset> {
        if dataset.feature_dim() != self.min.len() {
            return Err(Error::Shape(format!(
                "dataset has {} columns, ranges cover {}",
                dataset.feature_dim(),
                self.min.len()
            )));
        }
        let mut out = dataset.clone();
        for (j, mut col) in out.features.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let range = hi - lo;
            col.mapv_inplace(|x| {
                if range > 0.0 {
                    ((x - lo) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            });
        }
        Ok(out)
    }
}

/// Fits column ranges on `dataset` and applies them to it.
pub fn minmax_normalize(dataset: &WindowedDataset) -> Result<(WindowedDataset, ColumnRanges)> {
    let ranges = ColumnRanges::fit(dataset)?;
    Ok((ranges.apply(dataset)?, ranges))
}

/// Indices of columns whose population variance is at least `threshold`,
/// in their original order.
pub fn variance_filter(dataset: &WindowedDataset, threshold: f64) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::Pipeline("cannot filter an empty dataset".into()));
    }
    let n = dataset.len() as f64;
    let kept: Vec<usize> = dataset
        .features
        .axis_iter(Axis(1))
        .enumerate()
        .filter(|(_, col)| {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            var >= threshold
        })
        .map(|(j, _)| j)
        .collect();
    if kept.is_empty() {
        return Err(Error::Pipeline(format!(
            "variance filter at threshold {threshold} removed every feature"
        )));
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub split: EnvironmentSplit,
    /// Ranges fitted on the training partition, before column filtering.
    pub ranges: ColumnRanges,
    pub kept_columns: Vec<usize>,
}

/// Full pipeline: window every session, split by participant, normalise
/// with training-partition ranges, then drop low-variance columns measured
/// on the normalised training partition.
pub fn prepare_split(
    sessions: &[SessionTrace],
    cfg: &PreprocessConfig,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<PreparedData> {
    cfg.validate()?;
    let windowed = window_sessions(sessions, cfg)?;
    let split = split_by_participant(&windowed, ratios, seed)?;
    for (name, part) in [("training", &split.train), ("validation", &split.val), ("test", &split.test)] {
        if part.is_empty() {
            return Err(Error::Pipeline(format!("{name} partition has no windows")));
        }
    }
    let ranges = ColumnRanges::fit(&split.train)?;
    let train = ranges.apply(&split.train)?;
    let kept_columns = variance_filter(&train, cfg.variance_threshold)?;
    let split = EnvironmentSplit {
        train: train.select_columns(&kept_columns),
        val: ranges.apply(&split.val)?.select_columns(&kept_columns),
        test: ranges.apply(&split.test)?.select_columns(&kept_columns),
    };
    Ok(PreparedData {
        split,
        ranges,
        kept_columns,
    })
}
