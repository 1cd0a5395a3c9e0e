//! Variance-regularised pruning for small regression MLPs.
//!
//! A dense network is trained, one calibration pass over held-out data
//! collects second moments of layer inputs and pre-activation gradients
//! (globally and per participant), and connections are ranked by a score
//! that adds the across-participant variance of their saliency to its mean.
//! Magnitude and neuron-norm baselines, a telemetry preprocessing pipeline
//! and a sweep harness sit around that core.
//!
//! ```no_run
//! use vrprune::experiment::{run_sweep, summarize, ExperimentConfig};
//!
//! let cfg = ExperimentConfig { seeds: vec![0, 1], ..ExperimentConfig::default() };
//! let results = run_sweep(&cfg)?;
//! let summary = summarize(&results)?;
//! # Ok::<(), vrprune::Error>(())
//! ```

pub mod calibration;
pub mod data;
mod error;
pub mod experiment;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod pruning;

pub use calibration::{calibrate, CalibrationStats, LayerMoments};
pub use data::{GroupId, SessionTrace, WindowedDataset};
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use nn::{Activation, LayerSpec, Mlp, TrainConfig};
pub use pruning::{ConnectionScore, Method, PruneMask, VrConfig};
