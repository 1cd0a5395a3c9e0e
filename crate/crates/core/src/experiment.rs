//! Sparsity sweeps: for every seed, train a dense model, calibrate it on
//! the validation partition, prune it with each method over a grid of
//! sparsities and evaluate on the test partition.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationStats};
use crate::data::{
    generate_synthetic, load_sessions, prepare_split, PreparedData, PreprocessConfig, SessionTrace,
    SplitRatios, SyntheticConfig,
};
use crate::kv::KvConfig;
use crate::metrics::{evaluate, population_variance};
use crate::nn::{five_layer, hidden_stack, train, two_layer, LayerSpec, Mlp, TrainConfig};
use crate::pruning::{prune_with, vr_scores, Method, VrConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    /// Directory (or single file) of session CSVs.
    Directory(PathBuf),
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<SessionTrace>> {
        match self {
            DataSource::Synthetic(cfg) => generate_synthetic(cfg),
            DataSource::Directory(path) => load_sessions(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    /// One hidden layer of 256 units.
    TwoLayer,
    /// Hidden layers of 768, 512, 384 and 192 units.
    FiveLayer,
    Custom(Vec<usize>),
}

impl Architecture {
    pub fn specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        match self {
            Architecture::TwoLayer => two_layer(input_dim),
            Architecture::FiveLayer => five_layer(input_dim),
            Architecture::Custom(hidden) => hidden_stack(input_dim, hidden),
        }
    }

    /// Short name used in output file names.
    pub fn label(&self) -> String {
        match self {
            Architecture::TwoLayer => "two_layer".into(),
            Architecture::FiveLayer => "five_layer".into(),
            Architecture::Custom(h) => {
                let parts: Vec<String> = h.iter().map(usize::to_string).collect();
                format!("custom_{}", parts.join("-"))
            }
        }
    }
}

/// Everything a sweep needs, usually read from a flat `key = value` file.
///
/// Recognised keys:
///
/// | key | default |
/// |---|---|
/// | `data_dir` | unset: synthetic data from `synthetic.*` |
/// | `synthetic.<field>` | [`SyntheticConfig`] defaults |
/// | `architecture` | `two_layer` (`five_layer`, `custom`) |
/// | `hidden_layers` | required for `custom`, e.g. `64,32` |
/// | `epochs`, `batch_size`, `learning_rate`, `beta1`, `beta2`, `epsilon` | [`TrainConfig`] defaults |
/// | `methods` | `CP-VR,CP-G,CP-L,NP-IN` |
/// | `sparsities` | `0,0.1,...,0.8` |
/// | `seeds` | `0..15` (half-open range or a list) |
/// | `lambda_var` | `1` |
/// | `split` | `0.6,0.2,0.2` |
/// | `record_wall_time` | `false` |
/// | `window_seconds`, `overlap_seconds`, `label_shift_seconds`, `variance_threshold` | `3,1,1,0.01` for CSV data, `1,0,0,0.01` for synthetic data |
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub methods: Vec<Method>,
    pub sparsities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub lambda_var: f64,
    pub split: SplitRatios,
    /// When false the `wall_time_s` column is written as 0 so repeated runs
    /// produce identical files.
    pub record_wall_time: bool,
}

const TOP_KEYS: [&str; 16] = [
    "data_dir",
    "architecture",
    "hidden_layers",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "methods",
    "sparsities",
    "seeds",
    "lambda_var",
    "split",
    "record_wall_time",
    // accepted so one file can drive every subcommand
    "seed",
];

pub fn default_sparsities() -> Vec<f64> {
    (0..=8).map(|i| i as f64 / 10.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticConfig::default()),
            architecture: Architecture::TwoLayer,
            train: TrainConfig::default(),
            preprocess: PreprocessConfig::pointwise(),
            methods: Method::ALL.to_vec(),
            sparsities: default_sparsities(),
            seeds: (0..15).collect(),
            lambda_var: 1.0,
            split: SplitRatios::default(),
            record_wall_time: false,
        }
    }
}

/// `a..b` (half-open) or a comma-separated list.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad()))
        .collect()
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.reject_unknown(|k| {
            TOP_KEYS.contains(&k)
                || PreprocessConfig::KEYS.contains(&k)
                || k.strip_prefix("synthetic.")
                    .is_some_and(|f| SyntheticConfig::KEYS.contains(&f))
        })?;
        let d = Self::default();

        let data = match kv.get_str("data_dir") {
            Some(dir) => DataSource::Directory(PathBuf::from(dir)),
            None => DataSource::Synthetic(SyntheticConfig::from_kv(kv, "synthetic.")?),
        };
        let preprocess_defaults = match data {
            DataSource::Synthetic(_) => PreprocessConfig::pointwise(),
            DataSource::Directory(_) => PreprocessConfig::default(),
        };
        let architecture = match kv.get_str("architecture").unwrap_or("two_layer") {
            "two_layer" => Architecture::TwoLayer,
            "five_layer" => Architecture::FiveLayer,
            "custom" => Architecture::Custom(kv.get_list("hidden_layers")?.ok_or_else(|| {
                Error::Config("architecture = custom needs hidden_layers".into())
            })?),
            other => {
                return Err(Error::Config(format!(
                    "unknown architecture {other:?} (expected two_layer, five_layer or custom)"
                )))
            }
        };
        let t = d.train;
        let train = TrainConfig {
            epochs: kv.get_or("epochs", t.epochs)?,
            batch_size: kv.get_or("batch_size", t.batch_size)?,
            learning_rate: kv.get_or("learning_rate", t.learning_rate)?,
            beta1: kv.get_or("beta1", t.beta1)?,
            beta2: kv.get_or("beta2", t.beta2)?,
            epsilon: kv.get_or("epsilon", t.epsilon)?,
            seed: 0,
        };
        let split = match kv.get_list::<f64>("split")? {
            None => d.split,
            Some(v) if v.len() == 3 => SplitRatios {
                train: v[0],
                val: v[1],
                test: v[2],
            },
            Some(v) => {
                return Err(Error::Config(format!(
                    "split needs three ratios, got {}",
                    v.len()
                )))
            }
        };
        let seeds = match kv.get_str("seeds") {
            Some(s) => parse_seeds(s)?,
            None => d.seeds,
        };
        let cfg = Self {
            data,
            architecture,
            train,
            preprocess: PreprocessConfig::from_kv_or(kv, preprocess_defaults)?,
            methods: kv.get_list("methods")?.unwrap_or(d.methods),
            sparsities: kv.get_list("sparsities")?.unwrap_or(d.sparsities),
            seeds,
            lambda_var: kv.get_or("lambda_var", d.lambda_var)?,
            split,
            record_wall_time: kv.get_or("record_wall_time", d.record_wall_time)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvConfig::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.preprocess.validate()?;
        self.split.validate()?;
        VrConfig {
            lambda_var: self.lambda_var,
        }
        .validate()?;
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        if let Architecture::Custom(h) = &self.architecture {
            if h.iter().any(|&w| w == 0) {
                return Err(Error::Config("hidden layer widths must be positive".into()));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.sparsities.is_empty() {
            return Err(Error::Config("sparsities must not be empty".into()));
        }
        if let Some(s) = self.sparsities.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::Config(format!("sparsity {s} outside [0, 1)")));
        }
        Ok(())
    }

    pub fn vr(&self) -> VrConfig {
        VrConfig {
            lambda_var: self.lambda_var,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train }
    }
}

/// One (method, sparsity, seed) evaluation on the test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub sparsity: f64,
    pub seed: u64,
    pub ccc_pooled: f64,
    pub ccc_group_mean: f64,
    pub mse: f64,
    pub mse_group_var: f64,
    pub risk_j: f64,
    pub achieved_sparsity: f64,
    pub wall_time_s: f64,
}

pub const RESULTS_HEADER: &str =
    "method,sparsity,seed,ccc_pooled,ccc_group_mean,mse,mse_group_var,risk_j,achieved_sparsity,wall_time_s";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

impl SweepResult {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.rows, path.as_ref())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            rows: read_rows(path.as_ref())?,
        })
    }
}

/// Data, dense model and calibration statistics shared by every grid point
/// of one seed.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: u64,
    pub prepared: PreparedData,
    pub model: Mlp,
    pub loss_history: Vec<f64>,
    pub stats: CalibrationStats,
}

/// Splits, trains and calibrates for one seed.
pub fn prepare_seed(cfg: &ExperimentConfig, sessions: &[SessionTrace], seed: u64) -> Result<SeedContext> {
    let prepared = prepare_split(sessions, &cfg.preprocess, &cfg.split, seed)?;
    let specs = cfg.architecture.specs(prepared.split.train.feature_dim());
    let model = Mlp::init(&specs, seed)?;
    let outcome = train(model, &prepared.split.train, &cfg.train_config(seed))?;
    let stats = calibrate(&outcome.model, &prepared.split.val)?;
    log::info!(
        "seed {seed}: trained on {} windows, final loss {:.6}",
        prepared.split.train.len(),
        outcome.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(SeedContext {
        seed,
        prepared,
        model: outcome.model,
        loss_history: outcome.loss_history,
        stats,
    })
}

fn sorted_grid(cfg: &ExperimentConfig) -> (Vec<Method>, Vec<f64>) {
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut sparsities = cfg.sparsities.clone();
    sparsities.sort_by(f64::total_cmp);
    sparsities.dedup();
    (methods, sparsities)
}

/// Rows for one seed, ordered by (method, sparsity).
pub fn run_seed(cfg: &ExperimentConfig, sessions: &[SessionTrace], seed: u64) -> Result<Vec<SweepRow>> {
    let ctx = prepare_seed(cfg, sessions, seed)?;
    let (methods, sparsities) = sorted_grid(cfg);
    let vr = if methods.contains(&Method::CpVr) {
        Some(vr_scores(&ctx.stats, &ctx.model, &cfg.vr())?)
    } else {
        None
    };
    let test = &ctx.prepared.split.test;
    let mut rows = Vec::with_capacity(methods.len() * sparsities.len());
    for &method in &methods {
        for &s in &sparsities {
            let start = Instant::now();
            // The dense row is the shared baseline for every method.
            let (model, achieved) = if s == 0.0 {
                (ctx.model.clone(), 0.0)
            } else {
                let out = prune_with(&ctx.model, method, s, vr.as_ref())?;
                (out.model, out.achieved_sparsity)
            };
            let report = evaluate(&model, test, cfg.lambda_var)?;
            let wall = if cfg.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            rows.push(SweepRow {
                method,
                sparsity: s,
                seed,
                ccc_pooled: report.ccc,
                ccc_group_mean: report.ccc_group_mean,
                mse: report.mse,
                mse_group_var: report.mse_group_variance,
                risk_j: report.risk_j,
                achieved_sparsity: achieved,
                wall_time_s: wall,
            });
        }
    }
    Ok(rows)
}

/// Full grid. Seeds run in parallel; rows come back ordered by
/// (seed, method, sparsity) whatever the scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let sessions = cfg.data.load()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed = seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &sessions, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        rows: per_seed.into_iter().flatten().collect(),
    })
}

/// Mean and population standard deviation across seeds for one
/// (method, sparsity) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub sparsity: f64,
    pub n_seeds: usize,
    pub ccc_pooled_mean: f64,
    pub ccc_pooled_std: f64,
    pub ccc_group_mean_mean: f64,
    pub ccc_group_mean_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mse_group_var_mean: f64,
    pub mse_group_var_std: f64,
    pub risk_j_mean: f64,
    pub risk_j_std: f64,
    pub achieved_sparsity_mean: f64,
    pub achieved_sparsity_std: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.rows, path.as_ref())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            rows: read_rows(path.as_ref())?,
        })
    }

    pub fn get(&self, method: Method, sparsity: f64) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.sparsity == sparsity)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, population_variance(values).sqrt())
}

/// Aggregates across seeds, ordered by (method, sparsity).
pub fn summarize(results: &SweepResult) -> Result<Summary> {
    if results.rows.is_empty() {
        return Err(Error::Input("cannot summarise an empty result set".into()));
    }
    let mut cells: BTreeMap<(Method, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in &results.rows {
        // sparsities are finite and non-negative, so bit order is numeric order
        cells.entry((r.method, r.sparsity.to_bits())).or_default().push(r);
    }
    let rows = cells
        .into_iter()
        .map(|((method, bits), rs)| {
            let col = |f: fn(&SweepRow) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (ccc_pooled_mean, ccc_pooled_std) = col(|r| r.ccc_pooled);
            let (ccc_group_mean_mean, ccc_group_mean_std) = col(|r| r.ccc_group_mean);
            let (mse_mean, mse_std) = col(|r| r.mse);
            let (mse_group_var_mean, mse_group_var_std) = col(|r| r.mse_group_var);
            let (risk_j_mean, risk_j_std) = col(|r| r.risk_j);
            let (achieved_sparsity_mean, achieved_sparsity_std) = col(|r| r.achieved_sparsity);
            SummaryRow {
                method,
                sparsity: f64::from_bits(bits),
                n_seeds: rs.len(),
                ccc_pooled_mean,
                ccc_pooled_std,
                ccc_group_mean_mean,
                ccc_group_mean_std,
                mse_mean,
                mse_std,
                mse_group_var_mean,
                mse_group_var_std,
                risk_j_mean,
                risk_j_std,
                achieved_sparsity_mean,
                achieved_sparsity_std,
            }
        })
        .collect();
    Ok(Summary { rows })
}

/// Writes one headerless `sparsity,mean_ccc,std_ccc` series per method to
/// `<dir>/<arch>_<method>.csv` and returns the paths.
pub fn emit_plot_data(summary: &Summary, arch_label: &str, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if summary.rows.is_empty() {
        return Err(Error::Input("no summary rows to plot".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut series: BTreeMap<Method, Vec<&SummaryRow>> = BTreeMap::new();
    for r in &summary.rows {
        series.entry(r.method).or_default().push(r);
    }
    let mut paths = Vec::new();
    for (method, mut rows) in series {
        rows.sort_by(|a, b| a.sparsity.total_cmp(&b.sparsity));
        if rows.windows(2).any(|w| w[0].sparsity >= w[1].sparsity) {
            return Err(Error::Input(format!("{method}: repeated sparsity in summary")));
        }
        let path = dir.join(format!("{arch_label}_{method}.csv"));
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        for r in rows {
            w.serialize((r.sparsity, r.ccc_pooled_mean, r.ccc_pooled_std))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

impl FromStr for Architecture {
    type Err = Error;

    /// `two_layer`, `five_layer` or a comma-separated list of hidden widths.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "two_layer" => Ok(Architecture::TwoLayer),
            "five_layer" => Ok(Architecture::FiveLayer),
            list => list
                .split(',')
                .map(|w| w.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .ok()
                .filter(|v| !v.is_empty() && v.iter().all(|&w| w > 0))
                .map(Architecture::Custom)
                .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, sparsity: f64, seed: u64, ccc: f64) -> SweepRow {
        SweepRow {
            method,
            sparsity,
            seed,
            ccc_pooled: ccc,
            ccc_group_mean: ccc,
            mse: 0.1,
            mse_group_var: 0.0,
            risk_j: 0.1,
            achieved_sparsity: sparsity,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn seeds_syntax() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = ExperimentConfig::from_kv(&KvConfig::parse("").unwrap()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sparsities.len(), 9);
        assert_eq!(cfg.seeds.len(), 15);

        let kv = KvConfig::parse(
            "methods = CP-G, NP-IN\nsparsities = 0, 0.5\nseeds = 1..3\narchitecture = custom\nhidden_layers = 8,4\nsynthetic.n_participants = 6\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.methods, vec![Method::CpG, Method::NpIn]);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.architecture, Architecture::Custom(vec![8, 4]));
        match cfg.data {
            DataSource::Synthetic(s) => assert_eq!(s.n_participants, 6),
            _ => panic!("expected synthetic data"),
        }
    }

    #[test]
    fn csv_source_uses_temporal_preprocessing() {
        let kv = KvConfig::parse("data_dir = /tmp/x").unwrap();
        let cfg = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.preprocess, PreprocessConfig::default());
    }

    #[test]
    fn config_errors() {
        for text in [
            "bogus = 1",
            "methods = OBS",
            "sparsities = 0, 1.0",
            "seeds = ",
            "architecture = seven_layer",
            "architecture = custom",
            "lambda_var = -1",
            "split = 0.5, 0.5",
        ] {
            let err = ExperimentConfig::from_kv(&KvConfig::parse(text).unwrap()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn architecture_labels() {
        assert_eq!(Architecture::TwoLayer.label(), "two_layer");
        assert_eq!(Architecture::Custom(vec![8, 4]).label(), "custom_8-4");
        assert_eq!("16,8".parse::<Architecture>().unwrap(), Architecture::Custom(vec![16, 8]));
        assert_eq!(Architecture::FiveLayer.specs(10).len(), 5);
    }

    #[test]
    fn summary_mean_and_population_std() {
        let res = SweepResult {
            rows: vec![row(Method::CpG, 0.5, 0, 0.4), row(Method::CpG, 0.5, 1, 0.6)],
        };
        let s = summarize(&res).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!((s.rows[0].ccc_pooled_mean - 0.5).abs() < 1e-12);
        assert!((s.rows[0].ccc_pooled_std - 0.1).abs() < 1e-12);
        assert_eq!(s.rows[0].n_seeds, 2);
    }

    #[test]
    fn single_seed_zero_std() {
        let res = SweepResult {
            rows: vec![row(Method::CpVr, 0.0, 3, 0.7), row(Method::CpVr, 0.2, 3, 0.6)],
        };
        let s = summarize(&res).unwrap();
        assert!(s.rows.iter().all(|r| r.ccc_pooled_std == 0.0 && r.mse_std == 0.0));
        assert!(summarize(&SweepResult::default()).is_err());
    }

    #[test]
    fn plot_series() {
        let dir = tempfile::tempdir().unwrap();
        let rows = (0..9)
            .rev()
            .map(|i| row(Method::CpL, i as f64 / 10.0, 0, 0.5))
            .collect();
        let s = summarize(&SweepResult { rows }).unwrap();
        let paths = emit_plot_data(&s, "two_layer", dir.path()).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].ends_with("two_layer_CP-L.csv"));
        let text = fs::read_to_string(&paths[0]).unwrap();
        let xs: Vec<f64> = text
            .lines()
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(xs.len(), 9);
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        assert!(emit_plot_data(&Summary::default(), "x", dir.path()).is_err());
    }

    #[test]
    fn results_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let res = SweepResult {
            rows: vec![row(Method::CpVr, 0.1, 0, 0.123456789), row(Method::NpIn, 0.8, 2, -0.5)],
        };
        res.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
        assert_eq!(SweepResult::read_csv(&path).unwrap(), res);
    }
}
