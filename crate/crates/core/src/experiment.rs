//! Repeated selection experiments over a noise grid.
//!
//! For every noise setting a pool of models is produced (synthetically, or
//! read from an archive). Each repetition draws a library from the pool
//! uniformly without replacement, runs every requested algorithm on it and
//! records both accuracies plus two margins:
//!
//! * relative margin over top-1: `(acc - acc_top1) / acc_top1`
//! * margin against top-n, normalized by top-n's own gain over top-1:
//!   `(acc - acc_topn) / (acc_topn - acc_top1)`, undefined when top-n equals top-1
//!
//! Seeds for a trial depend only on the master seed, the grid index and the
//! repetition, so a plan always reproduces the same records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_traits::Float;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_archive, ResultFormat};
use crate::noise::{NoiseConfig, GRID_LEVELS};
use crate::prediction::{PredictionArchive, SplitKind};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_for};
use crate::selection::{run_algorithm, top_1, top_n, Algorithm, SelectionReport, StochasticParams};
use crate::zoo::{noise_degraded_zoo, DegradationSlopes, ZooConfig};

/// `(acc_ens - acc_top1) / acc_top1`.
pub fn relative_margin_over_top1<T: Float>(acc_ens: T, acc_top1: T) -> Result<T> {
    if acc_top1 == T::zero() {
        return Err(Error::ZeroDenominator("relative margin over top-1"));
    }
    Ok((acc_ens - acc_top1) / acc_top1)
}

/// `(acc_alg - acc_topn) / (acc_topn - acc_top1)`; `None` when top-n did not
/// beat top-1.
pub fn margin_vs_topn_normalized<T: Float>(acc_alg: T, acc_topn: T, acc_top1: T) -> Option<T> {
    let gain = acc_topn - acc_top1;
    (gain != T::zero()).then(|| (acc_alg - acc_topn) / gain)
}

/// Where the model pools come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveSource {
    /// One synthetic pool per grid cell, degraded by the cell's noise.
    Synthetic { zoo: ZooConfig, grid: Vec<NoiseConfig>, slopes: DegradationSlopes },
    /// A single archive on disk; its manifest's noise labels the records.
    Archive { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub source: ArchiveSource,
    pub algorithms: Vec<Algorithm>,
    pub pool_size: usize,
    pub draw_size: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    /// The seed field is ignored; each trial derives its own.
    pub stochastic: StochasticParams,
    /// Record wall-clock time per run. Off by default so output is reproducible.
    pub record_timing: bool,
}

impl ExperimentPlan {
    /// 50-model pools, 25-model draws, 20 repetitions over the 4 x 4 grid.
    pub fn synthetic_default(zoo: ZooConfig) -> Self {
        Self {
            source: ArchiveSource::Synthetic {
                zoo,
                grid: NoiseConfig::standard_grid(),
                slopes: DegradationSlopes::default(),
            },
            algorithms: Algorithm::ALL.to_vec(),
            pool_size: 50,
            draw_size: 25,
            repetitions: 20,
            master_seed: 0,
            stochastic: StochasticParams::default(),
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.draw_size == 0 || self.draw_size > self.pool_size {
            return bad(format!("draw size {} must lie in 1..={}", self.draw_size, self.pool_size));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms requested".into());
        }
        if let ArchiveSource::Synthetic { grid, zoo, .. } = &self.source {
            if grid.is_empty() {
                return bad("empty noise grid".into());
            }
            grid.iter().try_for_each(NoiseConfig::validate)?;
            zoo.validate()?;
        }
        self.stochastic.validate()
    }
}

/// One algorithm's outcome in one repetition of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub p: f64,
    pub repetition: usize,
    pub seed: u64,
    pub committee_size: usize,
    pub selection_acc: f64,
    pub test_acc: f64,
    pub margin_top1_test: Option<f64>,
    pub margin_topn_test: Option<f64>,
    pub margin_top1_selection: Option<f64>,
    pub margin_topn_selection: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl MarginRecord {
    pub fn accuracy(&self, split: SplitKind) -> f64 {
        match split {
            SplitKind::Selection => self.selection_acc,
            SplitKind::Test => self.test_acc,
        }
    }

    pub fn margin(&self, metric: Metric, split: SplitKind) -> Option<f64> {
        match (metric, split) {
            (Metric::OverTop1, SplitKind::Test) => self.margin_top1_test,
            (Metric::OverTop1, SplitKind::Selection) => self.margin_top1_selection,
            (Metric::VsTopN, SplitKind::Test) => self.margin_topn_test,
            (Metric::VsTopN, SplitKind::Selection) => self.margin_topn_selection,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    OverTop1,
    VsTopN,
}

/// Runs each algorithm on one library. Stochastic runs use `seed`.
pub fn run_trial<T: Scalar>(
    archive: &PredictionArchive<T>,
    algorithms: &[Algorithm],
    params: &StochasticParams,
    seed: u64,
) -> Result<Vec<SelectionReport>> {
    let params = params.clone().with_seed(seed);
    algorithms.iter().map(|&alg| run_algorithm(archive, alg, &params)).collect()
}

fn margins(
    report: &SelectionReport,
    top1: &SelectionReport,
    topn: &SelectionReport,
    split: SplitKind,
) -> (Option<f64>, Option<f64>) {
    let acc = |r: &SelectionReport| match split {
        SplitKind::Selection => r.selection_accuracy,
        SplitKind::Test => r.test_accuracy,
    };
    (
        relative_margin_over_top1(acc(report), acc(top1)).ok(),
        margin_vs_topn_normalized(acc(report), acc(topn), acc(top1)),
    )
}

/// Records for one trial, in the order of `reports`.
pub fn trial_records(
    reports: &[SelectionReport],
    top1: &SelectionReport,
    topn: &SelectionReport,
    noise: NoiseConfig,
    repetition: usize,
    seed: u64,
    record_timing: bool,
) -> Vec<MarginRecord> {
    reports
        .iter()
        .map(|r| {
            let (top1_test, topn_test) = margins(r, top1, topn, SplitKind::Test);
            let (top1_sel, topn_sel) = margins(r, top1, topn, SplitKind::Selection);
            MarginRecord {
                algorithm: r.algorithm,
                sigma: noise.sigma,
                p: noise.p,
                repetition,
                seed,
                committee_size: r.committee.len(),
                selection_acc: r.selection_accuracy,
                test_acc: r.test_accuracy,
                margin_top1_test: top1_test,
                margin_topn_test: topn_test,
                margin_top1_selection: top1_sel,
                margin_topn_selection: topn_sel,
                wall_ms: record_timing.then_some(r.elapsed.as_secs_f64() * 1e3),
            }
        })
        .collect()
}

/// Seed of repetition `repetition` in grid cell `cell`.
pub fn trial_seed(master: u64, cell: usize, repetition: usize) -> u64 {
    derive_seed(master, &[cell as u64, repetition as u64])
}

fn run_cell_repetition<T: Scalar>(
    plan: &ExperimentPlan,
    pool: &PredictionArchive<T>,
    noise: NoiseConfig,
    cell: usize,
    repetition: usize,
) -> Result<Vec<MarginRecord>> {
    let seed = trial_seed(plan.master_seed, cell, repetition);
    let mut drawn = sample(&mut rng_for(derive_seed(seed, &[0])), pool.num_models(), plan.draw_size).into_vec();
    drawn.sort_unstable();
    let library = pool.subset(&drawn)?;

    let started = Instant::now();
    let top1 = top_1(&library)?;
    let topn = top_n(&library)?;
    let reports = run_trial(&library, &plan.algorithms, &plan.stochastic, derive_seed(seed, &[1]))?;
    log::debug!("cell {cell} ({}, {}) repetition {repetition}: {:.2?}", noise.sigma, noise.p, started.elapsed());
    Ok(trial_records(&reports, &top1, &topn, noise, repetition, seed, plan.record_timing))
}

/// Builds the pool of every grid cell.
fn pools(plan: &ExperimentPlan) -> Result<Vec<(NoiseConfig, PredictionArchive<f32>)>> {
    match &plan.source {
        ArchiveSource::Synthetic { zoo, grid, slopes } => grid
            .par_iter()
            .enumerate()
            .map(|(cell, &noise)| {
                let config = ZooConfig {
                    num_models: plan.pool_size,
                    seed: derive_seed(plan.master_seed, &[u64::MAX, cell as u64]),
                    ..zoo.clone()
                };
                Ok((noise, noise_degraded_zoo(&config, noise, *slopes)?))
            })
            .collect(),
        ArchiveSource::Archive { path } => {
            let loaded = load_archive(path)?;
            if loaded.archive.num_models() != plan.pool_size {
                return Err(Error::InvalidParameter(format!(
                    "plan expects a pool of {} models, archive has {}",
                    plan.pool_size,
                    loaded.archive.num_models()
                )));
            }
            Ok(vec![(loaded.manifest.noise.unwrap_or(NoiseConfig::CLEAN), loaded.archive)])
        }
    }
}

/// Runs the plan; records come out ordered by (cell, repetition, algorithm).
pub fn run_grid_experiment(plan: &ExperimentPlan) -> Result<Vec<MarginRecord>> {
    plan.validate()?;
    let pools = pools(plan)?;
    let jobs: Vec<(usize, usize)> =
        (0..pools.len()).flat_map(|cell| (0..plan.repetitions).map(move |rep| (cell, rep))).collect();
    let chunks: Vec<Vec<MarginRecord>> = jobs
        .par_iter()
        .map(|&(cell, rep)| {
            let (noise, pool) = &pools[cell];
            run_cell_repetition(plan, pool, *noise, cell, rep)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub level: f64,
    pub mean: f64,
    pub count: usize,
}

/// Mean margins as a function of noise level.
///
/// `attribute` groups by sigma (averaging over p), `label` groups by p
/// (averaging over sigma), `both` keeps only cells with sigma == p.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MarginCurves {
    pub attribute: Vec<CurvePoint>,
    pub label: Vec<CurvePoint>,
    pub both: Vec<CurvePoint>,
}

impl MarginCurves {
    fn point(curve: &[CurvePoint], level: f64) -> Option<f64> {
        curve.iter().find(|c| c.level == level).map(|c| c.mean)
    }

    /// Whether each curve ends strictly higher than it starts.
    pub fn rises(&self, low: f64, high: f64) -> [bool; 3] {
        [&self.attribute, &self.label, &self.both]
            .map(|curve| matches!((Self::point(curve, low), Self::point(curve, high)), (Some(a), Some(b)) if b > a))
    }
}

fn level_key(level: f64) -> i64 {
    (level * 1e9).round() as i64
}

fn curve<'a>(records: impl Iterator<Item = (f64, f64)> + 'a) -> Vec<CurvePoint> {
    let mut groups: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for (level, value) in records {
        let entry = groups.entry(level_key(level)).or_insert((level, 0.0, 0));
        entry.1 += value;
        entry.2 += 1;
    }
    groups.into_values().map(|(level, total, count)| CurvePoint { level, mean: total / count as f64, count }).collect()
}

/// Aggregates `metric` over the records of `algorithms`; undefined margins are skipped.
pub fn margin_curves(
    records: &[MarginRecord],
    metric: Metric,
    split: SplitKind,
    algorithms: &[Algorithm],
) -> MarginCurves {
    let selected = || {
        records
            .iter()
            .filter(|r| algorithms.contains(&r.algorithm))
            .filter_map(move |r| r.margin(metric, split).map(|m| (r, m)))
    };
    MarginCurves {
        attribute: curve(selected().map(|(r, m)| (r.sigma, m))),
        label: curve(selected().map(|(r, m)| (r.p, m))),
        both: curve(selected().filter(|(r, _)| level_key(r.sigma) == level_key(r.p)).map(|(r, m)| (r.sigma, m))),
    }
}

/// Ensemble margin over top-1, averaged across all ensemble algorithms.
pub fn ensemble_curves(records: &[MarginRecord], split: SplitKind) -> MarginCurves {
    margin_curves(records, Metric::OverTop1, split, &Algorithm::ENSEMBLES)
}

/// Mean committee size per algorithm, in [`Algorithm`] order.
pub fn mean_committee_sizes(records: &[MarginRecord]) -> Vec<(Algorithm, f64)> {
    let mut sizes: BTreeMap<Algorithm, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = sizes.entry(r.algorithm).or_default();
        e.0 += r.committee_size;
        e.1 += 1;
    }
    sizes.into_iter().map(|(alg, (total, n))| (alg, total as f64 / n as f64)).collect()
}

/// Lowest and highest grid level, for trend checks.
pub fn grid_extremes() -> (f64, f64) {
    (GRID_LEVELS[0], GRID_LEVELS[GRID_LEVELS.len() - 1])
}

/// Seed, version and plan echo written next to every result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub format: ResultFormat,
    pub record_count: usize,
    pub plan: ExperimentPlan,
}

impl RunMetadata {
    pub fn new(plan: &ExperimentPlan, format: ResultFormat, record_count: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            master_seed: plan.master_seed,
            format,
            record_count,
            plan: plan.clone(),
        }
    }

    /// `<results>.meta.json`
    pub fn path_for(results: &Path) -> PathBuf {
        let mut name = results.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        results.with_file_name(name)
    }

    pub fn write(&self, results: &Path) -> Result<PathBuf> {
        let path = Self::path_for(results);
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
