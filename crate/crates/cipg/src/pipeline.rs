//! Input preparation, estimator runs and run metadata.

use std::path::Path;
use std::time::Instant;

use cipg_core::cascade::{EstimateRow, OutputFlag};
use cipg_core::estimator;
use cipg_core::metrics::{self, PoseSample, TrajectoryReport};
use cipg_core::sensors::synchronize;
use cipg_core::sim;
use cipg_core::{EstimatorKind, GroundTruthSample, SyncedEpoch};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{InputSource, RunConfig};
use crate::error::{Error, Result};
use crate::io;

pub const METADATA_FILE: &str = "metadata.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Synchronized epochs plus the reference trajectory, if any.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub epochs: Vec<SyncedEpoch>,
    pub reference: Option<Vec<GroundTruthSample>>,
    pub epoch_sha256: String,
    pub hemisphere_flips: usize,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let (imu, dvl, ahrs, reference, flips) = match config.input.source()? {
        InputSource::Scenario(spec) => {
            let run = sim::generate(spec)?;
            let reference = run.ground_truth();
            let s = run.noisy;
            (s.imu, s.dvl, s.ahrs, Some(reference), 0)
        }
        InputSource::Dataset(paths) => {
            let data = io::load_sensors(paths)?;
            let reference = paths.reference_path().map(|p| io::load_reference(&p)).transpose()?;
            (data.imu, data.dvl, data.ahrs, reference, data.hemisphere_flips)
        }
    };
    let epochs = synchronize(&imu, &dvl, &ahrs, &config.sync_options())?;
    log::info!("{} epochs from {} IMU samples", epochs.len(), imu.len());
    Ok(Prepared {
        epoch_sha256: epoch_hash(&epochs),
        epochs,
        reference,
        hemisphere_flips: flips,
    })
}

/// SHA-256 over the bit patterns of every value in the epoch stream.
pub fn epoch_hash(epochs: &[SyncedEpoch]) -> String {
    let mut h = Sha256::new();
    let mut put = |v: f64| h.update(v.to_bits().to_le_bytes());
    for e in epochs {
        put(e.t);
        put(e.t_prev.unwrap_or(f64::NAN));
        put(e.imu_burst.t_start);
        for s in &e.imu_burst.samples {
            put(s.t);
            s.accel.iter().chain(s.gyro.iter()).for_each(|v| put(*v));
        }
        put(e.dvl.t);
        e.dvl.velocity.iter().for_each(|v| put(*v));
        put(e.ahrs.t);
        e.ahrs.orientation.to_array().into_iter().for_each(&mut put);
    }
    hex(&h.finalize())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlagCounts {
    pub ok: usize,
    pub warmup: usize,
    pub fallback: usize,
}

impl FlagCounts {
    pub fn of(rows: &[EstimateRow]) -> Self {
        let mut c = Self::default();
        for r in rows {
            match r.flag {
                OutputFlag::Ok => c.ok += 1,
                OutputFlag::Warmup => c.warmup += 1,
                OutputFlag::Fallback => c.fallback += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub kind: EstimatorKind,
    pub rows: Vec<EstimateRow>,
    pub runtime_s: f64,
}

pub fn run_estimator(kind: EstimatorKind, config: &RunConfig, epochs: &[SyncedEpoch]) -> Result<RunOutcome> {
    let start = Instant::now();
    let rows = estimator::run(kind, &config.cascade, &config.filter, epochs)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let counts = FlagCounts::of(&rows);
    if counts.fallback > 0 {
        log::warn!("{kind}: {} epochs dead-reckoned after divergence", counts.fallback);
    }
    Ok(RunOutcome { kind, rows, runtime_s })
}

/// Evaluates an estimate against a reference, failing with both time
/// ranges when they do not overlap.
pub fn evaluate(
    rows: &[PoseSample],
    reference: &[PoseSample],
    opts: &metrics::EvalOptions,
    runtime_s: Option<f64>,
) -> Result<TrajectoryReport> {
    let range = |s: &[PoseSample]| {
        let lo = s.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
        let hi = s.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (a0, a1) = range(rows);
    let (b0, b1) = range(reference);
    if rows.is_empty() || reference.is_empty() || a1 < b0 || b1 < a0 {
        return Err(Error::Usage(format!(
            "estimate spans [{a0}, {a1}] s and reference spans [{b0}, {b1}] s: no overlap"
        )));
    }
    let mut report = metrics::evaluate(rows, reference, opts)?;
    report.runtime_s = runtime_s;
    Ok(report)
}

/// Rows within `period` seconds of the first row.
pub fn truncate(rows: &[EstimateRow], period: Option<f64>) -> &[EstimateRow] {
    let Some(p) = period else { return rows };
    let Some(t0) = rows.first().map(|r| r.t) else {
        return rows;
    };
    let n = rows.partition_point(|r| r.t <= t0 + p + 1e-9);
    &rows[..n]
}

/// Everything needed to reproduce and verify an `estimate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub estimator: EstimatorKind,
    pub epoch_sha256: String,
    pub trajectory_sha256: String,
    pub n_epochs: usize,
    pub flags: FlagCounts,
    pub hemisphere_flips: usize,
    pub runtime_s: f64,
    pub config: RunConfig,
}

impl Metadata {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub outcome: RunOutcome,
    pub metadata: Metadata,
    pub report: Option<TrajectoryReport>,
}

/// Runs one estimator and writes `trajectory.csv` and `metadata.toml`
/// into `config.out`.
pub fn estimate(config: &RunConfig, kind: EstimatorKind) -> Result<EstimateResult> {
    let prepared = prepare(config)?;
    let outcome = run_estimator(kind, config, &prepared.epochs)?;
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let traj_path = out.join(TRAJECTORY_FILE);
    io::write_trajectory(&traj_path, &outcome.rows)?;
    let metadata = Metadata {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        estimator: kind,
        epoch_sha256: prepared.epoch_sha256.clone(),
        trajectory_sha256: file_sha256(&traj_path)?,
        n_epochs: outcome.rows.len(),
        flags: FlagCounts::of(&outcome.rows),
        hemisphere_flips: prepared.hemisphere_flips,
        runtime_s: outcome.runtime_s,
        config: config.resolved(),
    };
    metadata.write(&out.join(METADATA_FILE))?;
    let report = match &prepared.reference {
        Some(reference) => {
            let est = metrics::poses(&outcome.rows);
            match evaluate(&est, reference, &config.eval_options(), Some(outcome.runtime_s)) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("reference evaluation skipped: {e}");
                    None
                }
            }
        }
        None => None,
    };
    Ok(EstimateResult {
        outcome,
        metadata,
        report,
    })
}

/// Re-runs a recorded estimate into `out` and checks both hashes.
pub fn replay(metadata: &Metadata, out: &Path) -> Result<EstimateResult> {
    let mut config = metadata.config.clone();
    config.out = out.to_path_buf();
    let result = estimate(&config, metadata.estimator)?;
    if result.metadata.epoch_sha256 != metadata.epoch_sha256 {
        return Err(Error::Replay(format!(
            "epoch stream hash {} differs from recorded {}",
            result.metadata.epoch_sha256, metadata.epoch_sha256
        )));
    }
    if result.metadata.trajectory_sha256 != metadata.trajectory_sha256 {
        return Err(Error::Replay(format!(
            "trajectory hash {} differs from recorded {}",
            result.metadata.trajectory_sha256, metadata.trajectory_sha256
        )));
    }
    Ok(result)
}

/// One cell group of a comparison: an estimator over one period.
#[derive(Debug, Clone)]
pub struct CompareEntry {
    pub kind: EstimatorKind,
    pub period: Option<f64>,
    pub result: std::result::Result<TrajectoryReport, String>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub periods: Vec<Option<f64>>,
    pub estimators: Vec<EstimatorKind>,
    pub entries: Vec<CompareEntry>,
    pub outcomes: Vec<(EstimatorKind, std::result::Result<RunOutcome, String>)>,
    pub epoch_sha256: String,
}

impl Comparison {
    pub fn entry(&self, kind: EstimatorKind, period: Option<f64>) -> Option<&CompareEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.period == period)
    }

    pub fn failures(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .filter_map(|(k, r)| r.as_ref().err().map(|e| format!("{k}: {e}")))
            .collect()
    }
}

/// Runs every configured estimator on one epoch stream, one thread each,
/// and evaluates each over every period.
pub fn compare(config: &RunConfig) -> Result<Comparison> {
    let prepared = prepare(config)?;
    let reference = prepared
        .reference
        .as_ref()
        .ok_or_else(|| Error::Config("compare needs a reference trajectory (gt.csv or gps.csv)".into()))?;
    let epochs = &prepared.epochs;
    let outcomes: Vec<(EstimatorKind, std::result::Result<RunOutcome, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = config
            .estimators
            .iter()
            .map(|&kind| (kind, s.spawn(move || run_estimator(kind, config, epochs))))
            .collect();
        handles
            .into_iter()
            .map(|(kind, h)| {
                let r = match h.join() {
                    Ok(r) => r.map_err(|e| e.to_string()),
                    Err(_) => Err("estimator thread panicked".to_owned()),
                };
                (kind, r)
            })
            .collect()
    });

    let periods: Vec<Option<f64>> = if config.periods.is_empty() {
        vec![None]
    } else {
        config.periods.iter().copied().map(Some).collect()
    };
    let opts = config.eval_options();
    let mut entries = Vec::new();
    for &period in &periods {
        for (kind, outcome) in &outcomes {
            let result = match outcome {
                Ok(o) => {
                    let rows = truncate(&o.rows, period);
                    evaluate(&metrics::poses(rows), reference, &opts, Some(o.runtime_s)).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.clone()),
            };
            entries.push(CompareEntry {
                kind: *kind,
                period,
                result,
            });
        }
    }
    Ok(Comparison {
        periods,
        estimators: config.estimators.clone(),
        entries,
        outcomes,
        epoch_sha256: prepared.epoch_sha256,
    })
}
