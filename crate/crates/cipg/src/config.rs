//! Run configuration, loaded from TOML and overridden by CLI flags.

use std::path::{Path, PathBuf};

use cipg_core::baselines::FilterConfig;
use cipg_core::metrics::{EvalOptions, Resample, VarianceMode};
use cipg_core::sensors::{DvlFrame, SyncOptions};
use cipg_core::sim::ScenarioSpec;
use cipg_core::{CascadeConfig, EstimatorKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::DatasetPaths;

/// Exactly one of `dataset` or `scenario`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub dataset: Option<DatasetPaths>,
    pub scenario: Option<ScenarioSpec>,
}

pub enum InputSource<'a> {
    Dataset(&'a DatasetPaths),
    Scenario(&'a ScenarioSpec),
}

impl InputConfig {
    pub fn source(&self) -> Result<InputSource<'_>> {
        match (&self.dataset, &self.scenario) {
            (Some(d), None) => Ok(InputSource::Dataset(d)),
            (None, Some(s)) => Ok(InputSource::Scenario(s)),
            (None, None) => Err(Error::Config(
                "no input: set [input.dataset] or [input.scenario] (or pass --data / --scenario)".into(),
            )),
            (Some(_), Some(_)) => Err(Error::Config("both a dataset and a scenario are configured; choose one".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    /// Max |t_ahrs − t_dvl| in seconds; half the DVL period when unset.
    pub ahrs_tolerance: Option<f64>,
    /// Frame of the DVL file; simulated inputs use the scenario's frame.
    pub dvl_frame: DvlFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignChoice {
    /// Align recorded datasets, leave simulated runs in the truth frame.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub align: AlignChoice,
    pub n_fixes: usize,
    pub resample: Resample,
    pub rpe_delta: f64,
    pub lever_arm: f64,
    pub include_orientation: bool,
    pub variance: VarianceMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let d = EvalOptions::default();
        Self {
            align: AlignChoice::Auto,
            n_fixes: d.n_fixes,
            resample: d.resample,
            rpe_delta: d.rpe_delta,
            lever_arm: d.lever_arm,
            include_orientation: d.include_orientation,
            variance: d.variance,
        }
    }
}

impl EvalConfig {
    pub fn options(&self, simulated: bool) -> EvalOptions {
        EvalOptions {
            n_fixes: self.n_fixes,
            resample: self.resample,
            align: match self.align {
                AlignChoice::Auto => !simulated,
                AlignChoice::On => true,
                AlignChoice::Off => false,
            },
            rpe_delta: self.rpe_delta,
            lever_arm: self.lever_arm,
            include_orientation: self.include_orientation,
            variance: self.variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    /// Estimator run by `estimate`.
    pub estimator: EstimatorKind,
    /// Estimators run by `compare`.
    pub estimators: Vec<EstimatorKind>,
    /// Evaluation horizons for `compare`, seconds from the first epoch;
    /// empty means the whole run.
    pub periods: Vec<f64>,
    pub out: PathBuf,
    pub sync: SyncConfig,
    pub cascade: CascadeConfig,
    pub filter: FilterConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            estimator: EstimatorKind::Cipg,
            estimators: EstimatorKind::ALL.to_vec(),
            periods: Vec::new(),
            out: PathBuf::from("out"),
            sync: SyncConfig::default(),
            cascade: CascadeConfig::default(),
            filter: FilterConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let source = self.input.source()?;
        if let InputSource::Scenario(s) = source {
            s.validate()?;
        }
        self.cascade.validate()?;
        self.filter.validate()?;
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators is empty".into()));
        }
        if let Some(p) = self.periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Config(format!("periods must be positive, got {p}")));
        }
        if let Some(tol) = self.sync.ahrs_tolerance {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::Config(format!("sync.ahrs_tolerance must be >= 0, got {tol}")));
            }
        }
        Ok(())
    }

    pub fn is_simulated(&self) -> bool {
        self.input.scenario.is_some()
    }

    pub fn sync_options(&self) -> SyncOptions {
        SyncOptions {
            ahrs_tolerance: self.sync.ahrs_tolerance,
            dvl_frame: match &self.input.scenario {
                Some(s) => s.dvl_frame,
                None => self.sync.dvl_frame,
            },
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        self.eval.options(self.is_simulated())
    }

    /// Applies a seed override to the scenario, if any.
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(s) = self.input.scenario.as_mut() {
            s.seed = seed;
        }
    }

    /// Copy with absolute dataset paths, as recorded in run metadata.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(d) = c.input.dataset.as_mut() {
            *d = d.absolutized();
        }
        c.out = std::path::absolute(&c.out).unwrap_or(c.out);
        c
    }
}
