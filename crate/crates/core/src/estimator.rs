//! Common interface over the cascade observer and the filter baselines.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::baselines::{Ekf, FilterConfig, Inekf};
use crate::cascade::{CascadeConfig, CascadeObserver, EstimateRow};
use crate::error::{Error, Result};
use crate::sensors::SyncedEpoch;

pub trait Estimator {
    fn name(&self) -> &'static str;
    /// Estimate at the initialization epoch.
    fn initial(&self) -> EstimateRow;
    fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow>;
}

impl Estimator for CascadeObserver {
    fn name(&self) -> &'static str {
        EstimatorKind::Cipg.name()
    }
    fn initial(&self) -> EstimateRow {
        *self.last()
    }
    fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        CascadeObserver::step(self, epoch)
    }
}

impl Estimator for Ekf {
    fn name(&self) -> &'static str {
        EstimatorKind::Ekf.name()
    }
    fn initial(&self) -> EstimateRow {
        *self.last()
    }
    fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        Ekf::step(self, epoch)
    }
}

impl Estimator for Inekf {
    fn name(&self) -> &'static str {
        EstimatorKind::Inekf.name()
    }
    fn initial(&self) -> EstimateRow {
        *self.last()
    }
    fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        Inekf::step(self, epoch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum EstimatorKind {
    Ekf,
    Inekf,
    Cipg,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Ekf, EstimatorKind::Inekf, EstimatorKind::Cipg];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ekf => "ekf",
            EstimatorKind::Inekf => "inekf",
            EstimatorKind::Cipg => "cipg",
        }
    }

    /// Column label in comparison tables.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Ekf => "EKF",
            EstimatorKind::Inekf => "InEKF",
            EstimatorKind::Cipg => "C-IPG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ekf" => Some(EstimatorKind::Ekf),
            "inekf" => Some(EstimatorKind::Inekf),
            "cipg" | "c-ipg" => Some(EstimatorKind::Cipg),
            _ => None,
        }
    }

    pub fn build(
        &self,
        cascade: &CascadeConfig,
        filter: &FilterConfig,
        first: &SyncedEpoch,
    ) -> Result<Box<dyn Estimator + Send>> {
        Ok(match self {
            EstimatorKind::Cipg => Box::new(CascadeObserver::new(cascade.clone(), first)?),
            EstimatorKind::Ekf => Box::new(Ekf::new(filter.clone(), first)?),
            EstimatorKind::Inekf => Box::new(Inekf::new(filter.clone(), first)?),
        })
    }
}

impl core::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs an estimator over all epochs; the first row is the initial state.
pub fn run_estimator(estimator: &mut dyn Estimator, epochs: &[SyncedEpoch]) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::with_capacity(epochs.len());
    rows.push(estimator.initial());
    for e in epochs.iter().skip(1) {
        rows.push(estimator.step(e)?);
    }
    Ok(rows)
}

pub fn run(kind: EstimatorKind, cascade: &CascadeConfig, filter: &FilterConfig, epochs: &[SyncedEpoch]) -> Result<Vec<EstimateRow>> {
    let first = epochs.first().ok_or_else(|| Error::InvalidArgument("no epochs".into()))?;
    if kind == EstimatorKind::Cipg {
        return crate::cascade::run_cascade(epochs, cascade);
    }
    let mut est = kind.build(cascade, filter, first)?;
    run_estimator(est.as_mut(), epochs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::{synchronize, SyncOptions};
    use crate::sim::{generate, ScenarioSpec};

    #[test]
    fn dispatch_matches_direct_runs() {
        let run_ = generate(&ScenarioSpec::circle(10.0, 0.5, 10.0)).unwrap();
        let epochs = synchronize(&run_.noisy.imu, &run_.noisy.dvl, &run_.noisy.ahrs, &SyncOptions::default()).unwrap();
        let c = CascadeConfig::default();
        let f = FilterConfig::default();
        for k in EstimatorKind::ALL {
            let rows = run(k, &c, &f, &epochs).unwrap();
            assert_eq!(rows.len(), epochs.len());
            let mut boxed = k.build(&c, &f, &epochs[0]).unwrap();
            assert_eq!(boxed.name(), k.name());
            assert_eq!(run_estimator(boxed.as_mut(), &epochs).unwrap(), rows);
            assert_eq!(EstimatorKind::parse(k.label()), Some(k));
        }
    }
}
