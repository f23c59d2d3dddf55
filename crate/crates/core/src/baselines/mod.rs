//! Kalman-filter baselines over the same epoch stream as the cascade:
//! predict over each IMU burst, update with the epoch's DVL and AHRS.

pub mod ekf;
pub mod inekf;
pub mod kalman;

use nalgebra::{Matrix3, Matrix6, SMatrix};

use crate::error::{Error, Result};
use crate::preintegration::{GravityModel, ImuBiases, NavState};
use crate::rotation::{UnitQuaternion, Vec3};
use crate::sensors::SyncedEpoch;

pub use ekf::{ekf_predict, ekf_update, Ekf, EkfState};
pub use inekf::{inekf_predict, inekf_update, ExtendedPose, Inekf, InekfState};

pub type Matrix9 = SMatrix<f64, 9, 9>;

/// Continuous white-noise densities driving the process covariance; the
/// variance added over a step of `dt` is `density² · dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct ProcessNoise {
    pub accel_density: f64,
    pub gyro_density: f64,
    pub position_density: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            accel_density: 0.002,
            gyro_density: 2e-4,
            position_density: 0.0,
        }
    }
}

impl ProcessNoise {
    pub fn zero() -> Self {
        Self {
            accel_density: 0.0,
            gyro_density: 0.0,
            position_density: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct FilterConfig {
    /// `P₀ = initial_covariance · I`.
    pub initial_covariance: f64,
    pub dvl_variance: f64,
    pub ahrs_variance: f64,
    pub process_noise: ProcessNoise,
    pub biases: ImuBiases,
    pub gravity: GravityModel,
    pub initial_position: Vec3,
    pub initial_velocity: Option<Vec3>,
    pub initial_orientation: Option<UnitQuaternion>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            initial_covariance: 0.1,
            dvl_variance: 0.1,
            ahrs_variance: 0.1,
            process_noise: ProcessNoise::default(),
            biases: ImuBiases::default(),
            gravity: GravityModel::default(),
            initial_position: Vec3::zeros(),
            initial_velocity: None,
            initial_orientation: None,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.process_noise;
        for (name, v) in [
            ("initial_covariance", self.initial_covariance),
            ("accel_density", n.accel_density),
            ("gyro_density", n.gyro_density),
            ("position_density", n.position_density),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("dvl_variance", self.dvl_variance), ("ahrs_variance", self.ahrs_variance)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Block-diagonal `R` over `(DVL velocity, AHRS attitude error)`.
    pub fn measurement_covariance(&self) -> Matrix6<f64> {
        let mut r = Matrix6::zeros();
        r.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * self.dvl_variance));
        r.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * self.ahrs_variance));
        r
    }

    pub fn initial_covariance(&self) -> Matrix9 {
        Matrix9::identity() * self.initial_covariance
    }

    /// Initial mean from the first epoch and the configured overrides.
    pub fn initial_state(&self, first: &SyncedEpoch) -> NavState {
        NavState {
            position: self.initial_position,
            velocity: self.initial_velocity.unwrap_or(first.dvl.velocity),
            orientation: self.initial_orientation.unwrap_or(first.ahrs.orientation),
        }
    }
}

pub(crate) fn set_block(m: &mut Matrix9, row: usize, col: usize, b: &Matrix3<f64>) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(b);
}
