//! Error-state EKF with a multiplicative attitude error.
//!
//! Error state `(δp, δv, δθ)` with `R_true = R̂ · Exp(δθ)`. The mean follows
//! the preintegration model sample by sample, so with zero correction the
//! EKF mean is bitwise the dead-reckoned state.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, Vector6};

use super::kalman::{check_covariance, joseph_update, symmetrize};
use super::{set_block, FilterConfig, Matrix9, ProcessNoise};
use crate::cascade::{EstimateRow, OutputFlag};
use crate::error::{Error, Result};
use crate::preintegration::{propagate_orientation, propagate_position, propagate_velocity, GravityModel, ImuBiases, NavState};
use crate::rotation::{skew, UnitQuaternion, Vec3};
use crate::sensors::{ImuBurst, SyncedEpoch};

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub mean: NavState,
    pub covariance: Matrix9,
}

fn process_covariance(noise: &ProcessNoise, dt: f64) -> Matrix9 {
    let mut q = Matrix9::zeros();
    let i = Matrix3::identity();
    set_block(&mut q, 0, 0, &(i * (noise.position_density * noise.position_density * dt)));
    set_block(&mut q, 3, 3, &(i * (noise.accel_density * noise.accel_density * dt)));
    set_block(&mut q, 6, 6, &(i * (noise.gyro_density * noise.gyro_density * dt)));
    q
}

pub fn ekf_predict(
    state: &EkfState,
    burst: &ImuBurst,
    biases: &ImuBiases,
    gravity: &GravityModel,
    noise: &ProcessNoise,
) -> Result<EkfState> {
    if burst.is_empty() {
        return Err(Error::InvalidArgument("empty IMU burst".into()));
    }
    let g = gravity.vector();
    let mut m = state.mean;
    let mut p = state.covariance;
    for (dt, s) in burst.steps() {
        let q_old = m.orientation;
        m.orientation = propagate_orientation(&q_old, &s.gyro, &biases.gyro, dt)?;
        m.velocity = propagate_velocity(&m.velocity, &m.orientation, &s.accel, &biases.accel, &g, dt)?;
        m.position = propagate_position(&m.position, &m.velocity, dt)?;

        let f_tt = (q_old.conjugate() * m.orientation).to_rotation_matrix().transpose();
        let f_vt = -(m.orientation.to_rotation_matrix() * skew(&(s.accel - biases.accel)) * f_tt) * dt;
        let mut f = Matrix9::identity();
        set_block(&mut f, 0, 3, &(Matrix3::identity() * dt));
        set_block(&mut f, 0, 6, &(f_vt * dt));
        set_block(&mut f, 3, 6, &f_vt);
        set_block(&mut f, 6, 6, &f_tt);
        p = f * p * f.transpose() + process_covariance(noise, dt);
    }
    symmetrize(&mut p);
    check_covariance(&p)?;
    Ok(EkfState { mean: m, covariance: p })
}

/// Innovation `[z_v − v̂; Log(q̂⁻¹ ⊗ q_A)]` with `r_meas` over the same order.
pub fn ekf_update(state: &EkfState, dvl: &Vec3, ahrs: &UnitQuaternion, r_meas: &Matrix6<f64>) -> Result<EkfState> {
    if !(dvl.iter().all(|v| v.is_finite()) && ahrs.is_finite()) {
        return Err(Error::NonFinite { what: "measurement", row: 0 });
    }
    let m = &state.mean;
    let dv = dvl - m.velocity;
    let dq = (m.orientation.conjugate() * *ahrs).to_rotation_vector();
    let innovation = Vector6::new(dv.x, dv.y, dv.z, dq.x, dq.y, dq.z);
    let mut h = SMatrix::<f64, 6, 9>::zeros();
    h.fixed_view_mut::<6, 6>(0, 3).copy_from(&Matrix6::identity());
    let (dx, p) = joseph_update(&state.covariance, &h, r_meas, &innovation)?;
    check_covariance(&p)?;
    Ok(EkfState {
        mean: inject(m, &dx),
        covariance: p,
    })
}

fn inject(m: &NavState, dx: &SVector<f64, 9>) -> NavState {
    NavState {
        position: m.position + dx.fixed_rows::<3>(0),
        velocity: m.velocity + dx.fixed_rows::<3>(3),
        orientation: m.orientation * UnitQuaternion::from_rotation_vector(&dx.fixed_rows::<3>(6).into_owned()),
    }
}

/// EKF over a synced epoch stream, initialized like the cascade.
#[derive(Debug, Clone)]
pub struct Ekf {
    config: FilterConfig,
    state: EkfState,
    last: EstimateRow,
}

impl Ekf {
    pub fn new(config: FilterConfig, first: &SyncedEpoch) -> Result<Self> {
        config.validate()?;
        let mean = config.initial_state(first);
        let state = EkfState {
            mean,
            covariance: config.initial_covariance(),
        };
        Ok(Self {
            config,
            state,
            last: EstimateRow {
                t: first.t,
                state: mean,
                flag: OutputFlag::Ok,
            },
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }

    pub fn last(&self) -> &EstimateRow {
        &self.last
    }

    /// Predict over the epoch's burst, then update. On error the filter is unchanged.
    pub fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        let c = &self.config;
        let pred = ekf_predict(&self.state, &epoch.imu_burst, &c.biases, &c.gravity, &c.process_noise)?;
        let post = ekf_update(&pred, &epoch.dvl.velocity, &epoch.ahrs.orientation, &c.measurement_covariance())?;
        self.state = post;
        self.last = EstimateRow {
            t: epoch.t,
            state: self.state.mean,
            flag: OutputFlag::Ok,
        };
        Ok(self.last)
    }
}
