//! Right-invariant EKF on SE₂(3).
//!
//! The state is the extended pose `X = (R, v, p)` with product
//! `X₁X₂ = (R₁R₂, R₁v₂ + v₁, R₁p₂ + p₁)`. The error is `ξ` with
//! `X = Exp(ξ) X̂`, ordered `(ξ_R, ξ_v, ξ_p)`. The discrete IMU model is
//! group affine, so the error propagation matrix depends only on gravity
//! and the step size.

use nalgebra::{Matrix3, Matrix5, Matrix6, SMatrix, SVector, Vector6};

use super::kalman::{check_covariance, joseph_update, symmetrize};
use super::{set_block, FilterConfig, Matrix9, ProcessNoise};
use crate::cascade::{EstimateRow, OutputFlag};
use crate::error::{Error, Result};
use crate::preintegration::{propagate_orientation, propagate_position, propagate_velocity, GravityModel, ImuBiases, NavState};
use crate::rotation::{skew, so3_left_jacobian, UnitQuaternion, Vec3};
use crate::sensors::{ImuBurst, SyncedEpoch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedPose {
    pub rotation: UnitQuaternion,
    pub velocity: Vec3,
    pub position: Vec3,
}

impl ExtendedPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            velocity: Vec3::zeros(),
            position: Vec3::zeros(),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            velocity: self.rotation.rotate(&other.velocity) + self.velocity,
            position: self.rotation.rotate(&other.position) + self.position,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.conjugate();
        Self {
            rotation: rt,
            velocity: -rt.rotate(&self.velocity),
            position: -rt.rotate(&self.position),
        }
    }

    /// `Exp(ξ)` with `ξ = (φ, ρ_v, ρ_p)`.
    pub fn exp(xi: &SVector<f64, 9>) -> Self {
        let phi: Vec3 = xi.fixed_rows::<3>(0).into_owned();
        let jl = so3_left_jacobian(&phi);
        Self {
            rotation: UnitQuaternion::from_rotation_vector(&phi),
            velocity: jl * xi.fixed_rows::<3>(3),
            position: jl * xi.fixed_rows::<3>(6),
        }
    }

    pub fn adjoint(&self) -> Matrix9 {
        let r = self.rotation.to_rotation_matrix();
        let mut ad = Matrix9::zeros();
        set_block(&mut ad, 0, 0, &r);
        set_block(&mut ad, 3, 0, &(skew(&self.velocity) * r));
        set_block(&mut ad, 3, 3, &r);
        set_block(&mut ad, 6, 0, &(skew(&self.position) * r));
        set_block(&mut ad, 6, 6, &r);
        ad
    }

    /// 5×5 homogeneous matrix `[[R, v, p], [0, 1, 0], [0, 0, 1]]`.
    pub fn to_matrix(&self) -> Matrix5<f64> {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.to_rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.velocity);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.position);
        m
    }

    pub fn nav_state(&self) -> NavState {
        NavState {
            position: self.position,
            velocity: self.velocity,
            orientation: self.rotation,
        }
    }
}

impl From<NavState> for ExtendedPose {
    fn from(s: NavState) -> Self {
        Self {
            rotation: s.orientation,
            velocity: s.velocity,
            position: s.position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InekfState {
    pub pose: ExtendedPose,
    pub covariance: Matrix9,
}

fn error_transition(g: &Vec3, dt: f64) -> Matrix9 {
    let gx = skew(g);
    let mut phi = Matrix9::identity();
    set_block(&mut phi, 3, 0, &(gx * dt));
    set_block(&mut phi, 6, 0, &(gx * (dt * dt)));
    set_block(&mut phi, 6, 3, &(Matrix3::identity() * dt));
    phi
}

fn body_noise(noise: &ProcessNoise, dt: f64) -> Matrix9 {
    let mut q = Matrix9::zeros();
    let i = Matrix3::identity();
    set_block(&mut q, 0, 0, &(i * (noise.gyro_density * noise.gyro_density * dt)));
    set_block(&mut q, 3, 3, &(i * (noise.accel_density * noise.accel_density * dt)));
    set_block(&mut q, 6, 6, &(i * (noise.position_density * noise.position_density * dt)));
    q
}

pub fn inekf_predict(
    state: &InekfState,
    burst: &ImuBurst,
    biases: &ImuBiases,
    gravity: &GravityModel,
    noise: &ProcessNoise,
) -> Result<InekfState> {
    if burst.is_empty() {
        return Err(Error::InvalidArgument("empty IMU burst".into()));
    }
    let g = gravity.vector();
    let mut x = state.pose;
    let mut p = state.covariance;
    for (dt, s) in burst.steps() {
        x.rotation = propagate_orientation(&x.rotation, &s.gyro, &biases.gyro, dt)?;
        x.velocity = propagate_velocity(&x.velocity, &x.rotation, &s.accel, &biases.accel, &g, dt)?;
        x.position = propagate_position(&x.position, &x.velocity, dt)?;
        let phi = error_transition(&g, dt);
        let ad = x.adjoint();
        p = phi * p * phi.transpose() + ad * body_noise(noise, dt) * ad.transpose();
    }
    symmetrize(&mut p);
    check_covariance(&p)?;
    Ok(InekfState { pose: x, covariance: p })
}

/// Innovation `[z_v − v̂; Log(q_A ⊗ q̂⁻¹)]`, with `r_meas` ordered as in the EKF.
pub fn inekf_update(state: &InekfState, dvl: &Vec3, ahrs: &UnitQuaternion, r_meas: &Matrix6<f64>) -> Result<InekfState> {
    if !(dvl.iter().all(|v| v.is_finite()) && ahrs.is_finite()) {
        return Err(Error::NonFinite { what: "measurement", row: 0 });
    }
    let x = &state.pose;
    let dv = dvl - x.velocity;
    let dq = (*ahrs * x.rotation.conjugate()).to_rotation_vector();
    let innovation = Vector6::new(dv.x, dv.y, dv.z, dq.x, dq.y, dq.z);
    let mut h = SMatrix::<f64, 6, 9>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&-skew(&x.velocity));
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    let (dx, p) = joseph_update(&state.covariance, &h, r_meas, &innovation)?;
    check_covariance(&p)?;
    Ok(InekfState {
        pose: ExtendedPose::exp(&dx).compose(x),
        covariance: p,
    })
}

/// InEKF over a synced epoch stream, initialized like the cascade.
#[derive(Debug, Clone)]
pub struct Inekf {
    config: FilterConfig,
    state: InekfState,
    last: EstimateRow,
}

impl Inekf {
    pub fn new(config: FilterConfig, first: &SyncedEpoch) -> Result<Self> {
        config.validate()?;
        let mean = config.initial_state(first);
        Ok(Self {
            state: InekfState {
                pose: mean.into(),
                covariance: config.initial_covariance(),
            },
            config,
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

    pub fn state(&self) -> &InekfState {
        &self.state
    }

    pub fn last(&self) -> &EstimateRow {
        &self.last
    }

    pub fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        let c = &self.config;
        let pred = inekf_predict(&self.state, &epoch.imu_burst, &c.biases, &c.gravity, &c.process_noise)?;
        let post = inekf_update(&pred, &epoch.dvl.velocity, &epoch.ahrs.orientation, &c.measurement_covariance())?;
        self.state = post;
        self.last = EstimateRow {
            t: epoch.t,
            state: self.state.pose.nav_state(),
            flag: OutputFlag::Ok,
        };
        Ok(self.last)
    }
}
