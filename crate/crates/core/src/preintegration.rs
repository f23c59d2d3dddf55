//! Discrete IMU propagation: explicit Euler per IMU sample.

use alloc::format;

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::rotation::{right_product_matrix, UnitQuaternion, Vec3};
use crate::sensors::ImuBurst;

/// Largest accepted IMU step.
pub const MAX_DT: f64 = 0.1;
/// Steps above this are accepted with a warning.
pub const WARN_DT: f64 = 0.05;
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct ImuBiases {
    pub accel: Vec3,
    pub gyro: Vec3,
}

/// Navigation-frame gravity. NED by default, so `g = (0, 0, +9.81)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GravityModel {
    g: Vec3,
}

impl Default for GravityModel {
    fn default() -> Self {
        Self {
            g: Vec3::new(0.0, 0.0, STANDARD_GRAVITY),
        }
    }
}

impl GravityModel {
    /// Accepts `|g|` in `[9.7, 9.9]`.
    pub fn new(g: Vec3) -> Result<Self> {
        let n = g.norm();
        if !(9.7..=9.9).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "gravity magnitude {n} outside [9.7, 9.9]; use GravityModel::with_override"
            )));
        }
        Ok(Self { g })
    }

    /// Any finite vector, for tests and non-terrestrial setups.
    pub fn with_override(g: Vec3) -> Result<Self> {
        if !g.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("gravity must be finite".into()));
        }
        Ok(Self { g })
    }

    pub fn vector(&self) -> Vec3 {
        self.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NavState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: UnitQuaternion,
}

impl NavState {
    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|c| c.is_finite()) && self.orientation.is_finite()
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive and finite, got {dt}")));
    }
    Ok(())
}

fn check_orientation_dt(dt: f64) -> Result<()> {
    check_dt(dt)?;
    if dt > MAX_DT {
        return Err(Error::InvalidArgument(format!("dt {dt} s exceeds {MAX_DT} s")));
    }
    if dt > WARN_DT {
        log::warn!("IMU step {dt} s exceeds {WARN_DT} s; Euler integration error grows");
    }
    Ok(())
}

/// `M = I + dt/2 · R((0, ω))`, so that `q ⊗ (1, ω dt/2) = M q`.
pub fn orientation_step_matrix(rate: &Vec3, dt: f64) -> Matrix4<f64> {
    Matrix4::identity() + right_product_matrix(&[0.0, rate.x, rate.y, rate.z]) * (0.5 * dt)
}

/// `q' = normalize(q + dt · ½ q ⊗ (0, ω − b))`.
pub fn propagate_orientation(q: &UnitQuaternion, gyro: &Vec3, gyro_bias: &Vec3, dt: f64) -> Result<UnitQuaternion> {
    check_orientation_dt(dt)?;
    let next = orientation_step_matrix(&(gyro - gyro_bias), dt) * q.to_vector();
    UnitQuaternion::from_vector(&next)
}

/// `v' = v + dt · (R(q)(a − b_a) + g)`.
pub fn propagate_velocity(
    v: &Vec3,
    q: &UnitQuaternion,
    accel: &Vec3,
    accel_bias: &Vec3,
    g: &Vec3,
    dt: f64,
) -> Result<Vec3> {
    check_dt(dt)?;
    Ok(v + (q.rotate(&(accel - accel_bias)) + g) * dt)
}

/// `p' = p + dt · v`.
pub fn propagate_position(p: &Vec3, v: &Vec3, dt: f64) -> Result<Vec3> {
    check_dt(dt)?;
    Ok(p + v * dt)
}

/// Orientation, then velocity (with the new attitude), then position (with
/// the new velocity), once per IMU sample.
pub fn preintegrate_burst(
    state: &NavState,
    burst: &ImuBurst,
    biases: &ImuBiases,
    gravity: &GravityModel,
) -> Result<NavState> {
    if burst.is_empty() {
        return Err(Error::InvalidArgument("empty IMU burst".into()));
    }
    let g = gravity.vector();
    let mut s = *state;
    for (dt, sample) in burst.steps() {
        s.orientation = propagate_orientation(&s.orientation, &sample.gyro, &biases.gyro, dt)?;
        s.velocity = propagate_velocity(&s.velocity, &s.orientation, &sample.accel, &biases.accel, &g, dt)?;
        s.position = propagate_position(&s.position, &s.velocity, dt)?;
    }
    Ok(s)
}

/// Step matrices of the orientation map over one burst, validated once.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSteps {
    matrices: alloc::vec::Vec<Matrix4<f64>>,
}

impl OrientationSteps {
    pub fn new(burst: &ImuBurst, gyro_bias: &Vec3) -> Result<Self> {
        if burst.is_empty() {
            return Err(Error::InvalidArgument("empty IMU burst".into()));
        }
        let mut matrices = alloc::vec::Vec::with_capacity(burst.len());
        for (dt, s) in burst.steps() {
            check_orientation_dt(dt)?;
            matrices.push(orientation_step_matrix(&(s.gyro - gyro_bias), dt));
        }
        Ok(Self { matrices })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Applies every step with renormalization, on a raw 4-vector.
    pub fn apply(&self, x: &Vector4<f64>) -> Vector4<f64> {
        self.matrices.iter().fold(*x, |acc, m| {
            let y = m * acc;
            y / y.norm()
        })
    }

    /// Jacobian of [`apply`](Self::apply): product of `(I − n nᵀ) M / |M x|`.
    pub fn jacobian(&self, x: &Vector4<f64>) -> Matrix4<f64> {
        let mut acc = *x;
        let mut jac = Matrix4::identity();
        for m in &self.matrices {
            let y = m * acc;
            let norm = y.norm();
            let n = y / norm;
            let step = (Matrix4::identity() - n * n.transpose()) * m / norm;
            jac = step * jac;
            acc = n;
        }
        jac
    }

    /// Attitude after each step, starting from `q`.
    pub fn attitudes(&self, q: &UnitQuaternion) -> impl Iterator<Item = UnitQuaternion> + '_ {
        let mut cur = *q;
        self.matrices.iter().map(move |m| {
            let y = m * cur.to_vector();
            // step matrices have det >= 1, so a unit input never collapses
            cur = UnitQuaternion::from_vector(&y).unwrap_or(cur);
            cur
        })
    }
}

/// Navigation-frame velocity increment of one burst along a fixed attitude
/// trajectory: `Σ dt_j (R(q_j)(a_j − b_a) + g)`, `q_j` the attitude after step `j`.
pub fn velocity_increment(
    burst: &ImuBurst,
    start_attitude: &UnitQuaternion,
    biases: &ImuBiases,
    gravity: &GravityModel,
) -> Result<(Vec3, UnitQuaternion)> {
    let g = gravity.vector();
    let mut q = *start_attitude;
    let mut dv = Vec3::zeros();
    if burst.is_empty() {
        return Err(Error::InvalidArgument("empty IMU burst".into()));
    }
    for (dt, s) in burst.steps() {
        q = propagate_orientation(&q, &s.gyro, &biases.gyro, dt)?;
        dv += (q.rotate(&(s.accel - biases.accel)) + g) * dt;
    }
    Ok((dv, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::ImuSample;
    use alloc::vec::Vec;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    fn burst_from(t_start: f64, dt: f64, n: usize, accel: Vec3, gyro: Vec3) -> ImuBurst {
        let samples = (1..=n)
            .map(|j| ImuSample {
                t: t_start + j as f64 * dt,
                accel,
                gyro,
            })
            .collect();
        ImuBurst::new(t_start, samples)
    }

    #[test]
    fn zero_effective_rate_leaves_attitude() {
        let q = UnitQuaternion::from_euler(0.1, 0.2, 0.3);
        let w = Vec3::new(0.4, -0.1, 0.2);
        assert_eq!(propagate_orientation(&q, &w, &w, 0.01).unwrap(), q);
        assert_eq!(propagate_orientation(&q, &Vec3::zeros(), &Vec3::zeros(), 0.07).unwrap(), q);
    }

    #[test]
    fn quarter_turn_yaw_in_one_second() {
        let mut q = UnitQuaternion::IDENTITY;
        let w = Vec3::new(0.0, 0.0, FRAC_PI_2);
        for _ in 0..100 {
            q = propagate_orientation(&q, &w, &Vec3::zeros(), 0.01).unwrap();
        }
        let oracle = UnitQuaternion::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        assert!(q.angular_distance(&oracle) < 1e-3);
    }

    #[test]
    fn dt_contract() {
        let q = UnitQuaternion::IDENTITY;
        let z = Vec3::zeros();
        assert!(propagate_orientation(&q, &z, &z, 0.0).is_err());
        assert!(propagate_orientation(&q, &z, &z, -0.01).is_err());
        assert!(propagate_orientation(&q, &z, &z, 0.11).is_err());
        assert!(propagate_orientation(&q, &z, &z, 0.1).is_ok());
        assert!(propagate_velocity(&z, &q, &z, &z, &z, 0.0).is_err());
        assert!(propagate_position(&z, &z, -1.0).is_err());
    }

    #[test]
    fn hover_cancels_gravity() {
        let g = GravityModel::default().vector();
        let v = propagate_velocity(&Vec3::zeros(), &UnitQuaternion::IDENTITY, &Vec3::new(0.0, 0.0, -9.81), &Vec3::zeros(), &g, 0.01)
            .unwrap();
        assert_eq!(v, Vec3::zeros());
    }

    #[test]
    fn forward_accel_euler_step() {
        let g = GravityModel::default().vector();
        let v = propagate_velocity(&Vec3::zeros(), &UnitQuaternion::IDENTITY, &Vec3::new(1.0, 0.0, -9.81), &Vec3::zeros(), &g, 0.01)
            .unwrap();
        assert_abs_diff_eq!(v, Vec3::new(0.01, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn yawed_accel_points_along_nav_y() {
        let g = GravityModel::default().vector();
        let q = UnitQuaternion::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        let dv = propagate_velocity(&Vec3::zeros(), &q, &Vec3::new(1.0, 0.0, -9.81), &Vec3::zeros(), &g, 0.01).unwrap();
        let oracle = q.rotate(&Vec3::x()) * 0.01;
        assert_abs_diff_eq!(dv, oracle, epsilon = 1e-15);
        assert!(dv.y > 0.0 && dv.x.abs() < 1e-15);
    }

    #[test]
    fn position_steps() {
        let z = Vec3::zeros();
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(propagate_position(&z, &z, 0.3).unwrap(), z);
        assert_abs_diff_eq!(propagate_position(&z, &v, 0.2).unwrap(), Vec3::new(0.2, 0.4, 0.6), epsilon = 1e-15);
        let half = propagate_position(&propagate_position(&z, &v, 0.25).unwrap(), &v, 0.25).unwrap();
        assert_eq!(half, propagate_position(&z, &v, 0.5).unwrap());
    }

    #[test]
    fn stationary_burst_is_fixed_point() {
        let q = UnitQuaternion::from_euler(0.05, -0.1, 1.2);
        let gravity = GravityModel::default();
        let accel = -q.to_rotation_matrix().transpose() * gravity.vector();
        let burst = burst_from(0.0, 0.01, 20, accel, Vec3::zeros());
        let s0 = NavState {
            position: Vec3::new(1.0, 2.0, 3.0),
            velocity: Vec3::zeros(),
            orientation: q,
        };
        let s1 = preintegrate_burst(&s0, &burst, &ImuBiases::default(), &gravity).unwrap();
        assert_abs_diff_eq!(s1.position, s0.position, epsilon = 1e-9);
        assert_abs_diff_eq!(s1.velocity, s0.velocity, epsilon = 1e-9);
        assert!(s1.orientation.angular_distance(&q) < 1e-9);
    }

    #[test]
    fn constant_acceleration_from_rest() {
        let gravity = GravityModel::default();
        let burst = burst_from(0.0, 0.01, 100, Vec3::new(1.0, 0.0, -9.81), Vec3::zeros());
        let s = preintegrate_burst(&NavState::default(), &burst, &ImuBiases::default(), &gravity).unwrap();
        assert_abs_diff_eq!(s.velocity, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-3);
        assert_abs_diff_eq!(s.position, Vec3::new(0.5, 0.0, 0.0), epsilon = 1e-2);
    }

    #[test]
    fn single_sample_burst_is_one_composed_step() {
        let gravity = GravityModel::default();
        let burst = burst_from(0.0, 0.01, 1, Vec3::new(0.3, -0.2, -9.7), Vec3::new(0.1, 0.2, -0.3));
        let s0 = NavState {
            position: Vec3::new(0.5, 0.0, 0.0),
            velocity: Vec3::new(0.1, 0.2, 0.0),
            orientation: UnitQuaternion::from_yaw(0.4),
        };
        let s = preintegrate_burst(&s0, &burst, &ImuBiases::default(), &gravity).unwrap();
        let smp = burst.samples[0];
        let q = propagate_orientation(&s0.orientation, &smp.gyro, &Vec3::zeros(), 0.01).unwrap();
        let v = propagate_velocity(&s0.velocity, &q, &smp.accel, &Vec3::zeros(), &gravity.vector(), 0.01).unwrap();
        let p = propagate_position(&s0.position, &v, 0.01).unwrap();
        assert_eq!(s, NavState { position: p, velocity: v, orientation: q });
    }

    #[test]
    fn halving_dt_shrinks_error_at_least_first_order() {
        let rot_err = |dt: f64| {
            let w = 0.5;
            let n = (1.0 / dt).round() as usize;
            let burst = burst_from(0.0, dt, n, Vec3::zeros(), Vec3::new(0.0, 0.0, w));
            let zero_g = GravityModel::with_override(Vec3::zeros()).unwrap();
            let s = preintegrate_burst(&NavState::default(), &burst, &ImuBiases::default(), &zero_g).unwrap();
            s.orientation.angular_distance(&UnitQuaternion::from_yaw(w))
        };
        let pos_err = |dt: f64| {
            let n = (2.0 / dt).round() as usize;
            let burst = burst_from(0.0, dt, n, Vec3::new(1.0, 0.0, -9.81), Vec3::zeros());
            let s = preintegrate_burst(&NavState::default(), &burst, &ImuBiases::default(), &GravityModel::default()).unwrap();
            (s.position - Vec3::new(2.0, 0.0, 0.0)).norm()
        };
        for dt in [0.04, 0.02] {
            assert!(rot_err(dt) / rot_err(dt / 2.0) >= 1.8);
            assert!(pos_err(dt) / pos_err(dt / 2.0) >= 1.8);
        }
    }

    #[test]
    fn analytic_orientation_jacobian_matches_central_differences() {
        let burst = burst_from(0.0, 0.01, 20, Vec3::zeros(), Vec3::new(0.3, -0.4, 0.8));
        let steps = OrientationSteps::new(&burst, &Vec3::zeros()).unwrap();
        let x = UnitQuaternion::from_euler(0.2, 0.1, -0.7).to_vector();
        let jac = steps.jacobian(&x);
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let col = (steps.apply(&xp) - steps.apply(&xm)) / (2.0 * h);
            assert_abs_diff_eq!(jac.column(c).into_owned(), col, epsilon = 1e-8);
        }
    }

    #[test]
    fn velocity_increment_matches_preintegration() {
        let gravity = GravityModel::default();
        let burst = burst_from(0.0, 0.01, 20, Vec3::new(0.2, 0.1, -9.7), Vec3::new(0.0, 0.1, 0.3));
        let q0 = UnitQuaternion::from_yaw(1.0);
        let s0 = NavState {
            orientation: q0,
            ..Default::default()
        };
        let s = preintegrate_burst(&s0, &burst, &ImuBiases::default(), &gravity).unwrap();
        let (dv, q1) = velocity_increment(&burst, &q0, &ImuBiases::default(), &gravity).unwrap();
        assert_abs_diff_eq!(dv, s.velocity, epsilon = 1e-14);
        assert_eq!(q1, s.orientation);
        let steps = OrientationSteps::new(&burst, &Vec3::zeros()).unwrap();
        let last: Vec<_> = steps.attitudes(&q0).collect();
        assert!(last.last().unwrap().angular_distance(&q1) < 1e-14);
    }

    #[test]
    fn gravity_bounds() {
        assert!(GravityModel::new(Vec3::new(0.0, 0.0, 9.81)).is_ok());
        assert!(GravityModel::new(Vec3::new(0.0, 0.0, 1.62)).is_err());
        assert!(GravityModel::with_override(Vec3::new(0.0, 0.0, 1.62)).is_ok());
    }

    proptest! {
        #[test]
        fn orientation_step_stays_unit(
            r in -1.0..1.0f64, p in -1.0..1.0f64, y in -3.0..3.0f64,
            wx in -2.0..2.0f64, wy in -2.0..2.0f64, wz in -2.0..2.0f64,
            dt in 0.001..0.05f64,
        ) {
            let q = UnitQuaternion::from_euler(r, p, y);
            let q1 = propagate_orientation(&q, &Vec3::new(wx, wy, wz), &Vec3::zeros(), dt).unwrap();
            prop_assert!((q1.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn zero_input_leaves_state_fixed(
            px in -10.0..10.0f64, yaw in -3.0..3.0f64, n in 1usize..30,
        ) {
            let gravity = GravityModel::with_override(Vec3::zeros()).unwrap();
            let burst = burst_from(0.0, 0.01, n, Vec3::zeros(), Vec3::zeros());
            let s0 = NavState { position: Vec3::new(px, 0.0, 0.0), velocity: Vec3::zeros(), orientation: UnitQuaternion::from_yaw(yaw) };
            let s = preintegrate_burst(&s0, &burst, &ImuBiases::default(), &gravity).unwrap();
            prop_assert_eq!(s.position, s0.position);
            prop_assert_eq!(s.velocity, s0.velocity);
            prop_assert!(s.orientation.angular_distance(&s0.orientation) < 1e-12);
        }
    }
}
