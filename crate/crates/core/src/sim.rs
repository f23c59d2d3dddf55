//! Synthetic trajectories and sensor streams.
//!
//! Sensors are sampled from analytic derivatives of the trajectory:
//! gyro = body rates, accel = Rᵀ(a − g), DVL = v, AHRS = q. Noise is added
//! per channel from independent ChaCha20 streams of one seed:
//! 0 accel, 1 gyro, 2 DVL, 3 AHRS, 4 GPS.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::preintegration::{GravityModel, ImuBiases, NavState, MAX_DT};
use crate::rotation::{UnitQuaternion, Vec3};
use crate::sensors::{
    ne_to_latlon, AhrsSample, DvlFrame, DvlSample, GpsFix, GroundTruthSample, ImuSample,
};

pub const CHANNEL_ACCEL: u64 = 0;
pub const CHANNEL_GYRO: u64 = 1;
pub const CHANNEL_DVL: u64 = 2;
pub const CHANNEL_AHRS: u64 = 3;
pub const CHANNEL_GPS: u64 = 4;

/// Largest yaw rate the generator accepts, in rad/s.
pub const MAX_YAW_RATE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Turn {
    #[default]
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case")
)]
pub enum TrajectoryKind {
    Stationary,
    Line,
    Circle {
        radius: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        turn: Turn,
    },
    /// Legs of `leg_length` joined by alternating semicircles of `turn_radius`.
    Lawnmower { leg_length: f64, turn_radius: f64 },
    /// Closed Catmull-Rom loop through the waypoints, timed by chord length.
    Spline { waypoints: Vec<[f64; 3]> },
}

impl TrajectoryKind {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryKind::Stationary => "stationary",
            TrajectoryKind::Line => "line",
            TrajectoryKind::Circle { .. } => "circle",
            TrajectoryKind::Lawnmower { .. } => "lawnmower",
            TrajectoryKind::Spline { .. } => "spline",
        }
    }
}

/// Sinusoidal roll/pitch oscillation superimposed on the path attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Wobble {
    pub roll_amplitude: f64,
    pub pitch_amplitude: f64,
    pub period: f64,
}

/// Accel and gyro densities are white-noise densities (unit/√Hz); the
/// per-sample std is `density · √rate`. DVL, AHRS and GPS values are
/// per-sample standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct NoiseSpec {
    pub accel_density: f64,
    pub gyro_density: f64,
    pub dvl_std: f64,
    pub ahrs_std: f64,
    pub gps_std: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Small ROV sensor suite: MEMS IMU, DVL, AHRS and a surface GPS.
    pub fn bluerov2() -> Self {
        Self {
            accel_density: 0.002,
            gyro_density: 2e-4,
            dvl_std: 0.02,
            ahrs_std: 0.01,
            gps_std: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("accel_density", self.accel_density),
            ("gyro_density", self.gyro_density),
            ("dvl_std", self.dvl_std),
            ("ahrs_std", self.ahrs_std),
            ("gps_std", self.gps_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Scenario(format!("noise.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct ScenarioSpec {
    pub trajectory: TrajectoryKind,
    /// m/s.
    pub speed: f64,
    /// s.
    pub duration: f64,
    pub imu_rate: f64,
    /// DVL and AHRS rate.
    pub meas_rate: f64,
    pub gps_rate: f64,
    /// Initial heading, rad (0 = north).
    pub heading: f64,
    pub start: [f64; 3],
    pub wobble: Option<Wobble>,
    pub noise: NoiseSpec,
    pub biases: ImuBiases,
    pub dvl_frame: DvlFrame,
    /// GPS origin `(lat, lon)` in degrees.
    pub origin: [f64; 2],
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            trajectory: TrajectoryKind::Lawnmower {
                leg_length: 20.0,
                turn_radius: 3.0,
            },
            speed: 0.5,
            duration: 100.0,
            imu_rate: 100.0,
            meas_rate: 5.0,
            gps_rate: 2.0,
            heading: 0.0,
            start: [0.0; 3],
            wobble: None,
            noise: NoiseSpec::none(),
            biases: ImuBiases::default(),
            dvl_frame: DvlFrame::Nav,
            origin: [41.7, 3.0],
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn stationary(duration: f64) -> Self {
        Self {
            trajectory: TrajectoryKind::Stationary,
            speed: 0.0,
            duration,
            ..Self::default()
        }
    }

    pub fn line(speed: f64, duration: f64) -> Self {
        Self {
            trajectory: TrajectoryKind::Line,
            speed,
            duration,
            ..Self::default()
        }
    }

    pub fn circle(radius: f64, speed: f64, duration: f64) -> Self {
        Self {
            trajectory: TrajectoryKind::Circle {
                radius,
                turn: Turn::Right,
            },
            speed,
            duration,
            ..Self::default()
        }
    }

    pub fn lawnmower(leg_length: f64, turn_radius: f64, speed: f64, duration: f64) -> Self {
        Self {
            trajectory: TrajectoryKind::Lawnmower { leg_length, turn_radius },
            speed,
            duration,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Scenario(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("duration", self.duration)?;
        positive("imu_rate", self.imu_rate)?;
        positive("meas_rate", self.meas_rate)?;
        positive("gps_rate", self.gps_rate)?;
        if self.imu_rate < self.meas_rate {
            return Err(Error::Scenario(format!(
                "imu_rate ({}) must be >= meas_rate ({})",
                self.imu_rate, self.meas_rate
            )));
        }
        if 1.0 / self.imu_rate > MAX_DT {
            return Err(Error::Scenario(format!("imu_rate must be >= {} Hz", 1.0 / MAX_DT)));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::Scenario(format!("speed must be >= 0, got {}", self.speed)));
        }
        if !self.heading.is_finite() || self.start.iter().any(|c| !c.is_finite()) {
            return Err(Error::Scenario("heading and start must be finite".into()));
        }
        self.noise.validate()?;
        if let Some(w) = &self.wobble {
            positive("wobble.period", w.period)?;
            if !(w.roll_amplitude.abs() < 1.0 && w.pitch_amplitude.abs() < 1.0) {
                return Err(Error::Scenario("wobble amplitudes must be below 1 rad".into()));
            }
        }
        let moving = !matches!(self.trajectory, TrajectoryKind::Stationary);
        if moving {
            positive("speed", self.speed)?;
        }
        match &self.trajectory {
            TrajectoryKind::Stationary | TrajectoryKind::Line => {}
            TrajectoryKind::Circle { radius, .. } => {
                positive("circle radius", *radius)?;
                self.check_yaw_rate(*radius)?;
            }
            TrajectoryKind::Lawnmower { leg_length, turn_radius } => {
                positive("lawnmower turn_radius", *turn_radius)?;
                if !(*leg_length >= 0.0 && leg_length.is_finite()) {
                    return Err(Error::Scenario(format!("lawnmower leg_length must be >= 0, got {leg_length}")));
                }
                self.check_yaw_rate(*turn_radius)?;
            }
            TrajectoryKind::Spline { waypoints } => {
                if waypoints.len() < 3 {
                    return Err(Error::Scenario("spline needs at least 3 waypoints".into()));
                }
                for (i, w) in waypoints.iter().enumerate() {
                    let next = &waypoints[(i + 1) % waypoints.len()];
                    if w.iter().chain(next.iter()).any(|c| !c.is_finite()) {
                        return Err(Error::Scenario("spline waypoints must be finite".into()));
                    }
                    let d = Vec3::from(*next) - Vec3::from(*w);
                    if d.xy().norm() < 1e-6 {
                        return Err(Error::Scenario(format!("spline waypoints {i} and {} coincide horizontally", (i + 1) % waypoints.len())));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_yaw_rate(&self, radius: f64) -> Result<()> {
        let rate = self.speed / radius;
        if rate > MAX_YAW_RATE {
            return Err(Error::Scenario(format!(
                "speed {} m/s on radius {radius} m needs yaw rate {rate} rad/s (max {MAX_YAW_RATE})",
                self.speed
            )));
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "{} scenario: {} s at {} m/s, IMU {} Hz, DVL/AHRS {} Hz, seed {}",
            self.trajectory.name(),
            self.duration,
            self.speed,
            self.imu_rate,
            self.meas_rate,
            self.seed
        )
    }
}

/// Position, velocity and acceleration in the navigation frame plus attitude
/// and body rates at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub orientation: UnitQuaternion,
    pub body_rate: Vec3,
}

impl Kinematics {
    pub fn nav_state(&self) -> NavState {
        NavState {
            position: self.position,
            velocity: self.velocity,
            orientation: self.orientation,
        }
    }
}

struct PathPoint {
    p: Vec3,
    v: Vec3,
    a: Vec3,
}

struct Spline {
    points: Vec<Vec3>,
    tangents: Vec<Vec3>,
    times: Vec<f64>,
    period: f64,
}

impl Spline {
    fn new(waypoints: &[[f64; 3]], speed: f64) -> Self {
        let points: Vec<Vec3> = waypoints.iter().map(|w| Vec3::from(*w)).collect();
        let n = points.len();
        let seg: Vec<f64> = (0..n).map(|i| (points[(i + 1) % n] - points[i]).norm() / speed).collect();
        let tangents = (0..n)
            .map(|i| {
                let prev = (i + n - 1) % n;
                (points[(i + 1) % n] - points[prev]) / (seg[prev] + seg[i])
            })
            .collect();
        let period = seg.iter().sum();
        Self {
            points,
            tangents,
            times: seg,
            period,
        }
    }

    fn eval(&self, t: f64) -> PathPoint {
        let n = self.points.len();
        let mut tau = t - (t / self.period).floor() * self.period;
        let mut i = 0;
        while i + 1 < n && tau >= self.times[i] {
            tau -= self.times[i];
            i += 1;
        }
        let h = self.times[i];
        let u = (tau / h).clamp(0.0, 1.0);
        let (p0, p1) = (self.points[i], self.points[(i + 1) % n]);
        let (m0, m1) = (self.tangents[i] * h, self.tangents[(i + 1) % n] * h);
        let (u2, u3) = (u * u, u * u * u);
        let p = p0 * (2.0 * u3 - 3.0 * u2 + 1.0) + m0 * (u3 - 2.0 * u2 + u) + p1 * (-2.0 * u3 + 3.0 * u2) + m1 * (u3 - u2);
        let dp = p0 * (6.0 * u2 - 6.0 * u) + m0 * (3.0 * u2 - 4.0 * u + 1.0) + p1 * (-6.0 * u2 + 6.0 * u) + m1 * (3.0 * u2 - 2.0 * u);
        let ddp = p0 * (12.0 * u - 6.0) + m0 * (6.0 * u - 4.0) + p1 * (-12.0 * u + 6.0) + m1 * (6.0 * u - 2.0);
        PathPoint {
            p,
            v: dp / h,
            a: ddp / (h * h),
        }
    }
}

/// Analytic trajectory for a validated spec.
pub struct Trajectory {
    spec: ScenarioSpec,
    spline: Option<Spline>,
}

impl Trajectory {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let spline = match &spec.trajectory {
            TrajectoryKind::Spline { waypoints } => Some(Spline::new(waypoints, spec.speed)),
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            spline,
        })
    }

    fn forward(&self) -> Vec3 {
        Vec3::new(self.spec.heading.cos(), self.spec.heading.sin(), 0.0)
    }

    /// Right of the initial heading in NED (clockwise from above).
    fn right(&self) -> Vec3 {
        Vec3::new(-self.spec.heading.sin(), self.spec.heading.cos(), 0.0)
    }

    fn arc(centre: Vec3, radius: f64, heading: Vec3, inward: Vec3, s: f64, phi: f64) -> PathPoint {
        let (sp, cp) = phi.sin_cos();
        PathPoint {
            p: centre + (heading * sp - inward * cp) * radius,
            v: (heading * cp + inward * sp) * s,
            a: (inward * cp - heading * sp) * (s * s / radius),
        }
    }

    fn path(&self, t: f64) -> PathPoint {
        let s = self.spec.speed;
        let start = Vec3::from(self.spec.start);
        let f = self.forward();
        let r = self.right();
        let mut pp = match &self.spec.trajectory {
            TrajectoryKind::Stationary => PathPoint {
                p: Vec3::zeros(),
                v: Vec3::zeros(),
                a: Vec3::zeros(),
            },
            TrajectoryKind::Line => PathPoint {
                p: f * (s * t),
                v: f * s,
                a: Vec3::zeros(),
            },
            TrajectoryKind::Circle { radius, turn } => {
                let inward = match turn {
                    Turn::Right => r,
                    Turn::Left => -r,
                };
                Self::arc(inward * *radius, *radius, f, inward, s, s * t / radius)
            }
            TrajectoryKind::Lawnmower { leg_length, turn_radius } => {
                let (l, rad) = (*leg_length, *turn_radius);
                let half = l + PI * rad;
                let period = 2.0 * half;
                let dist = s * t;
                let laps = (dist / period).floor();
                let sigma = dist - laps * period;
                let shift = r * (4.0 * rad * laps);
                let mut pp = if sigma < l {
                    PathPoint {
                        p: f * sigma,
                        v: f * s,
                        a: Vec3::zeros(),
                    }
                } else if sigma < half {
                    Self::arc(f * l + r * rad, rad, f, r, s, (sigma - l) / rad)
                } else if sigma < half + l {
                    PathPoint {
                        p: f * (l - (sigma - half)) + r * (2.0 * rad),
                        v: -f * s,
                        a: Vec3::zeros(),
                    }
                } else {
                    Self::arc(r * (3.0 * rad), rad, -f, r, s, (sigma - half - l) / rad)
                };
                pp.p += shift;
                pp
            }
            TrajectoryKind::Spline { .. } => {
                let sp = self.spline.as_ref().expect("spline built in new");
                let pp = sp.eval(t);
                PathPoint {
                    p: pp.p - sp.points[0],
                    ..pp
                }
            }
        };
        pp.p += start;
        pp
    }

    pub fn eval(&self, t: f64) -> Kinematics {
        let pp = self.path(t);
        let (yaw, yaw_rate) = match self.spec.trajectory {
            TrajectoryKind::Stationary => (self.spec.heading, 0.0),
            _ => {
                let (vx, vy) = (pp.v.x, pp.v.y);
                let h2 = vx * vx + vy * vy;
                if h2 < 1e-18 {
                    (self.spec.heading, 0.0)
                } else {
                    (vy.atan2(vx), (vx * pp.a.y - vy * pp.a.x) / h2)
                }
            }
        };
        let (roll, pitch, roll_rate, pitch_rate) = match self.spec.wobble {
            Some(w) => {
                let om = 2.0 * PI / w.period;
                let (sr, cr) = (om * t).sin_cos();
                let (sp, cp) = (om * t + PI / 3.0).sin_cos();
                (
                    w.roll_amplitude * sr,
                    w.pitch_amplitude * sp,
                    w.roll_amplitude * om * cr,
                    w.pitch_amplitude * om * cp,
                )
            }
            None => (0.0, 0.0, 0.0, 0.0),
        };
        let (sphi, cphi) = roll.sin_cos();
        let (sth, cth) = pitch.sin_cos();
        let body_rate = Vec3::new(
            roll_rate - yaw_rate * sth,
            pitch_rate * cphi + yaw_rate * sphi * cth,
            yaw_rate * cphi * cth - pitch_rate * sphi,
        );
        Kinematics {
            position: pp.p,
            velocity: pp.v,
            acceleration: pp.a,
            orientation: UnitQuaternion::from_euler(roll, pitch, yaw),
            body_rate,
        }
    }
}

/// Timestamped true state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub state: NavState,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorStreams {
    pub imu: Vec<ImuSample>,
    pub dvl: Vec<DvlSample>,
    pub ahrs: Vec<AhrsSample>,
    pub gps: Vec<GpsFix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRun {
    pub spec: ScenarioSpec,
    /// True state at every IMU timestamp.
    pub truth: Vec<TruthSample>,
    pub ideal: SensorStreams,
    pub noisy: SensorStreams,
}

impl SyntheticRun {
    /// Ground truth (position and attitude) at the measurement timestamps.
    pub fn ground_truth(&self) -> Vec<GroundTruthSample> {
        let traj = Trajectory::new(&self.spec).expect("spec validated at generation");
        self.ideal
            .dvl
            .iter()
            .map(|d| {
                let k = traj.eval(d.t);
                GroundTruthSample {
                    t: d.t,
                    position: k.position,
                    orientation: Some(k.orientation),
                }
            })
            .collect()
    }
}

fn sample_times(duration: f64, rate: f64) -> impl Iterator<Item = f64> {
    let n = (duration * rate + 1e-9).floor() as usize;
    (0..=n).map(move |j| j as f64 / rate)
}

pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticRun> {
    let traj = Trajectory::new(spec)?;
    let g = GravityModel::default().vector();
    let mut truth = Vec::new();
    let mut imu = Vec::new();
    for t in sample_times(spec.duration, spec.imu_rate) {
        let k = traj.eval(t);
        truth.push(TruthSample { t, state: k.nav_state() });
        imu.push(ImuSample {
            t,
            accel: k.orientation.to_rotation_matrix().transpose() * (k.acceleration - g),
            gyro: k.body_rate,
        });
    }
    let mut dvl = Vec::new();
    let mut ahrs = Vec::new();
    for t in sample_times(spec.duration, spec.meas_rate) {
        let k = traj.eval(t);
        let velocity = match spec.dvl_frame {
            DvlFrame::Nav => k.velocity,
            DvlFrame::Body => k.orientation.to_rotation_matrix().transpose() * k.velocity,
        };
        dvl.push(DvlSample { t, velocity });
        ahrs.push(AhrsSample {
            t,
            orientation: k.orientation,
        });
    }
    let [lat0, lon0] = spec.origin;
    let gps = sample_times(spec.duration, spec.gps_rate)
        .map(|t| {
            let p = traj.eval(t).position;
            let (lat, lon) = ne_to_latlon(p.x, p.y, lat0, lon0);
            GpsFix { t, lat, lon }
        })
        .collect();
    let ideal = SensorStreams { imu, dvl, ahrs, gps };
    let noisy = corrupt(&ideal, spec)?;
    Ok(SyntheticRun {
        spec: spec.clone(),
        truth,
        ideal,
        noisy,
    })
}

fn channel_rng(seed: u64, channel: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(channel);
    rng
}

fn gaussian3(rng: &mut ChaCha20Rng, std: f64) -> Vec3 {
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    Vec3::new(n(), n(), n()) * std
}

/// Adds white noise and constant IMU biases. Zero densities and zero biases
/// leave the streams bitwise unchanged.
pub fn corrupt(streams: &SensorStreams, spec: &ScenarioSpec) -> Result<SensorStreams> {
    spec.noise.validate()?;
    let n = &spec.noise;
    let b = &spec.biases;
    let mut out = streams.clone();

    let accel_std = n.accel_density * spec.imu_rate.sqrt();
    let gyro_std = n.gyro_density * spec.imu_rate.sqrt();
    let mut ra = channel_rng(spec.seed, CHANNEL_ACCEL);
    let mut rg = channel_rng(spec.seed, CHANNEL_GYRO);
    for s in &mut out.imu {
        if accel_std > 0.0 {
            s.accel += gaussian3(&mut ra, accel_std);
        }
        if b.accel != Vec3::zeros() {
            s.accel += b.accel;
        }
        if gyro_std > 0.0 {
            s.gyro += gaussian3(&mut rg, gyro_std);
        }
        if b.gyro != Vec3::zeros() {
            s.gyro += b.gyro;
        }
    }
    if n.dvl_std > 0.0 {
        let mut r = channel_rng(spec.seed, CHANNEL_DVL);
        for s in &mut out.dvl {
            s.velocity += gaussian3(&mut r, n.dvl_std);
        }
    }
    if n.ahrs_std > 0.0 {
        let mut r = channel_rng(spec.seed, CHANNEL_AHRS);
        for s in &mut out.ahrs {
            s.orientation = s.orientation * UnitQuaternion::from_rotation_vector(&gaussian3(&mut r, n.ahrs_std));
        }
        crate::sensors::enforce_hemisphere(&mut out.ahrs);
    }
    if n.gps_std > 0.0 {
        let mut r = channel_rng(spec.seed, CHANNEL_GPS);
        let [lat0, lon0] = spec.origin;
        for s in &mut out.gps {
            let (north, east) = crate::sensors::latlon_to_ne(s.lat, s.lon, lat0, lon0);
            let e = gaussian3(&mut r, n.gps_std);
            let (lat, lon) = ne_to_latlon(north + e.x, east + e.y, lat0, lon0);
            s.lat = lat;
            s.lon = lon;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preintegration::preintegrate_burst;
    use crate::sensors::{synchronize, SyncOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn noisy(spec: ScenarioSpec, noise: NoiseSpec) -> ScenarioSpec {
        ScenarioSpec { noise, ..spec }
    }

    #[test]
    fn stationary_streams_invert_hover() {
        let spec = ScenarioSpec {
            heading: 0.8,
            ..ScenarioSpec::stationary(5.0)
        };
        let run = generate(&spec).unwrap();
        let q = UnitQuaternion::from_yaw(0.8);
        let g = GravityModel::default().vector();
        let expected = -(q.to_rotation_matrix().transpose() * g);
        for s in &run.ideal.imu {
            assert_abs_diff_eq!(s.accel, expected, epsilon = 1e-12);
            assert_eq!(s.gyro, Vec3::zeros());
        }
        assert!(run.ideal.dvl.iter().all(|d| d.velocity == Vec3::zeros()));
        assert_eq!(run.ideal.imu.len(), 501);
        assert_eq!(run.ideal.dvl.len(), 26);
    }

    #[test]
    fn circle_yaw_rate_is_speed_over_radius() {
        let run = generate(&ScenarioSpec::circle(10.0, 0.5, 20.0)).unwrap();
        for s in &run.ideal.imu {
            assert_abs_diff_eq!(s.gyro, Vec3::new(0.0, 0.0, 0.05), epsilon = 1e-12);
        }
        let traj = Trajectory::new(&ScenarioSpec::circle(10.0, 0.5, 20.0)).unwrap();
        for t in [0.0, 3.0, 17.5] {
            let k = traj.eval(t);
            assert_abs_diff_eq!(k.velocity.norm(), 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!((k.position - Vec3::new(0.0, 10.0, 0.0)).norm(), 10.0, epsilon = 1e-12);
            assert_abs_diff_eq!(k.orientation.yaw(), 0.05 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = noisy(ScenarioSpec::default(), NoiseSpec::bluerov2());
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ScenarioSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().noisy, generate(&other).unwrap().noisy);
    }

    #[test]
    fn zero_noise_leaves_streams_unchanged() {
        let run = generate(&ScenarioSpec::default()).unwrap();
        assert_eq!(run.ideal, run.noisy);
    }

    #[test]
    fn dvl_noise_std_matches_spec() {
        let spec = ScenarioSpec {
            meas_rate: 100.0,
            noise: NoiseSpec {
                dvl_std: 0.1,
                ..NoiseSpec::none()
            },
            ..ScenarioSpec::stationary(100.0)
        };
        let run = generate(&spec).unwrap();
        let xs: Vec<f64> = run.noisy.dvl.iter().map(|d| d.velocity.x).collect();
        assert!(xs.len() >= 10_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let std = var.sqrt();
        assert!((0.097..=0.103).contains(&std), "std {std}");
    }

    #[test]
    fn accel_bias_shifts_sample_mean() {
        let spec = ScenarioSpec {
            noise: NoiseSpec {
                accel_density: 0.002,
                ..NoiseSpec::none()
            },
            biases: ImuBiases {
                accel: Vec3::new(0.1, 0.0, 0.0),
                gyro: Vec3::zeros(),
            },
            ..ScenarioSpec::stationary(100.0)
        };
        let run = generate(&spec).unwrap();
        let n = run.noisy.imu.len() as f64;
        let offset: f64 = run.noisy.imu.iter().zip(&run.ideal.imu).map(|(a, b)| a.accel.x - b.accel.x).sum::<f64>() / n;
        let sigma = 0.002 * spec.imu_rate.sqrt();
        assert!((offset - 0.1).abs() < 3.0 * sigma / n.sqrt(), "offset {offset}");
    }

    #[test]
    fn injected_noise_is_white() {
        let spec = ScenarioSpec {
            noise: NoiseSpec {
                gyro_density: 1e-3,
                ..NoiseSpec::none()
            },
            ..ScenarioSpec::stationary(100.0)
        };
        let run = generate(&spec).unwrap();
        let e: Vec<f64> = run.noisy.imu.iter().zip(&run.ideal.imu).map(|(a, b)| a.gyro.y - b.gyro.y).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var: f64 = e.iter().map(|x| (x - mean).powi(2)).sum();
        let lag1: f64 = e.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((lag1 / var).abs() < 0.05);
    }

    #[test]
    fn spec_errors() {
        assert!(matches!(ScenarioSpec::circle(1.0, 2.0, 10.0).validate(), Err(Error::Scenario(_))));
        assert!(ScenarioSpec::circle(0.0, 0.5, 10.0).validate().is_err());
        assert!(ScenarioSpec::line(0.5, -1.0).validate().is_err());
        let neg = noisy(ScenarioSpec::default(), NoiseSpec { dvl_std: -0.1, ..NoiseSpec::none() });
        match neg.validate() {
            Err(Error::Scenario(m)) => assert!(m.contains("dvl_std")),
            other => panic!("{other:?}"),
        }
        let slow_imu = ScenarioSpec { imu_rate: 2.0, ..ScenarioSpec::default() };
        assert!(slow_imu.validate().is_err());
        let bad_spline = ScenarioSpec {
            trajectory: TrajectoryKind::Spline { waypoints: alloc::vec![[0.0; 3], [1.0, 0.0, 0.0]] },
            ..ScenarioSpec::default()
        };
        assert!(bad_spline.validate().is_err());
    }

    #[test]
    fn lawnmower_is_continuous_and_shifts_each_period() {
        let spec = ScenarioSpec::lawnmower(20.0, 3.0, 0.5, 400.0);
        let traj = Trajectory::new(&spec).unwrap();
        let period = 2.0 * (20.0 + PI * 3.0) / 0.5;
        let a = traj.eval(10.0).position;
        let b = traj.eval(10.0 + period).position;
        assert_abs_diff_eq!(b - a, Vec3::new(0.0, 12.0, 0.0), epsilon = 1e-9);
        let mut prev = traj.eval(0.0);
        for j in 1..40_000 {
            let k = traj.eval(j as f64 * 0.01);
            assert!((k.position - prev.position).norm() <= 0.5 * 0.01 + 1e-9);
            assert!((k.velocity - prev.velocity).norm() < 0.02);
            prev = k;
        }
    }

    #[test]
    fn spline_is_closed_and_smooth() {
        let spec = ScenarioSpec {
            trajectory: TrajectoryKind::Spline {
                waypoints: alloc::vec![[0.0, 0.0, 0.0], [10.0, 2.0, 0.0], [12.0, 12.0, 1.0], [-2.0, 9.0, 0.5]],
            },
            ..ScenarioSpec::line(0.5, 100.0)
        };
        let traj = Trajectory::new(&spec).unwrap();
        let sp = Spline::new(
            match &spec.trajectory {
                TrajectoryKind::Spline { waypoints } => waypoints,
                _ => unreachable!(),
            },
            0.5,
        );
        let k0 = traj.eval(0.0);
        let k1 = traj.eval(sp.period);
        assert_abs_diff_eq!(k0.position, k1.position, epsilon = 1e-9);
        assert_abs_diff_eq!(k0.velocity, k1.velocity, epsilon = 1e-9);
        // velocity is the derivative of position
        for t in [1.0, 30.0, 55.5, 80.0] {
            let h = 1e-5;
            let fd = (traj.eval(t + h).position - traj.eval(t - h).position) / (2.0 * h);
            assert_abs_diff_eq!(fd, traj.eval(t).velocity, epsilon = 1e-6);
            let fda = (traj.eval(t + h).velocity - traj.eval(t - h).velocity) / (2.0 * h);
            assert_abs_diff_eq!(fda, traj.eval(t).acceleration, epsilon = 1e-5);
        }
    }

    #[test]
    fn body_rates_match_attitude_derivative() {
        let spec = ScenarioSpec {
            wobble: Some(Wobble {
                roll_amplitude: 0.1,
                pitch_amplitude: 0.05,
                period: 7.0,
            }),
            ..ScenarioSpec::circle(8.0, 0.6, 50.0)
        };
        let traj = Trajectory::new(&spec).unwrap();
        for t in [0.5, 4.0, 13.3] {
            let h = 1e-5;
            let qa = traj.eval(t - h).orientation;
            let qb = traj.eval(t + h).orientation;
            // body rate from q⁻¹ q̇ ≈ Log(qa⁻¹ qb) / 2h
            let w = (qa.conjugate() * qb).to_rotation_vector() / (2.0 * h);
            assert_abs_diff_eq!(w, traj.eval(t).body_rate, epsilon = 1e-6);
        }
    }

    #[test]
    fn body_frame_dvl_flag() {
        let spec = ScenarioSpec {
            dvl_frame: DvlFrame::Body,
            heading: 1.0,
            ..ScenarioSpec::line(0.5, 2.0)
        };
        let run = generate(&spec).unwrap();
        assert_abs_diff_eq!(run.ideal.dvl[3].velocity, Vec3::new(0.5, 0.0, 0.0), epsilon = 1e-12);
    }

    fn dead_reckon_error(spec: &ScenarioSpec) -> f64 {
        let run = generate(spec).unwrap();
        let epochs = synchronize(&run.ideal.imu, &run.ideal.dvl, &run.ideal.ahrs, &SyncOptions::default()).unwrap();
        let mut s = run.truth[0].state;
        for e in &epochs[1..] {
            s = preintegrate_burst(&s, &e.imu_burst, &spec.biases, &GravityModel::default()).unwrap();
        }
        let last = run.truth.last().unwrap();
        (s.position - last.state.position).norm()
    }

    #[test]
    fn dead_reckoning_closure_is_first_order() {
        // closure constant C: error <= C * dt with C = 10 m/s for a 20 s circle
        let base = ScenarioSpec::circle(5.0, 0.5, 20.0);
        let coarse = dead_reckon_error(&ScenarioSpec {
            imu_rate: 100.0,
            ..base.clone()
        });
        let fine = dead_reckon_error(&ScenarioSpec {
            imu_rate: 200.0,
            ..base
        });
        assert!(coarse <= 10.0 * 0.01);
        let ratio = coarse / fine;
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn noiseless_orientation_matches_gyro_integration(seed in 0u64..50, r in 3.0..12.0f64) {
            let spec = ScenarioSpec { seed, ..ScenarioSpec::circle(r, 0.4, 5.0) };
            let run = generate(&spec).unwrap();
            let epochs = synchronize(&run.ideal.imu, &run.ideal.dvl, &run.ideal.ahrs, &SyncOptions::default()).unwrap();
            let mut s = run.truth[0].state;
            for e in &epochs[1..] {
                s = preintegrate_burst(&s, &e.imu_burst, &spec.biases, &GravityModel::default()).unwrap();
            }
            prop_assert!(s.orientation.angular_distance(&run.truth.last().unwrap().state.orientation) < 1e-6);
        }
    }
}
