//! Cascade observer: an IPG attitude observer on the gyro stream feeding an
//! IPG velocity observer on the accelerometer stream, then position by
//! integrating the velocity estimate over the epoch period.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector4};

use crate::error::{Error, Result, Stage};
use crate::ipg::{IpgObserver, IpgParams, ObserverOutput, ObserverStatus, WindowModel};
use crate::preintegration::{preintegrate_burst, velocity_increment, GravityModel, ImuBiases, NavState, OrientationSteps};
use crate::rotation::{UnitQuaternion, Vec3};
use crate::sensors::SyncedEpoch;

/// Attitude dynamics: the burst's orientation steps on a raw 4-vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrientationModel;

impl WindowModel for OrientationModel {
    type Input = OrientationSteps;

    fn state_dim(&self) -> usize {
        4
    }
    fn meas_dim(&self) -> usize {
        4
    }
    fn propagate(&self, x: &DVector<f64>, u: &OrientationSteps) -> Result<DVector<f64>> {
        let y = u.apply(&Vector4::from_column_slice(x.as_slice()));
        Ok(DVector::from_column_slice(y.as_slice()))
    }
    fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn propagate_jacobian(&self, x: &DVector<f64>, u: &OrientationSteps) -> Option<DMatrix<f64>> {
        let j = u.jacobian(&Vector4::from_column_slice(x.as_slice()));
        Some(DMatrix::from_column_slice(4, 4, j.as_slice()))
    }
    fn measure_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(4, 4))
    }
    /// Plain 4-vector difference after flipping the measurement into the
    /// prediction's hemisphere.
    fn residual(&self, predicted: &DVector<f64>, measured: &DVector<f64>) -> DVector<f64> {
        if predicted.dot(measured) < 0.0 {
            predicted + measured
        } else {
            predicted - measured
        }
    }
    fn project(&self, x: &mut DVector<f64>) {
        let n = x.norm();
        if n > crate::rotation::MIN_QUATERNION_NORM && n.is_finite() {
            *x /= n;
        }
    }
}

/// Navigation-frame velocity increment of one burst.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityStep {
    pub delta_v: Vec3,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityModel;

impl WindowModel for VelocityModel {
    type Input = VelocityStep;

    fn state_dim(&self) -> usize {
        3
    }
    fn meas_dim(&self) -> usize {
        3
    }
    fn propagate(&self, x: &DVector<f64>, u: &VelocityStep) -> Result<DVector<f64>> {
        Ok(x + DVector::from_column_slice(u.delta_v.as_slice()))
    }
    fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn propagate_jacobian(&self, _x: &DVector<f64>, _u: &VelocityStep) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(3, 3))
    }
    fn measure_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(3, 3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum DivergencePolicy {
    #[default]
    Abort,
    /// Dead-reckon the failing epoch and flag the row.
    DeadReckon,
}

/// Which window estimate is reported as the epoch state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum OutputMode {
    /// `ζ^d` propagated through the window: the state at the current epoch.
    #[default]
    Forward,
    /// `ζ^d` itself: the state at the oldest epoch of the window.
    WindowStart,
}

/// Position update between epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PositionRule {
    /// `p ← p + v̂_k Δt_k`.
    #[default]
    Euler,
    /// `p ← p + ½ (v̂_{k−1} + v̂_k) Δt_k`.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum OutputFlag {
    Ok,
    Warmup,
    Fallback,
}

impl OutputFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFlag::Ok => "ok",
            OutputFlag::Warmup => "warmup",
            OutputFlag::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub state: NavState,
    pub flag: OutputFlag,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct CascadeConfig {
    pub orientation: IpgParams,
    pub velocity: IpgParams,
    pub biases: ImuBiases,
    pub gravity: GravityModel,
    pub initial_position: Vec3,
    /// Defaults to the first DVL sample.
    pub initial_velocity: Option<Vec3>,
    /// Defaults to the first AHRS sample.
    pub initial_orientation: Option<UnitQuaternion>,
    pub on_divergence: DivergencePolicy,
    pub output: OutputMode,
    pub position_rule: PositionRule,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            orientation: IpgParams::default(),
            velocity: IpgParams::default(),
            biases: ImuBiases::default(),
            gravity: GravityModel::default(),
            initial_position: Vec3::zeros(),
            initial_velocity: None,
            initial_orientation: None,
            on_divergence: DivergencePolicy::Abort,
            output: OutputMode::Forward,
            position_rule: PositionRule::Euler,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        self.orientation.validate()?;
        self.velocity.validate()?;
        if self.orientation.horizon != self.velocity.horizon {
            return Err(Error::InvalidArgument(alloc::format!(
                "both stages must share the horizon N (got {} and {})",
                self.orientation.horizon,
                self.velocity.horizon
            )));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.orientation.horizon
    }
}

fn to_dvec3(v: &Vec3) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn to_quat(x: &DVector<f64>) -> Result<UnitQuaternion> {
    UnitQuaternion::new(x[0], x[1], x[2], x[3])
}

fn stage_error(stage: Stage, epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Divergence { iteration } => Error::StageDivergence { stage, epoch, iteration },
        other => other,
    }
}

/// Cascade observer state machine, one [`step`](Self::step) per epoch.
#[derive(Debug, Clone)]
pub struct CascadeObserver {
    config: CascadeConfig,
    attitude: IpgObserver<OrientationModel>,
    velocity: IpgObserver<VelocityModel>,
    bursts: Vec<crate::sensors::ImuBurst>,
    last: EstimateRow,
    epoch: usize,
    hemisphere_flips: usize,
    attitude_solution: Option<UnitQuaternion>,
    stage2_attitudes: Vec<UnitQuaternion>,
}

impl CascadeObserver {
    /// Initializes from the first epoch; its IMU burst is not integrated.
    pub fn new(config: CascadeConfig, first: &SyncedEpoch) -> Result<Self> {
        config.validate()?;
        let q0 = config.initial_orientation.unwrap_or(first.ahrs.orientation);
        let v0 = config.initial_velocity.unwrap_or(first.dvl.velocity);
        let z_q = first.ahrs.orientation.aligned_with(&q0);
        let attitude = IpgObserver::new(
            OrientationModel,
            config.orientation.clone(),
            DVector::from_column_slice(&q0.to_array()),
            DVector::from_column_slice(&z_q.to_array()),
        )?;
        let velocity = IpgObserver::new(VelocityModel, config.velocity.clone(), to_dvec3(&v0), to_dvec3(&first.dvl.velocity))?;
        let last = EstimateRow {
            t: first.t,
            state: NavState {
                position: config.initial_position,
                velocity: v0,
                orientation: q0,
            },
            flag: OutputFlag::Warmup,
        };
        Ok(Self {
            config,
            attitude,
            velocity,
            bursts: alloc::vec![first.imu_burst.clone()],
            last,
            epoch: 0,
            hemisphere_flips: 0,
            attitude_solution: None,
            stage2_attitudes: Vec::new(),
        })
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    pub fn last(&self) -> &EstimateRow {
        &self.last
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// AHRS measurements sign-flipped into the estimate's hemisphere so far.
    pub fn hemisphere_flips(&self) -> usize {
        self.hemisphere_flips
    }

    /// Attitude window solution `ζ^d` of the last step, once the window is full.
    pub fn attitude_solution(&self) -> Option<UnitQuaternion> {
        self.attitude_solution
    }

    /// Attitudes at the start of each velocity-window input in the last step,
    /// re-propagated from the attitude observer's window solution.
    pub fn stage2_attitudes(&self) -> &[UnitQuaternion] {
        &self.stage2_attitudes
    }

    /// Processes one epoch. On error the observer is unchanged.
    pub fn step(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        let mut next = self.clone();
        let row = next.advance(epoch)?;
        *self = next;
        Ok(row)
    }

    fn advance(&mut self, epoch: &SyncedEpoch) -> Result<EstimateRow> {
        let dt = epoch
            .t_prev
            .map(|p| epoch.t - p)
            .filter(|d| *d > 0.0)
            .unwrap_or(epoch.t - self.last.t);
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::Ordering { t: epoch.t });
        }
        let k = self.epoch + 1;
        let cfg = &self.config;
        let steps = OrientationSteps::new(&epoch.imu_burst, &cfg.biases.gyro)?;
        let prev = self.last.state;

        let mut z_q = epoch.ahrs.orientation;
        if z_q.dot(&prev.orientation) < 0.0 {
            z_q = z_q.negated();
            self.hemisphere_flips += 1;
            log::debug!("AHRS sign flipped at t={}", epoch.t);
        }
        let z_q = DVector::from_column_slice(&z_q.to_array());
        let z_v = to_dvec3(&epoch.dvl.velocity);
        let prev_attitude_at_window = self.attitude.clone();

        let q_out = self.attitude.step(steps.clone(), z_q.clone()).map_err(stage_error(Stage::Orientation, k));
        let q_out = match q_out {
            Ok(o) => o,
            Err(e) => return self.fallback(epoch, k, steps, z_q, z_v, e),
        };
        self.attitude_solution = q_out.solution.as_ref().map(to_quat).transpose()?;

        // Velocity inputs along the attitude trajectory implied by the attitude window.
        self.bursts.push(epoch.imu_burst.clone());
        let n = cfg.horizon();
        if self.bursts.len() > n {
            self.bursts.remove(0);
        }
        let (dv_new, _) = velocity_increment(&epoch.imu_burst, &prev.orientation, &cfg.biases, &cfg.gravity)?;
        let biases = cfg.biases;
        let gravity = cfg.gravity;
        let stage1_solution = q_out.solution.clone();
        let bursts = &self.bursts;
        let mut attitudes = Vec::new();
        let v_out = self
            .velocity
            .step_with(VelocityStep { delta_v: dv_new }, z_v.clone(), |_| {
                let Some(sol) = &stage1_solution else {
                    return Ok(None);
                };
                let mut q = to_quat(sol)?;
                let mut inputs = Vec::with_capacity(bursts.len() - 1);
                for b in &bursts[1..] {
                    attitudes.push(q);
                    let (dv, q_end) = velocity_increment(b, &q, &biases, &gravity)?;
                    inputs.push(VelocityStep { delta_v: dv });
                    q = q_end;
                }
                Ok(Some(inputs))
            })
            .map_err(stage_error(Stage::Velocity, k));
        let v_out = match v_out {
            Ok(o) => o,
            Err(e) => {
                self.attitude = prev_attitude_at_window;
                self.bursts.pop();
                return self.fallback(epoch, k, steps, z_q, z_v, e);
            }
        };
        if !attitudes.is_empty() {
            self.stage2_attitudes = attitudes;
        }

        let row = self.compose(epoch, dt, &q_out, &v_out, prev)?;
        self.epoch = k;
        self.last = row;
        Ok(row)
    }

    fn compose(
        &self,
        epoch: &SyncedEpoch,
        dt: f64,
        q_out: &ObserverOutput,
        v_out: &ObserverOutput,
        prev: NavState,
    ) -> Result<EstimateRow> {
        if q_out.status == ObserverStatus::Warmup || v_out.status == ObserverStatus::Warmup {
            let state = preintegrate_burst(&prev, &epoch.imu_burst, &self.config.biases, &self.config.gravity)?;
            return Ok(EstimateRow {
                t: epoch.t,
                state,
                flag: OutputFlag::Warmup,
            });
        }
        let pick = |o: &ObserverOutput| match self.config.output {
            OutputMode::Forward => o.estimate.clone(),
            OutputMode::WindowStart => o.solution.clone().unwrap_or_else(|| o.estimate.clone()),
        };
        let q = to_quat(&pick(q_out))?;
        let v = pick(v_out);
        let v = Vec3::new(v[0], v[1], v[2]);
        Ok(EstimateRow {
            t: epoch.t,
            state: NavState {
                position: match self.config.position_rule {
                    PositionRule::Euler => prev.position + v * dt,
                    PositionRule::Trapezoid => prev.position + (prev.velocity + v) * (0.5 * dt),
                },
                velocity: v,
                orientation: q,
            },
            flag: OutputFlag::Ok,
        })
    }

    fn fallback(
        &mut self,
        epoch: &SyncedEpoch,
        k: usize,
        steps: OrientationSteps,
        z_q: DVector<f64>,
        z_v: DVector<f64>,
        err: Error,
    ) -> Result<EstimateRow> {
        if self.config.on_divergence == DivergencePolicy::Abort {
            return Err(err);
        }
        log::warn!("{err}; dead-reckoning epoch t={}", epoch.t);
        self.attitude_solution = None;
        let cfg = &self.config;
        let prev = self.last.state;
        self.attitude.coast(steps, z_q)?;
        let (dv, _) = velocity_increment(&epoch.imu_burst, &prev.orientation, &cfg.biases, &cfg.gravity)?;
        self.velocity.coast(VelocityStep { delta_v: dv }, z_v)?;
        self.bursts.push(epoch.imu_burst.clone());
        if self.bursts.len() > cfg.horizon() {
            self.bursts.remove(0);
        }
        let state = preintegrate_burst(&prev, &epoch.imu_burst, &cfg.biases, &cfg.gravity)?;
        let row = EstimateRow {
            t: epoch.t,
            state,
            flag: OutputFlag::Fallback,
        };
        self.epoch = k;
        self.last = row;
        Ok(row)
    }
}

/// Runs the cascade over every epoch; the first row is the initial state.
pub fn run_cascade(epochs: &[SyncedEpoch], config: &CascadeConfig) -> Result<Vec<EstimateRow>> {
    config.validate()?;
    if epochs.len() < config.horizon() {
        return Err(Error::InvalidArgument(alloc::format!(
            "need at least N = {} epochs, got {}",
            config.horizon(),
            epochs.len()
        )));
    }
    let mut obs = CascadeObserver::new(config.clone(), &epochs[0])?;
    let mut rows = Vec::with_capacity(epochs.len());
    rows.push(*obs.last());
    for e in &epochs[1..] {
        rows.push(obs.step(e)?);
    }
    Ok(rows)
}
