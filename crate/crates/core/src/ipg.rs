//! Moving-horizon iteratively preconditioned gradient (IPG) observer.
//!
//! A window holds `N` measurements `Z = (z_0, …, z_{N−1})`, the `N − 1`
//! inputs between them, an iterate `ζ` estimating the state at the oldest
//! measurement, and a preconditioner `K ≈ (JᵀJ)⁻¹`. Each step runs `d`
//! inner iterations
//!
//! ```text
//! K ← K − α (JᵀJ K − I)
//! ζ ← ζ − δ K_old Jᵀ (H(ζ) − Z)
//! ```
//!
//! then reports `ζ` propagated to the newest measurement and warm-starts the
//! next window with one forward step of the oldest input.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dynamics `f(x, u)` and measurement map `h(x)` over dynamic vectors.
pub trait WindowModel {
    type Input: Clone;

    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn propagate(&self, x: &DVector<f64>, u: &Self::Input) -> Result<DVector<f64>>;
    fn measure(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `∂f/∂x`, if available in closed form.
    fn propagate_jacobian(&self, _x: &DVector<f64>, _u: &Self::Input) -> Option<DMatrix<f64>> {
        None
    }

    /// `∂h/∂x`, if available in closed form.
    fn measure_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Residual of one predicted measurement against the observed one.
    fn residual(&self, predicted: &DVector<f64>, measured: &DVector<f64>) -> DVector<f64> {
        predicted - measured
    }

    /// Applied to the iterate after every inner iteration and after warm start.
    fn project(&self, _x: &mut DVector<f64>) {}
}

impl<M: WindowModel + ?Sized> WindowModel for &M {
    type Input = M::Input;

    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn meas_dim(&self) -> usize {
        (**self).meas_dim()
    }
    fn propagate(&self, x: &DVector<f64>, u: &Self::Input) -> Result<DVector<f64>> {
        (**self).propagate(x, u)
    }
    fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).measure(x)
    }
    fn propagate_jacobian(&self, x: &DVector<f64>, u: &Self::Input) -> Option<DMatrix<f64>> {
        (**self).propagate_jacobian(x, u)
    }
    fn measure_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).measure_jacobian(x)
    }
    fn residual(&self, predicted: &DVector<f64>, measured: &DVector<f64>) -> DVector<f64> {
        (**self).residual(predicted, measured)
    }
    fn project(&self, x: &mut DVector<f64>) {
        (**self).project(x)
    }
}

/// Per-iteration step size; sequences repeat their last entry.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(untagged))]
pub enum Schedule {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl Schedule {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Sequence(v) => v[i.min(v.len() - 1)],
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Schedule::Constant(v) => *v > 0.0 && v.is_finite(),
            Schedule::Sequence(v) => !v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{name} must be positive and finite")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum JacobianMode {
    /// Chain rule when the model supplies both Jacobians, otherwise finite differences.
    #[default]
    Auto,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct IpgParams {
    /// Window length `N` (number of measurements).
    pub horizon: usize,
    /// Inner iterations `d`.
    pub iterations: usize,
    pub alpha: Schedule,
    pub delta: Schedule,
    /// `K⁰ = k0_scale · I`.
    pub k0_scale: f64,
    pub jacobian: JacobianMode,
}

impl Default for IpgParams {
    fn default() -> Self {
        Self {
            horizon: 5,
            iterations: 3,
            alpha: Schedule::Constant(0.1),
            delta: Schedule::Constant(1.0),
            k0_scale: 1e-3,
            jacobian: JacobianMode::Auto,
        }
    }
}

impl IpgParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidArgument(format!("horizon N must be >= 2, got {}", self.horizon)));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("inner iterations d must be >= 1".into()));
        }
        self.alpha.validate("alpha")?;
        self.delta.validate("delta")?;
        if !self.k0_scale.is_finite() {
            return Err(Error::InvalidArgument("k0_scale must be finite".into()));
        }
        Ok(())
    }

    pub fn initial_preconditioner(&self, n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n) * self.k0_scale
    }
}

/// Sliding horizon: `N − 1` inputs, `N` measurements, iterate and preconditioner.
#[derive(Debug, Clone, PartialEq)]
pub struct IpgWindow<I> {
    inputs: VecDeque<I>,
    measurements: VecDeque<DVector<f64>>,
    iterate: DVector<f64>,
    preconditioner: DMatrix<f64>,
}

impl<I: Clone> IpgWindow<I> {
    pub fn new(
        inputs: Vec<I>,
        measurements: Vec<DVector<f64>>,
        iterate: DVector<f64>,
        preconditioner: DMatrix<f64>,
    ) -> Result<Self> {
        if measurements.is_empty() || inputs.len() + 1 != measurements.len() {
            return Err(Error::Dimension(format!(
                "window needs |U| = |Z| - 1, got |U| = {} and |Z| = {}",
                inputs.len(),
                measurements.len()
            )));
        }
        let n = iterate.len();
        if preconditioner.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "preconditioner is {:?}, expected ({n}, {n})",
                preconditioner.shape()
            )));
        }
        let p = measurements[0].len();
        if measurements.iter().any(|z| z.len() != p) {
            return Err(Error::Dimension("measurements differ in length".into()));
        }
        Ok(Self {
            inputs: inputs.into(),
            measurements: measurements.into(),
            iterate,
            preconditioner,
        })
    }

    pub fn horizon(&self) -> usize {
        self.measurements.len()
    }

    pub fn inputs(&self) -> &VecDeque<I> {
        &self.inputs
    }

    pub fn measurements(&self) -> &VecDeque<DVector<f64>> {
        &self.measurements
    }

    pub fn iterate(&self) -> &DVector<f64> {
        &self.iterate
    }

    pub fn preconditioner(&self) -> &DMatrix<f64> {
        &self.preconditioner
    }

    pub fn set_iterate(&mut self, iterate: DVector<f64>) -> Result<()> {
        if iterate.len() != self.iterate.len() {
            return Err(Error::Dimension("iterate length changed".into()));
        }
        self.iterate = iterate;
        Ok(())
    }

    pub fn set_preconditioner(&mut self, k: DMatrix<f64>) -> Result<()> {
        if k.shape() != self.preconditioner.shape() {
            return Err(Error::Dimension("preconditioner shape changed".into()));
        }
        self.preconditioner = k;
        Ok(())
    }

    /// Drops the oldest input and measurement and appends the new pair.
    pub fn slide(&mut self, u: I, z: DVector<f64>) -> Result<()> {
        if z.len() != self.measurements[0].len() {
            return Err(Error::Dimension(format!(
                "measurement has length {}, expected {}",
                z.len(),
                self.measurements[0].len()
            )));
        }
        if !self.inputs.is_empty() {
            self.inputs.pop_front();
            self.inputs.push_back(u);
        }
        self.measurements.pop_front();
        self.measurements.push_back(z);
        Ok(())
    }

    /// Swaps in recomputed inputs, e.g. when they depend on another estimator.
    pub fn replace_inputs(&mut self, inputs: Vec<I>) -> Result<()> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::Dimension(format!(
                "expected {} inputs, got {}",
                self.inputs.len(),
                inputs.len()
            )));
        }
        self.inputs = inputs.into();
        Ok(())
    }
}

fn check_finite_rows(v: &DVector<f64>, what: &'static str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(Error::NonFinite { what, row }),
        None => Ok(()),
    }
}

/// `[h(x₀); h(f^{u₁}(x₀)); …]`, one block per measurement.
pub fn stacked_map<'a, M, It>(model: &M, inputs: It, x0: &DVector<f64>) -> Result<DVector<f64>>
where
    M: WindowModel,
    M::Input: 'a,
    It: IntoIterator<Item = &'a M::Input>,
{
    let p = model.meas_dim();
    let mut blocks: Vec<DVector<f64>> = Vec::new();
    let mut x = x0.clone();
    let push = |x: &DVector<f64>, blocks: &mut Vec<DVector<f64>>| -> Result<()> {
        let z = model.measure(x);
        if z.len() != p {
            return Err(Error::Dimension(format!("h returned {} entries, expected {p}", z.len())));
        }
        blocks.push(z);
        Ok(())
    };
    push(&x, &mut blocks)?;
    for u in inputs {
        x = model.propagate(&x, u)?;
        if x.len() != model.state_dim() {
            return Err(Error::Dimension(format!("f returned {} entries, expected {}", x.len(), model.state_dim())));
        }
        push(&x, &mut blocks)?;
    }
    let mut out = DVector::zeros(p * blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        out.rows_mut(i * p, p).copy_from(b);
    }
    Ok(out)
}

/// Stacked residual `H(ζ) − Z` through [`WindowModel::residual`].
pub fn stacked_residual<M: WindowModel>(
    model: &M,
    inputs: &VecDeque<M::Input>,
    measurements: &VecDeque<DVector<f64>>,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = stacked_map(model, inputs.iter(), x0)?;
    let p = model.meas_dim();
    let mut r = DVector::zeros(h.len());
    for (i, z) in measurements.iter().enumerate() {
        let pred = h.rows(i * p, p).into_owned();
        r.rows_mut(i * p, p).copy_from(&model.residual(&pred, z));
    }
    Ok(r)
}

/// Relative central-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Jacobian of [`stacked_map`] at `x0`.
pub fn stacked_jacobian<'a, M, It>(model: &M, inputs: It, x0: &DVector<f64>, mode: JacobianMode) -> Result<DMatrix<f64>>
where
    M: WindowModel,
    M::Input: 'a,
    It: IntoIterator<Item = &'a M::Input> + Clone,
{
    let n = model.state_dim();
    let p = model.meas_dim();
    if x0.len() != n {
        return Err(Error::Dimension(format!("state has {} entries, expected {n}", x0.len())));
    }
    let jac = match mode {
        JacobianMode::Auto => analytic_jacobian(model, inputs.clone(), x0)?,
        JacobianMode::FiniteDifference => None,
    };
    let jac = match jac {
        Some(j) => j,
        None => {
            let mut cols = Vec::with_capacity(n);
            for c in 0..n {
                let h = fd_step(x0[c]);
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                xp[c] += h;
                xm[c] -= h;
                let fp = stacked_map(model, inputs.clone(), &xp)?;
                let fm = stacked_map(model, inputs.clone(), &xm)?;
                cols.push((fp - fm) / (2.0 * h));
            }
            DMatrix::from_columns(&cols)
        }
    };
    debug_assert_eq!(jac.ncols(), n);
    debug_assert_eq!(jac.nrows() % p, 0);
    for r in 0..jac.nrows() {
        if jac.row(r).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "stacked Jacobian",
                row: r,
            });
        }
    }
    Ok(jac)
}

fn analytic_jacobian<'a, M, It>(model: &M, inputs: It, x0: &DVector<f64>) -> Result<Option<DMatrix<f64>>>
where
    M: WindowModel,
    M::Input: 'a,
    It: IntoIterator<Item = &'a M::Input>,
{
    let n = model.state_dim();
    let p = model.meas_dim();
    let mut blocks = Vec::new();
    let mut x = x0.clone();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let Some(hj) = model.measure_jacobian(&x) else {
        return Ok(None);
    };
    blocks.push(hj * &phi);
    for u in inputs {
        let Some(fj) = model.propagate_jacobian(&x, u) else {
            return Ok(None);
        };
        phi = fj * phi;
        x = model.propagate(&x, u)?;
        let Some(hj) = model.measure_jacobian(&x) else {
            return Ok(None);
        };
        blocks.push(hj * &phi);
    }
    let mut out = DMatrix::zeros(p * blocks.len(), n);
    for (i, b) in blocks.iter().enumerate() {
        if b.shape() != (p, n) {
            return Err(Error::Dimension(format!("Jacobian block is {:?}, expected ({p}, {n})", b.shape())));
        }
        out.view_mut((i * p, 0), (p, n)).copy_from(b);
    }
    Ok(Some(out))
}

/// `K − α (JᵀJ K − I)`.
pub fn precondition_update(k: &DMatrix<f64>, j: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let n = k.nrows();
    let jtj = j.transpose() * j;
    k - (jtj * k - DMatrix::identity(n, n)) * alpha
}

/// `ζ − δ K Jᵀ r`.
pub fn iterate_update(
    zeta: &DVector<f64>,
    k: &DMatrix<f64>,
    j: &DMatrix<f64>,
    residual: &DVector<f64>,
    delta: f64,
) -> DVector<f64> {
    zeta - k * (j.transpose() * residual) * delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// `ζ^d`: estimate of the state at the oldest measurement.
    pub solution: DVector<f64>,
    /// `ζ^d` propagated through every input: estimate at the newest measurement.
    pub estimate: DVector<f64>,
}

/// Runs `d` inner iterations, then warm-starts the window in place.
///
/// The window is left untouched when an error is returned.
pub fn ipg_step<M: WindowModel>(model: &M, params: &IpgParams, window: &mut IpgWindow<M::Input>) -> Result<StepOutcome> {
    let mut zeta = window.iterate.clone();
    let mut k = window.preconditioner.clone();
    for i in 0..params.iterations {
        let diverged = || Error::Divergence { iteration: i };
        let j = stacked_jacobian(model, window.inputs.iter(), &zeta, params.jacobian).map_err(|e| match e {
            Error::NonFinite { .. } => diverged(),
            other => other,
        })?;
        let r = stacked_residual(model, &window.inputs, &window.measurements, &zeta)?;
        check_finite_rows(&r, "stacked residual").map_err(|_| diverged())?;
        let k_next = precondition_update(&k, &j, params.alpha.at(i));
        zeta = iterate_update(&zeta, &k, &j, &r, params.delta.at(i));
        model.project(&mut zeta);
        k = k_next;
        if zeta.iter().chain(k.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: i });
        }
    }

    let mut estimate = zeta.clone();
    for u in &window.inputs {
        estimate = model.propagate(&estimate, u)?;
    }
    let mut warm = match window.inputs.front() {
        Some(u) => model.propagate(&zeta, u)?,
        None => zeta.clone(),
    };
    model.project(&mut warm);
    if estimate.iter().chain(warm.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: params.iterations,
        });
    }
    window.iterate = warm;
    window.preconditioner = k;
    Ok(StepOutcome { solution: zeta, estimate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserverStatus {
    /// Window not yet full; estimate is forward propagation only.
    Warmup,
    Ok,
    /// IPG failed this epoch; estimate is forward propagation only.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverOutput {
    pub estimate: DVector<f64>,
    pub solution: Option<DVector<f64>>,
    pub status: ObserverStatus,
}

/// Streaming observer: buffers the first `N` measurements with dead-reckoned
/// output, then runs [`ipg_step`] at every epoch.
#[derive(Debug, Clone)]
pub struct IpgObserver<M: WindowModel> {
    model: M,
    params: IpgParams,
    inputs: Vec<M::Input>,
    measurements: Vec<DVector<f64>>,
    window: Option<IpgWindow<M::Input>>,
    initial: DVector<f64>,
    estimate: DVector<f64>,
}

impl<M: WindowModel> IpgObserver<M> {
    /// `x0` is the state estimate at the time of `z0`.
    pub fn new(model: M, params: IpgParams, x0: DVector<f64>, z0: DVector<f64>) -> Result<Self> {
        params.validate()?;
        if x0.len() != model.state_dim() || z0.len() != model.meas_dim() {
            return Err(Error::Dimension(format!(
                "expected state {} and measurement {}, got {} and {}",
                model.state_dim(),
                model.meas_dim(),
                x0.len(),
                z0.len()
            )));
        }
        let mut initial = x0.clone();
        model.project(&mut initial);
        Ok(Self {
            model,
            params,
            inputs: Vec::new(),
            measurements: alloc::vec![z0],
            window: None,
            initial,
            estimate: x0,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn params(&self) -> &IpgParams {
        &self.params
    }

    pub fn window(&self) -> Option<&IpgWindow<M::Input>> {
        self.window.as_ref()
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }

    /// Inputs currently spanned by the horizon, oldest first.
    pub fn inputs(&self) -> Vec<M::Input> {
        match &self.window {
            Some(w) => w.inputs.iter().cloned().collect(),
            None => self.inputs.clone(),
        }
    }

    /// Iterate at the oldest measurement of the horizon.
    pub fn window_start(&self) -> &DVector<f64> {
        match &self.window {
            Some(w) => &w.iterate,
            None => &self.initial,
        }
    }

    /// Advances one epoch. On error the observer is unchanged.
    pub fn step(&mut self, u: M::Input, z: DVector<f64>) -> Result<ObserverOutput> {
        self.step_with(u, z, |_| Ok(None))
    }

    /// As [`step`](Self::step); `recompute` may replace the horizon inputs
    /// (newest included) before the iterations run, given the current window start.
    pub fn step_with<F>(&mut self, u: M::Input, z: DVector<f64>, recompute: F) -> Result<ObserverOutput>
    where
        F: FnOnce(&DVector<f64>) -> Result<Option<Vec<M::Input>>>,
    {
        if z.len() != self.model.meas_dim() {
            return Err(Error::Dimension(format!(
                "measurement has length {}, expected {}",
                z.len(),
                self.model.meas_dim()
            )));
        }
        let mut window = match &self.window {
            Some(w) => {
                let mut w = w.clone();
                w.slide(u.clone(), z)?;
                w
            }
            None if self.measurements.len() + 1 < self.params.horizon => {
                let estimate = self.model.propagate(&self.estimate, &u)?;
                self.inputs.push(u);
                self.measurements.push(z);
                self.estimate = estimate.clone();
                return Ok(ObserverOutput {
                    estimate,
                    solution: None,
                    status: ObserverStatus::Warmup,
                });
            }
            None => {
                let mut inputs = self.inputs.clone();
                inputs.push(u.clone());
                let mut measurements = self.measurements.clone();
                measurements.push(z);
                let k0 = self.params.initial_preconditioner(self.model.state_dim());
                IpgWindow::new(inputs, measurements, self.initial.clone(), k0)?
            }
        };
        if let Some(new_inputs) = recompute(&window.iterate)? {
            window.replace_inputs(new_inputs)?;
        }
        let outcome = ipg_step(&self.model, &self.params, &mut window)?;
        self.window = Some(window);
        self.inputs.clear();
        self.measurements.clear();
        self.estimate = outcome.estimate.clone();
        Ok(ObserverOutput {
            estimate: outcome.estimate,
            solution: Some(outcome.solution),
            status: ObserverStatus::Ok,
        })
    }

    /// Dead-reckons one epoch without iterating (fallback after a failed step).
    /// The horizon slides, the iterate is advanced by the dropped input and
    /// the preconditioner is reset to `K⁰`.
    pub fn coast(&mut self, u: M::Input, z: DVector<f64>) -> Result<ObserverOutput> {
        let estimate = self.model.propagate(&self.estimate, &u)?;
        match &mut self.window {
            Some(w) => {
                let mut next = match w.inputs.front() {
                    Some(oldest) => self.model.propagate(&w.iterate, oldest)?,
                    None => w.iterate.clone(),
                };
                self.model.project(&mut next);
                let mut nw = w.clone();
                nw.slide(u, z)?;
                nw.iterate = next;
                nw.preconditioner = self.params.initial_preconditioner(self.model.state_dim());
                *w = nw;
            }
            None => {
                self.inputs.push(u);
                self.measurements.push(z);
                while self.measurements.len() >= self.params.horizon {
                    self.initial = self.model.propagate(&self.initial, &self.inputs[0])?;
                    self.model.project(&mut self.initial);
                    self.inputs.remove(0);
                    self.measurements.remove(0);
                }
            }
        }
        self.estimate = estimate.clone();
        Ok(ObserverOutput {
            estimate,
            solution: None,
            status: ObserverStatus::Fallback,
        })
    }
}

/// `f(x, u) = A x + u`, `h(x) = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || c.ncols() != a.nrows() {
            return Err(Error::Dimension(format!("A is {:?}, C is {:?}", a.shape(), c.shape())));
        }
        Ok(Self { a, c })
    }

    /// Observability-style stack `[C; CA; …; CA^{N−1}]`.
    pub fn observability_matrix(&self, horizon: usize) -> DMatrix<f64> {
        let (p, n) = self.c.shape();
        let mut out = DMatrix::zeros(p * horizon, n);
        let mut ak = DMatrix::identity(n, n);
        for i in 0..horizon {
            out.view_mut((i * p, 0), (p, n)).copy_from(&(&self.c * &ak));
            ak = &self.a * ak;
        }
        out
    }
}

impl WindowModel for LinearModel {
    type Input = DVector<f64>;

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn meas_dim(&self) -> usize {
        self.c.nrows()
    }
    fn propagate(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != x.len() {
            return Err(Error::Dimension(format!("input has {} entries, expected {}", u.len(), x.len())));
        }
        Ok(&self.a * x + u)
    }
    fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }
    fn propagate_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
    fn measure_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.c.clone())
    }
}
