//! Trajectory error metrics: per-state MAE, Total Error, Total Variance,
//! ATE, RPE, and yaw-plus-translation alignment.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::cascade::EstimateRow;
use crate::error::{Error, Result};
use crate::rotation::{UnitQuaternion, Vec3};
use crate::sensors::GroundTruthSample;

pub type PoseSample = GroundTruthSample;

/// Minimum mean squared horizontal spread (m²) of the alignment window.
pub const MIN_ALIGNMENT_SPREAD: f64 = 1e-4;

impl From<&EstimateRow> for PoseSample {
    fn from(r: &EstimateRow) -> Self {
        PoseSample {
            t: r.t,
            position: r.state.position,
            orientation: Some(r.state.orientation),
        }
    }
}

pub fn poses(rows: &[EstimateRow]) -> Vec<PoseSample> {
    rows.iter().map(PoseSample::from).collect()
}

/// Which trajectory is interpolated onto the other's timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Resample {
    #[default]
    GroundTruthToEstimate,
    EstimateToGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum VarianceMode {
    /// Sample variance of all per-epoch, per-state signed errors.
    #[default]
    Pooled,
    /// Sample variance of the per-state MAEs.
    Maes,
}

/// Rotation about the vertical axis followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawTranslation {
    pub yaw: f64,
    pub translation: Vec3,
}

impl YawTranslation {
    pub fn identity() -> Self {
        Self {
            yaw: 0.0,
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> UnitQuaternion {
        UnitQuaternion::from_yaw(self.yaw)
    }

    pub fn apply(&self, p: &PoseSample) -> PoseSample {
        let r = self.rotation();
        PoseSample {
            t: p.t,
            position: r.rotate(&p.position) + self.translation,
            orientation: p.orientation.map(|q| r * q),
        }
    }
}

/// Estimate and ground truth on common timestamps, the estimate already
/// transformed into the ground-truth frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub estimate: Vec<PoseSample>,
    pub ground_truth: Vec<PoseSample>,
    pub transform: YawTranslation,
}

impl AlignedPair {
    /// Pairs trajectories that already share timestamps, without alignment.
    pub fn unaligned(estimate: Vec<PoseSample>, ground_truth: Vec<PoseSample>) -> Result<Self> {
        if estimate.len() != ground_truth.len() {
            return Err(Error::Dimension(alloc::format!(
                "estimate has {} samples, ground truth {}",
                estimate.len(),
                ground_truth.len()
            )));
        }
        Ok(Self {
            estimate,
            ground_truth,
            transform: YawTranslation::identity(),
        })
    }

    pub fn len(&self) -> usize {
        self.estimate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimate.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.estimate.iter().map(|p| p.t)
    }

    pub fn position_errors(&self) -> Vec<Vec3> {
        self.estimate.iter().zip(&self.ground_truth).map(|(e, g)| e.position - g.position).collect()
    }

    /// Small-angle attitude errors `Log(q_gt⁻¹ ⊗ q_est)`, when both sides carry attitude.
    pub fn orientation_errors(&self) -> Option<Vec<Vec3>> {
        self.estimate
            .iter()
            .zip(&self.ground_truth)
            .map(|(e, g)| Some((g.orientation?.conjugate() * e.orientation?).to_rotation_vector()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub n_fixes: usize,
    pub resample: Resample,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            n_fixes: 10,
            resample: Resample::default(),
        }
    }
}

fn sorted(samples: &[PoseSample]) -> Vec<PoseSample> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.t.total_cmp(&b.t));
    v
}

fn slerp(a: &UnitQuaternion, b: &UnitQuaternion, w: f64) -> UnitQuaternion {
    let rel = (a.conjugate() * *b).to_rotation_vector();
    *a * UnitQuaternion::from_rotation_vector(&(rel * w))
}

/// Linear (and spherical, for attitude) interpolation at `t`; `None` outside
/// the sample span. `samples` must be sorted.
pub fn interpolate(samples: &[PoseSample], t: f64) -> Option<PoseSample> {
    let first = samples.first()?;
    let last = samples.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let j = samples.partition_point(|s| s.t < t);
    if samples[j].t == t {
        return Some(PoseSample { t, ..samples[j] });
    }
    let (a, b) = (&samples[j - 1], &samples[j]);
    let w = (t - a.t) / (b.t - a.t);
    Some(PoseSample {
        t,
        position: a.position + (b.position - a.position) * w,
        orientation: match (a.orientation, b.orientation) {
            (Some(qa), Some(qb)) => Some(slerp(&qa, &qb, w)),
            _ => None,
        },
    })
}

/// Least-squares yaw and translation mapping `src` onto `dst`.
pub fn fit_yaw_translation(src: &[Vec3], dst: &[Vec3]) -> Result<YawTranslation> {
    let n = src.len();
    if n < 2 || dst.len() != n {
        return Err(Error::IllConditionedAlignment { n_fixes: n });
    }
    let cs = src.iter().sum::<Vec3>() / n as f64;
    let cd = dst.iter().sum::<Vec3>() / n as f64;
    let spread = src.iter().map(|p| (p - cs).xy().norm_squared()).sum::<f64>() / n as f64;
    if spread < MIN_ALIGNMENT_SPREAD {
        return Err(Error::IllConditionedAlignment { n_fixes: n });
    }
    let (mut sin, mut cos) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (e, g) = (s - cs, d - cd);
        sin += e.x * g.y - e.y * g.x;
        cos += e.x * g.x + e.y * g.y;
    }
    let yaw = sin.atan2(cos);
    let translation = cd - UnitQuaternion::from_yaw(yaw).rotate(&cs);
    Ok(YawTranslation { yaw, translation })
}

/// Fits the transform over the first `n_fixes` ground-truth samples inside
/// the estimate's span, applies it to the estimate and resamples.
pub fn align_trajectories(est: &[PoseSample], gt: &[PoseSample], opts: &AlignOptions) -> Result<AlignedPair> {
    if opts.n_fixes < 2 {
        return Err(Error::InvalidArgument("n_fixes must be >= 2".into()));
    }
    let est = sorted(est);
    let gt = sorted(gt);
    let mut src = Vec::with_capacity(opts.n_fixes);
    let mut dst = Vec::with_capacity(opts.n_fixes);
    for g in &gt {
        if src.len() == opts.n_fixes {
            break;
        }
        if let Some(e) = interpolate(&est, g.t) {
            src.push(e.position);
            dst.push(g.position);
        }
    }
    if src.is_empty() {
        return Err(Error::InvalidArgument("estimate and ground truth do not overlap in time".into()));
    }
    if src.len() < opts.n_fixes {
        return Err(Error::IllConditionedAlignment { n_fixes: opts.n_fixes });
    }
    let transform = fit_yaw_translation(&src, &dst).map_err(|_| Error::IllConditionedAlignment { n_fixes: opts.n_fixes })?;
    let moved: Vec<PoseSample> = est.iter().map(|p| transform.apply(p)).collect();
    let mut pair = resample(&moved, &gt, opts.resample)?;
    pair.transform = transform;
    Ok(pair)
}

/// Puts two trajectories on common timestamps without moving either.
pub fn resample(est: &[PoseSample], gt: &[PoseSample], direction: Resample) -> Result<AlignedPair> {
    let est = sorted(est);
    let gt = sorted(gt);
    let (base, other) = match direction {
        Resample::GroundTruthToEstimate => (&est, &gt),
        Resample::EstimateToGroundTruth => (&gt, &est),
    };
    let mut kept = Vec::new();
    let mut interp = Vec::new();
    for b in base.iter() {
        if let Some(o) = interpolate(other, b.t) {
            kept.push(*b);
            interp.push(o);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument("estimate and ground truth do not overlap in time".into()));
    }
    let (estimate, ground_truth) = match direction {
        Resample::GroundTruthToEstimate => (kept, interp),
        Resample::EstimateToGroundTruth => (interp, kept),
    };
    AlignedPair::unaligned(estimate, ground_truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    PosX,
    PosY,
    PosZ,
    OriX,
    OriY,
    OriZ,
}

impl Component {
    pub const POSITION: [Component; 3] = [Component::PosX, Component::PosY, Component::PosZ];
    pub const ORIENTATION: [Component; 3] = [Component::OriX, Component::OriY, Component::OriZ];

    pub fn label(&self) -> &'static str {
        match self {
            Component::PosX => "pos_x",
            Component::PosY => "pos_y",
            Component::PosZ => "pos_z",
            Component::OriX => "ori_x",
            Component::OriY => "ori_y",
            Component::OriZ => "ori_z",
        }
    }
}

/// Signed per-epoch errors of one component; `None` for orientation when
/// either side lacks attitude.
pub fn component_errors(aligned: &AlignedPair, c: Component) -> Option<Vec<f64>> {
    let axis = |v: &Vec3, i: usize| v[i];
    match c {
        Component::PosX | Component::PosY | Component::PosZ => {
            let i = c as usize;
            Some(aligned.position_errors().iter().map(|e| axis(e, i)).collect())
        }
        _ => {
            let i = c as usize - 3;
            aligned.orientation_errors().map(|v| v.iter().map(|e| axis(e, i)).collect())
        }
    }
}

pub fn mean_absolute(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
}

/// Mean absolute error of one component (m or rad).
pub fn state_mae(aligned: &AlignedPair, c: Component) -> Option<f64> {
    component_errors(aligned, c).map(|e| mean_absolute(&e))
}

/// `sqrt(mean(MAE²))`.
pub fn total_error(maes: &[f64]) -> Result<f64> {
    if maes.is_empty() {
        return Err(Error::InvalidArgument("total_error needs at least one MAE".into()));
    }
    Ok((maes.iter().map(|m| m * m).sum::<f64>() / maes.len() as f64).sqrt())
}

/// Sample variance (n − 1 denominator).
pub fn total_variance(errors: &[f64]) -> Result<f64> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::InvalidArgument("total_variance needs at least two values".into()));
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    Ok(errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64)
}

pub fn rmse(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().map(|e| e * e).sum::<f64>() / series.len() as f64).sqrt()
}

/// Per-epoch position error norms and their RMSE.
pub fn ate(aligned: &AlignedPair) -> (Vec<f64>, f64) {
    let series: Vec<f64> = aligned.position_errors().iter().map(|e| e.norm()).collect();
    let r = rmse(&series);
    (series, r)
}

/// Relative displacement error over `delta_t`, one value per sample `k`
/// with `t_k − delta_t` inside the trajectory; the interval start is
/// interpolated. Entries before the first full interval are `None`.
pub fn rpe(aligned: &AlignedPair, delta_t: f64) -> Result<Vec<Option<f64>>> {
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("delta_t must be > 0, got {delta_t}")));
    }
    let (Some(first), Some(last)) = (aligned.estimate.first(), aligned.estimate.last()) else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    if delta_t > last.t - first.t + 1e-9 {
        return Err(Error::InvalidArgument(alloc::format!(
            "delta_t {delta_t} exceeds the trajectory span {}",
            last.t - first.t
        )));
    }
    let slack = 1e-9 * delta_t.max(1.0);
    Ok(aligned
        .estimate
        .iter()
        .zip(&aligned.ground_truth)
        .map(|(e, g)| {
            let t0 = e.t - delta_t;
            let t0 = if (t0 - first.t).abs() <= slack { first.t } else { t0 };
            let e0 = interpolate(&aligned.estimate, t0)?;
            let g0 = interpolate(&aligned.ground_truth, t0)?;
            Some(((e.position - e0.position) - (g.position - g0.position)).norm())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct EvalOptions {
    pub n_fixes: usize,
    pub resample: Resample,
    pub align: bool,
    pub rpe_delta: f64,
    /// Orientation errors count as arc lengths at this radius (m).
    pub lever_arm: f64,
    pub include_orientation: bool,
    pub variance: VarianceMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_fixes: 10,
            resample: Resample::default(),
            align: true,
            rpe_delta: 1.0,
            lever_arm: 1.0,
            include_orientation: true,
            variance: VarianceMode::default(),
        }
    }
}

/// One row of the per-epoch error CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub t: f64,
    pub error: Vec3,
    pub ate: f64,
    pub rpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub n_epochs: usize,
    pub position_mae: [f64; 3],
    pub orientation_mae: Option<[f64; 3]>,
    pub total_error: f64,
    pub total_variance: f64,
    pub ate_rmse: f64,
    pub rpe_rmse: f64,
    pub rpe_delta: f64,
    pub transform: YawTranslation,
    /// Epochs whose ATE deviates from its mean by more than 5σ.
    pub outliers_5sigma: usize,
    pub runtime_s: Option<f64>,
    pub rows: Vec<ErrorRow>,
}

fn outliers(series: &[f64]) -> usize {
    if series.len() < 2 {
        return 0;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let sd = total_variance(series).map(|v| v.sqrt()).unwrap_or(0.0);
    if sd == 0.0 {
        return 0;
    }
    series.iter().filter(|e| (**e - mean).abs() > 5.0 * sd).count()
}

pub fn evaluate(est: &[PoseSample], gt: &[PoseSample], opts: &EvalOptions) -> Result<TrajectoryReport> {
    if !(opts.lever_arm > 0.0 && opts.lever_arm.is_finite()) {
        return Err(Error::InvalidArgument("lever_arm must be > 0".into()));
    }
    let aligned = if opts.align {
        align_trajectories(
            est,
            gt,
            &AlignOptions {
                n_fixes: opts.n_fixes,
                resample: opts.resample,
            },
        )?
    } else {
        resample(est, gt, opts.resample)?
    };
    report(&aligned, opts)
}

pub fn report(aligned: &AlignedPair, opts: &EvalOptions) -> Result<TrajectoryReport> {
    let mut maes = Vec::new();
    let mut pooled = Vec::new();
    let mut position_mae = [0.0; 3];
    for (i, c) in Component::POSITION.iter().enumerate() {
        let e = component_errors(aligned, *c).unwrap_or_default();
        position_mae[i] = mean_absolute(&e);
        maes.push(position_mae[i]);
        pooled.extend(e);
    }
    let mut orientation_mae = None;
    if opts.include_orientation {
        if let Some(errs) = aligned.orientation_errors() {
            let mut m = [0.0; 3];
            for (i, slot) in m.iter_mut().enumerate() {
                let e: Vec<f64> = errs.iter().map(|v| v[i]).collect();
                *slot = mean_absolute(&e);
                maes.push(*slot * opts.lever_arm);
                pooled.extend(e.iter().map(|x| x * opts.lever_arm));
            }
            orientation_mae = Some(m);
        }
    }
    let total_variance = match opts.variance {
        VarianceMode::Pooled => total_variance(&pooled)?,
        VarianceMode::Maes => total_variance(&maes)?,
    };
    let (ate_series, ate_rmse) = ate(aligned);
    let span = aligned.estimate.last().map(|l| l.t).unwrap_or(0.0) - aligned.estimate.first().map(|f| f.t).unwrap_or(0.0);
    let rpe_series = if opts.rpe_delta <= span + 1e-9 {
        rpe(aligned, opts.rpe_delta)?
    } else {
        alloc::vec![None; aligned.len()]
    };
    let rpe_vals: Vec<f64> = rpe_series.iter().flatten().copied().collect();
    let rows = aligned
        .position_errors()
        .iter()
        .zip(aligned.times())
        .zip(ate_series.iter().zip(&rpe_series))
        .map(|((e, t), (a, r))| ErrorRow {
            t,
            error: *e,
            ate: *a,
            rpe: *r,
        })
        .collect();
    Ok(TrajectoryReport {
        n_epochs: aligned.len(),
        position_mae,
        orientation_mae,
        total_error: total_error(&maes)?,
        total_variance,
        ate_rmse,
        rpe_rmse: rmse(&rpe_vals),
        rpe_delta: opts.rpe_delta,
        transform: aligned.transform,
        outliers_5sigma: outliers(&ate_series),
        runtime_s: None,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(f: impl Fn(f64) -> Vec3, ts: impl Iterator<Item = f64>) -> Vec<PoseSample> {
        ts.map(|t| PoseSample {
            t,
            position: f(t),
            orientation: None,
        })
        .collect()
    }

    fn curve(t: f64) -> Vec3 {
        Vec3::new(5.0 * (0.1 * t).sin(), 0.5 * t, 0.1 * t)
    }

    fn times(n: usize, dt: f64) -> impl Iterator<Item = f64> {
        (0..n).map(move |k| k as f64 * dt)
    }

    #[test]
    fn identical_trajectories_align_to_identity() {
        let gt = traj(curve, times(100, 0.2));
        let pair = align_trajectories(&gt, &gt, &AlignOptions::default()).unwrap();
        assert_abs_diff_eq!(pair.transform.yaw, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pair.transform.translation, Vec3::zeros(), epsilon = 1e-12);
        assert!(ate(&pair).0.iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn recovers_constructed_transform() {
        let gt = traj(curve, times(100, 0.2));
        let r = UnitQuaternion::from_yaw(30f64.to_radians());
        let shift = Vec3::new(1.0, 2.0, 0.0);
        let est: Vec<PoseSample> = gt
            .iter()
            .map(|p| PoseSample {
                position: r.rotate(&p.position) + shift,
                ..*p
            })
            .collect();
        let pair = align_trajectories(&est, &gt, &AlignOptions::default()).unwrap();
        assert_abs_diff_eq!(pair.transform.yaw, -30f64.to_radians(), epsilon = 1e-6);
        let back = pair.transform.apply(&PoseSample {
            position: shift,
            ..gt[0]
        });
        assert_abs_diff_eq!(back.position, Vec3::zeros(), epsilon = 1e-6);
        assert!(ate(&pair).1 < 1e-6);
    }

    #[test]
    fn stationary_window_is_ill_conditioned() {
        let gt = traj(|t| if t < 5.0 { Vec3::new(1.0, 1.0, 0.0) } else { Vec3::new(t, 1.0, 0.0) }, times(100, 0.2));
        assert_eq!(
            align_trajectories(&gt, &gt, &AlignOptions::default()),
            Err(Error::IllConditionedAlignment { n_fixes: 10 })
        );
        assert!(align_trajectories(&gt, &gt, &AlignOptions { n_fixes: 40, ..Default::default() }).is_ok());
    }

    #[test]
    fn mae_examples() {
        let gt = traj(|_| Vec3::zeros(), times(3, 1.0));
        let est = traj(|t| Vec3::new([1.0, -1.0, 3.0][t as usize], 0.5, 0.0), times(3, 1.0));
        let pair = AlignedPair::unaligned(est, gt.clone()).unwrap();
        assert_abs_diff_eq!(state_mae(&pair, Component::PosX).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(state_mae(&pair, Component::PosY).unwrap(), 0.5, epsilon = 1e-15);
        let same = AlignedPair::unaligned(gt.clone(), gt).unwrap();
        assert_eq!(state_mae(&same, Component::PosZ), Some(0.0));
        assert_eq!(state_mae(&same, Component::OriZ), None);
    }

    #[test]
    fn total_error_examples() {
        assert_abs_diff_eq!(total_error(&[3.0, 4.0]).unwrap(), 12.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(total_error(&[0.0; 6]).unwrap(), 0.0);
        assert_eq!(total_error(&[0.7]).unwrap(), 0.7);
        assert!(total_error(&[]).is_err());
    }

    #[test]
    fn total_variance_examples() {
        assert_eq!(total_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert_eq!(total_variance(&[1.5; 7]).unwrap(), 0.0);
        assert!(total_variance(&[1.0]).is_err());
        let e = [0.3, -1.0, 2.5, 0.1];
        let scaled: Vec<f64> = e.iter().map(|x| x * 3.0).collect();
        assert_abs_diff_eq!(total_variance(&scaled).unwrap(), 9.0 * total_variance(&e).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn ate_examples() {
        let gt = traj(curve, times(50, 0.2));
        let off = traj(|t| curve(t) + Vec3::new(0.0, 1.0, 0.0), times(50, 0.2));
        let (s, r) = ate(&AlignedPair::unaligned(off, gt).unwrap());
        assert!(s.iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ate_of_linear_drift() {
        // drift 0.01·t at t = 1..100 s; closed form 0.01·sqrt((n+1)(2n+1)/6)
        let ts = || (1..=100).map(|k| k as f64);
        let gt = traj(|_| Vec3::zeros(), ts());
        let est = traj(|t| Vec3::new(0.01 * t, 0.0, 0.0), ts());
        let (_, r) = ate(&AlignedPair::unaligned(est, gt).unwrap());
        let n = 100.0f64;
        assert_abs_diff_eq!(r, 0.01 * ((n + 1.0) * (2.0 * n + 1.0) / 6.0).sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(r, 0.5816, epsilon = 1e-4);
    }

    #[test]
    fn rpe_examples() {
        let gt = traj(curve, times(101, 0.2));
        let drift = traj(|t| curve(t) + Vec3::new(0.01 * t, 0.0, 0.0), times(101, 0.2));
        let pair = AlignedPair::unaligned(drift, gt.clone()).unwrap();
        let r = rpe(&pair, 1.0).unwrap();
        assert!(r[..5].iter().all(|v| v.is_none()));
        assert!(r[5..].iter().all(|v| (v.unwrap() - 0.01).abs() < 1e-12));
        let same = AlignedPair::unaligned(gt.clone(), gt.clone()).unwrap();
        assert!(rpe(&same, 1.0).unwrap().iter().flatten().all(|v| *v == 0.0));
        assert!(rpe(&same, 100.0).is_err());
        assert!(rpe(&same, 0.0).is_err());
    }

    #[test]
    fn orientation_arc_length_enters_total_error() {
        let mk = |yaw: f64| -> Vec<PoseSample> {
            times(50, 0.2)
                .map(|t| PoseSample {
                    t,
                    position: curve(t),
                    orientation: Some(UnitQuaternion::from_yaw(yaw)),
                })
                .collect()
        };
        let pair = AlignedPair::unaligned(mk(0.01), mk(0.0)).unwrap();
        let rep = report(
            &pair,
            &EvalOptions {
                lever_arm: 2.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(rep.orientation_mae.unwrap()[2], 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.total_error, (0.02f64 * 0.02 / 6.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn resampling_directions() {
        let gt = traj(curve, times(201, 0.1));
        let est = traj(curve, times(41, 0.5));
        let a = resample(&est, &gt, Resample::GroundTruthToEstimate).unwrap();
        let b = resample(&est, &gt, Resample::EstimateToGroundTruth).unwrap();
        assert_eq!(a.len(), 41);
        assert_eq!(b.len(), 201);
        assert!(a.times().zip(a.ground_truth.iter()).all(|(t, g)| (t - g.t).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn rpe_translation_invariant(cx in -1e3..1e3f64, cy in -1e3..1e3f64, cz in -50.0..50.0f64, seed in 0u64..100) {
            let gt = traj(curve, times(60, 0.2));
            let est = traj(|t| curve(t) + Vec3::new((t + seed as f64).sin() * 0.1, 0.02 * t, 0.0), times(60, 0.2));
            let c = Vec3::new(cx, cy, cz);
            let moved: Vec<PoseSample> = est.iter().map(|p| PoseSample { position: p.position + c, ..*p }).collect();
            let a = rpe(&AlignedPair::unaligned(est, gt.clone()).unwrap(), 1.0).unwrap();
            let b = rpe(&AlignedPair::unaligned(moved, gt).unwrap(), 1.0).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + c.norm() / 1e3));
                }
            }
        }

        #[test]
        fn alignment_does_not_increase_window_ate(yaw in -3.0..3.0f64, noise in 0.0..0.5f64) {
            let gt = traj(curve, times(60, 0.2));
            let r = UnitQuaternion::from_yaw(yaw);
            let est: Vec<PoseSample> = gt.iter().enumerate().map(|(k, p)| PoseSample {
                position: r.rotate(&p.position) + Vec3::new(noise * (k as f64).sin(), noise * (k as f64 * 1.7).cos(), 0.3),
                ..*p
            }).collect();
            let window = |pair: &AlignedPair| rmse(&ate(pair).0[..10]);
            let before = window(&AlignedPair::unaligned(est.clone(), gt.clone()).unwrap());
            let after = window(&align_trajectories(&est, &gt, &AlignOptions::default()).unwrap());
            prop_assert!(after <= before + 1e-9);
        }

        #[test]
        fn total_error_monotone(m in proptest::collection::vec(0.0..10.0f64, 1..8), i in 0usize..8, bump in 0.0..5.0f64) {
            let i = i % m.len();
            let mut up = m.clone();
            up[i] += bump;
            prop_assert!(total_error(&up).unwrap() >= total_error(&m).unwrap());
        }

        #[test]
        fn metrics_ignore_row_order(perm_seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let gt = traj(curve, times(80, 0.2));
            let est = traj(|t| curve(t) * 1.01 + Vec3::new(0.1, 0.0, 0.0), times(80, 0.2));
            let mut shuffled = est.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha20Rng::seed_from_u64(perm_seed));
            let a = evaluate(&est, &gt, &EvalOptions::default()).unwrap();
            let b = evaluate(&shuffled, &gt, &EvalOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
