//! Sensor records, epoch synchronization and frame helpers.

use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::rotation::{UnitQuaternion, Vec3};

/// Mean earth radius used by the local-tangent GPS projection, in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Body-frame specific force (m/s²) and angular rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImuSample {
    pub t: f64,
    pub accel: Vec3,
    pub gyro: Vec3,
}

/// Linear velocity in m/s; navigation frame unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DvlSample {
    pub t: f64,
    pub velocity: Vec3,
}

/// Body-to-navigation attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AhrsSample {
    pub t: f64,
    pub orientation: UnitQuaternion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruthSample {
    pub t: f64,
    pub position: Vec3,
    pub orientation: Option<UnitQuaternion>,
}

/// Geodetic fix in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpsFix {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
}

/// IMU samples between two measurement epochs.
///
/// Sample `j` is held over `(t_{j-1}, t_j]`, with `t_{-1} = t_start`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImuBurst {
    pub t_start: f64,
    pub samples: Vec<ImuSample>,
}

impl ImuBurst {
    pub fn new(t_start: f64, samples: Vec<ImuSample>) -> Self {
        Self { t_start, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(self.t_start, |s| s.t)
    }

    /// `(dt, sample)` pairs with `dt` taken from consecutive timestamps.
    pub fn steps(&self) -> impl Iterator<Item = (f64, &ImuSample)> + '_ {
        let mut prev = self.t_start;
        self.samples.iter().map(move |s| {
            let dt = s.t - prev;
            prev = s.t;
            (dt, s)
        })
    }
}

/// One measurement epoch: the DVL timestamp, its paired AHRS sample and the
/// IMU samples since the previous epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyncedEpoch {
    pub t: f64,
    pub t_prev: Option<f64>,
    pub imu_burst: ImuBurst,
    pub dvl: DvlSample,
    pub ahrs: AhrsSample,
}

impl SyncedEpoch {
    /// Epoch period; `None` for the first epoch.
    pub fn period(&self) -> Option<f64> {
        self.t_prev.map(|p| self.t - p)
    }
}

/// Frame in which a DVL stream reports velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum DvlFrame {
    #[default]
    Nav,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyncOptions {
    /// Maximum |t_ahrs − t_epoch|. Defaults to half the median DVL period.
    pub ahrs_tolerance: Option<f64>,
    pub dvl_frame: DvlFrame,
}

/// Fallback tolerance when the DVL stream has fewer than two samples.
const SINGLE_SAMPLE_TOLERANCE: f64 = 0.1;
/// Fallback IMU period for the first burst when the IMU stream has one sample.
const FALLBACK_IMU_PERIOD: f64 = 0.01;
// absorbs text round-off in CSV timestamps when testing the tolerance
const TIME_EPS: f64 = 1e-9;

pub fn check_increasing(times: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut prev: Option<f64> = None;
    for t in times {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite timestamp {t}")));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::Ordering { t });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Sign-fixes AHRS samples so consecutive quaternions share a hemisphere.
/// Returns the number of flipped samples.
pub fn enforce_hemisphere(ahrs: &mut [AhrsSample]) -> usize {
    let mut flips = 0;
    for i in 1..ahrs.len() {
        let prev = ahrs[i - 1].orientation;
        if ahrs[i].orientation.dot(&prev) < 0.0 {
            ahrs[i].orientation = ahrs[i].orientation.negated();
            flips += 1;
        }
    }
    flips
}

pub fn dvl_body_to_nav(dvl: &DvlSample, attitude: &UnitQuaternion) -> DvlSample {
    DvlSample {
        t: dvl.t,
        velocity: attitude.rotate(&dvl.velocity),
    }
}

fn median_period(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

fn nearest_index(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let i = times.partition_point(|&x| x < t);
    match (i.checked_sub(1), (i < times.len()).then_some(i)) {
        (Some(a), Some(b)) => Some(if t - times[a] <= times[b] - t { a } else { b }),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    }
}

/// Builds one epoch per DVL timestamp inside the IMU time range.
///
/// Every IMU sample from the start of the IMU stream up to the last epoch
/// lands in exactly one burst.
pub fn synchronize(
    imu: &[ImuSample],
    dvl: &[DvlSample],
    ahrs: &[AhrsSample],
    options: &SyncOptions,
) -> Result<Vec<SyncedEpoch>> {
    check_increasing(imu.iter().map(|s| s.t))?;
    check_increasing(dvl.iter().map(|s| s.t))?;
    check_increasing(ahrs.iter().map(|s| s.t))?;
    let (Some(imu_first), Some(imu_last)) = (imu.first(), imu.last()) else {
        return Err(Error::InvalidArgument("IMU stream is empty".into()));
    };

    let dvl_times: Vec<f64> = dvl.iter().map(|s| s.t).collect();
    let ahrs_times: Vec<f64> = ahrs.iter().map(|s| s.t).collect();
    let imu_times: Vec<f64> = imu.iter().map(|s| s.t).collect();
    let tolerance = match options.ahrs_tolerance {
        Some(tol) if tol.is_finite() && tol >= 0.0 => tol,
        Some(tol) => return Err(Error::InvalidArgument(format!("AHRS tolerance must be >= 0, got {tol}"))),
        None => median_period(&dvl_times).map_or(SINGLE_SAMPLE_TOLERANCE, |p| 0.5 * p),
    };
    let imu_period = median_period(&imu_times).unwrap_or(FALLBACK_IMU_PERIOD);

    let mut epochs = Vec::new();
    let mut t_prev: Option<f64> = None;
    let mut cursor = 0usize;
    for d in dvl.iter().filter(|d| d.t >= imu_first.t && d.t <= imu_last.t) {
        let end = cursor + imu[cursor..].partition_point(|s| s.t <= d.t);
        let samples = imu[cursor..end].to_vec();
        if samples.is_empty() {
            return Err(Error::Gap {
                t: d.t,
                reason: "no IMU samples since the previous epoch".into(),
            });
        }
        let t_start = t_prev.unwrap_or(samples[0].t - imu_period);
        cursor = end;

        let ahrs_sample = nearest_index(&ahrs_times, d.t)
            .filter(|&i| (ahrs_times[i] - d.t).abs() <= tolerance + TIME_EPS)
            .map(|i| ahrs[i])
            .ok_or_else(|| Error::Gap {
                t: d.t,
                reason: format!("no AHRS sample within {tolerance} s"),
            })?;
        let dvl_sample = match options.dvl_frame {
            DvlFrame::Nav => *d,
            DvlFrame::Body => dvl_body_to_nav(d, &ahrs_sample.orientation),
        };
        epochs.push(SyncedEpoch {
            t: d.t,
            t_prev,
            imu_burst: ImuBurst::new(t_start, samples),
            dvl: dvl_sample,
            ahrs: AhrsSample {
                t: d.t,
                orientation: ahrs_sample.orientation,
            },
        });
        t_prev = Some(d.t);
    }
    if epochs.is_empty() {
        return Err(Error::InvalidArgument("IMU and DVL streams do not overlap in time".into()));
    }
    Ok(epochs)
}

/// Equirectangular projection of geodetic fixes onto local north/east metres
/// about `origin` (default: first finite fix). Non-finite fixes are skipped;
/// the second return value counts them.
pub fn gps_to_local(fixes: &[GpsFix], origin: Option<(f64, f64)>) -> (Vec<GroundTruthSample>, usize) {
    let finite = |f: &&GpsFix| f.t.is_finite() && f.lat.is_finite() && f.lon.is_finite();
    let origin = origin.or_else(|| fixes.iter().find(finite).map(|f| (f.lat, f.lon)));
    let Some((lat0, lon0)) = origin else {
        return (Vec::new(), fixes.len());
    };
    let mut out = Vec::with_capacity(fixes.len());
    let mut skipped = 0;
    for f in fixes {
        if !finite(&f) {
            skipped += 1;
            continue;
        }
        let (n, e) = latlon_to_ne(f.lat, f.lon, lat0, lon0);
        out.push(GroundTruthSample {
            t: f.t,
            position: Vec3::new(n, e, 0.0),
            orientation: None,
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} non-finite GPS fixes");
    }
    (out, skipped)
}

pub fn latlon_to_ne(lat: f64, lon: f64, lat0: f64, lon0: f64) -> (f64, f64) {
    let north = EARTH_RADIUS_M * (lat - lat0).to_radians();
    let east = EARTH_RADIUS_M * lat0.to_radians().cos() * (lon - lon0).to_radians();
    (north, east)
}

/// Inverse of [`latlon_to_ne`].
pub fn ne_to_latlon(north: f64, east: f64, lat0: f64, lon0: f64) -> (f64, f64) {
    let lat = lat0 + (north / EARTH_RADIUS_M).to_degrees();
    let lon = lon0 + (east / (EARTH_RADIUS_M * lat0.to_radians().cos())).to_degrees();
    (lat, lon)
}
