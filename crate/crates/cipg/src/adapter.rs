//! Declarative conversion of third-party sensor logs into the canonical
//! CSV schemas.
//!
//! An adapter spec maps each canonical column to a source column, with an
//! optional unit, scale and time offset per stream:
//!
//! ```toml
//! dvl_frame = "body"
//! [imu]
//! file = "imu_adis.csv"
//! [imu.columns]
//! t = "%time"
//! ax = "field.linear_acceleration.x"
//! # ...
//! [imu.units]
//! t = "ns"
//! gx = "deg/s"
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use cipg_core::sensors::{dvl_body_to_nav, enforce_hemisphere, DvlFrame};
use cipg_core::{AhrsSample, DvlSample, GpsFix, GroundTruthSample, ImuSample, UnitQuaternion, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const LOG_FILE: &str = "adapt_log.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "ms")]
    Milliseconds,
    #[serde(rename = "us")]
    Microseconds,
    #[serde(rename = "ns")]
    Nanoseconds,
    #[serde(rename = "m/s^2")]
    MetersPerSecond2,
    #[serde(rename = "g")]
    StandardGravity,
    #[serde(rename = "rad/s")]
    RadiansPerSecond,
    #[serde(rename = "deg/s")]
    DegreesPerSecond,
    #[serde(rename = "m/s")]
    MetersPerSecond,
    #[serde(rename = "mm/s")]
    MillimetersPerSecond,
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "deg")]
    Degrees,
    #[serde(rename = "rad")]
    Radians,
    #[serde(rename = "1")]
    Unitless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Time,
    Acceleration,
    AngularRate,
    Velocity,
    Length,
    Angle,
    None,
}

impl Unit {
    fn factor(self) -> f64 {
        match self {
            Unit::Seconds
            | Unit::MetersPerSecond2
            | Unit::RadiansPerSecond
            | Unit::MetersPerSecond
            | Unit::Meters
            | Unit::Degrees
            | Unit::Unitless => 1.0,
            Unit::Milliseconds | Unit::MillimetersPerSecond => 1e-3,
            Unit::Microseconds => 1e-6,
            Unit::Nanoseconds => 1e-9,
            Unit::StandardGravity => cipg_core::preintegration::STANDARD_GRAVITY,
            Unit::DegreesPerSecond => std::f64::consts::PI / 180.0,
            // the only angle columns are lat/lon, stored in degrees
            Unit::Radians => 180.0 / std::f64::consts::PI,
        }
    }

    fn dimension(self) -> Dimension {
        match self {
            Unit::Seconds | Unit::Milliseconds | Unit::Microseconds | Unit::Nanoseconds => Dimension::Time,
            Unit::MetersPerSecond2 | Unit::StandardGravity => Dimension::Acceleration,
            Unit::RadiansPerSecond | Unit::DegreesPerSecond => Dimension::AngularRate,
            Unit::MetersPerSecond | Unit::MillimetersPerSecond => Dimension::Velocity,
            Unit::Meters => Dimension::Length,
            Unit::Degrees | Unit::Radians => Dimension::Angle,
            Unit::Unitless => Dimension::None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unit::Seconds => "s",
            Unit::Milliseconds => "ms",
            Unit::Microseconds => "us",
            Unit::Nanoseconds => "ns",
            Unit::MetersPerSecond2 => "m/s^2",
            Unit::StandardGravity => "g",
            Unit::RadiansPerSecond => "rad/s",
            Unit::DegreesPerSecond => "deg/s",
            Unit::MetersPerSecond => "m/s",
            Unit::MillimetersPerSecond => "mm/s",
            Unit::Meters => "m",
            Unit::Degrees => "deg",
            Unit::Radians => "rad",
            Unit::Unitless => "1",
        }
    }
}

fn column_dimension(column: &str) -> Dimension {
    match column {
        "t" => Dimension::Time,
        "ax" | "ay" | "az" => Dimension::Acceleration,
        "gx" | "gy" | "gz" => Dimension::AngularRate,
        "vx" | "vy" | "vz" => Dimension::Velocity,
        "px" | "py" | "pz" => Dimension::Length,
        // canonical lat/lon are degrees
        "lat" | "lon" => Dimension::Angle,
        _ => Dimension::None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub file: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Canonical column name → source column name.
    pub columns: BTreeMap<String, String>,
    #[serde(default)]
    pub units: BTreeMap<String, Unit>,
    /// Extra multiplier per canonical column, applied after the unit.
    #[serde(default)]
    pub scale: BTreeMap<String, f64>,
    /// Seconds added to every converted timestamp.
    #[serde(default)]
    pub time_offset: f64,
}

fn default_delimiter() -> char {
    ','
}

impl StreamSpec {
    /// Identity mapping onto a canonical file.
    pub fn canonical(file: &str, columns: &[&str]) -> Self {
        Self {
            file: PathBuf::from(file),
            delimiter: ',',
            columns: columns.iter().map(|c| (c.to_string(), c.to_string())).collect(),
            units: BTreeMap::new(),
            scale: BTreeMap::new(),
            time_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    #[serde(default)]
    pub name: String,
    /// Frame of the source DVL velocities; body-frame data is rotated
    /// into the navigation frame with the nearest AHRS attitude.
    #[serde(default)]
    pub dvl_frame: DvlFrame,
    /// Subtract the first IMU timestamp from every stream.
    #[serde(default)]
    pub zero_time: bool,
    pub imu: Option<StreamSpec>,
    pub dvl: Option<StreamSpec>,
    pub ahrs: Option<StreamSpec>,
    pub gt: Option<StreamSpec>,
    pub gps: Option<StreamSpec>,
}

impl AdapterSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Maps canonical files onto themselves.
    pub fn canonical() -> Self {
        Self {
            name: "canonical".into(),
            dvl_frame: DvlFrame::Nav,
            zero_time: false,
            imu: Some(StreamSpec::canonical(io::IMU_FILE, io::IMU_COLUMNS)),
            dvl: Some(StreamSpec::canonical(io::DVL_FILE, io::DVL_COLUMNS)),
            ahrs: Some(StreamSpec::canonical(io::AHRS_FILE, io::AHRS_COLUMNS)),
            gt: None,
            gps: None,
        }
    }

    fn required<'a>(&'a self, s: &'a Option<StreamSpec>, name: &str) -> Result<&'a StreamSpec> {
        s.as_ref()
            .ok_or_else(|| Error::Config(format!("adapter spec has no [{name}] stream; imu, dvl and ahrs are required")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamLog {
    pub stream: String,
    pub source: PathBuf,
    pub rows_read: usize,
    pub rows_written: usize,
    pub rows_dropped: usize,
    pub conversions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdaptLog {
    pub streams: Vec<StreamLog>,
    pub hemisphere_flips: usize,
    pub warnings: Vec<String>,
}

impl AdaptLog {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.streams {
            let _ = writeln!(s, "[{}]", l.stream);
            let _ = writeln!(s, "source = {}", l.source.display());
            let _ = writeln!(s, "rows_read = {}", l.rows_read);
            let _ = writeln!(s, "rows_written = {}", l.rows_written);
            let _ = writeln!(s, "rows_dropped = {}", l.rows_dropped);
            for c in &l.conversions {
                let _ = writeln!(s, "conversion = {c}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "hemisphere_flips = {}", self.hemisphere_flips);
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

/// Converted rows of one stream: canonical column order, seconds and SI.
struct Converted {
    rows: Vec<Vec<f64>>,
    log: StreamLog,
}

fn convert(stream: &str, spec: &StreamSpec, canonical: &[&str], optional: &[&str], source_dir: &Path) -> Result<Converted> {
    let path = source_dir.join(&spec.file);
    let mut log = StreamLog {
        stream: stream.to_owned(),
        source: path.clone(),
        ..StreamLog::default()
    };
    for key in spec.columns.keys().chain(spec.units.keys()).chain(spec.scale.keys()) {
        if !canonical.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(Error::Config(format!("{stream}: unknown canonical column {key:?}")));
        }
    }
    let has_optional = optional.iter().all(|c| spec.columns.contains_key(*c));
    let mut wanted: Vec<&str> = canonical.to_vec();
    if has_optional {
        wanted.extend_from_slice(optional);
    }

    let file = File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("{stream}: source file {} not found", path.display())),
        _ => Error::io(&path, e),
    })?;
    let delimiter = u8::try_from(spec.delimiter)
        .map_err(|_| Error::Config(format!("{stream}: delimiter must be a single ASCII character")))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();

    let mut plan = Vec::with_capacity(wanted.len());
    for c in &wanted {
        let src = spec
            .columns
            .get(*c)
            .ok_or_else(|| Error::Config(format!("{stream}: no source column mapped to {c:?}")))?;
        let idx = header
            .iter()
            .position(|h| h == src)
            .ok_or_else(|| Error::Config(format!("{stream}: source column {src:?} not in {}", path.display())))?;
        let mut factor = 1.0;
        if let Some(unit) = spec.units.get(*c) {
            if unit.dimension() != column_dimension(c) {
                return Err(Error::Config(format!("{stream}: unit {:?} does not fit column {c}", unit.name())));
            }
            factor *= unit.factor();
            if unit.factor() != 1.0 {
                log.conversions.push(format!("{c}: {} -> SI (x{})", unit.name(), unit.factor()));
            }
        }
        if let Some(s) = spec.scale.get(*c) {
            factor *= s;
            log.conversions.push(format!("{c}: scale x{s}"));
        }
        if src != c {
            log.conversions.push(format!("{c} <- {src}"));
        }
        plan.push((idx, factor));
    }
    if spec.time_offset != 0.0 {
        log.conversions.push(format!("t: offset {:+} s", spec.time_offset));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        log.rows_read += 1;
        let values: Option<Vec<f64>> = plan
            .iter()
            .map(|&(idx, factor)| {
                record
                    .get(idx)
                    .and_then(|cell| cell.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .map(|v| v * factor)
            })
            .collect();
        let Some(mut values) = values else {
            log.rows_dropped += 1;
            continue;
        };
        values[0] += spec.time_offset;
        if rows.last().is_some_and(|prev| values[0] <= prev[0]) {
            log.rows_dropped += 1;
            continue;
        }
        rows.push(values);
    }
    if log.rows_dropped > 0 {
        log::warn!("{stream}: dropped {} of {} rows (unparsable or out of order)", log.rows_dropped, log.rows_read);
    }
    Ok(Converted { rows, log })
}

fn v3(v: &[f64]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

/// Median |accel| over the first samples, in m/s².
fn accel_magnitude(imu: &[ImuSample]) -> Option<f64> {
    let mut norms: Vec<f64> = imu.iter().take(200).map(|s| s.accel.norm()).collect();
    if norms.is_empty() {
        return None;
    }
    norms.sort_by(f64::total_cmp);
    Some(norms[norms.len() / 2])
}

fn nearest_attitude(ahrs: &[AhrsSample], t: f64) -> Option<UnitQuaternion> {
    let i = ahrs.partition_point(|a| a.t < t);
    let candidates = [i.checked_sub(1), (i < ahrs.len()).then_some(i)];
    candidates
        .into_iter()
        .flatten()
        .min_by(|&a, &b| (ahrs[a].t - t).abs().total_cmp(&(ahrs[b].t - t).abs()))
        .map(|k| ahrs[k].orientation)
}

/// Converts the streams named in `spec` (paths relative to `source_dir`)
/// and writes canonical CSVs and the conversion log into `out`.
pub fn adapt(spec: &AdapterSpec, source_dir: &Path, out: &Path) -> Result<AdaptLog> {
    let imu_spec = spec.required(&spec.imu, "imu")?;
    let dvl_spec = spec.required(&spec.dvl, "dvl")?;
    let ahrs_spec = spec.required(&spec.ahrs, "ahrs")?;
    let mut log = AdaptLog::default();

    let mut imu_c = convert("imu", imu_spec, io::IMU_COLUMNS, &[], source_dir)?;
    let mut dvl_c = convert("dvl", dvl_spec, io::DVL_COLUMNS, &[], source_dir)?;
    let mut ahrs_c = convert("ahrs", ahrs_spec, io::AHRS_COLUMNS, &[], source_dir)?;
    let mut gt_c = spec
        .gt
        .as_ref()
        .map(|s| convert("gt", s, io::GT_COLUMNS, &io::GT_POSE_COLUMNS[4..], source_dir))
        .transpose()?;
    let mut gps_c = spec
        .gps
        .as_ref()
        .map(|s| convert("gps", s, io::GPS_COLUMNS, &[], source_dir))
        .transpose()?;

    if spec.zero_time {
        if let Some(t0) = imu_c.rows.first().map(|r| r[0]) {
            let all = [Some(&mut imu_c), Some(&mut dvl_c), Some(&mut ahrs_c), gt_c.as_mut(), gps_c.as_mut()];
            for c in all.into_iter().flatten() {
                c.rows.iter_mut().for_each(|r| r[0] -= t0);
                c.log.conversions.push(format!("t: minus first IMU time {t0}"));
            }
        }
    }

    let imu: Vec<ImuSample> = imu_c
        .rows
        .iter()
        .map(|r| ImuSample {
            t: r[0],
            accel: v3(&r[1..4]),
            gyro: v3(&r[4..7]),
        })
        .collect();
    let mut ahrs = Vec::with_capacity(ahrs_c.rows.len());
    for r in &ahrs_c.rows {
        match UnitQuaternion::new(r[1], r[2], r[3], r[4]) {
            Ok(q) => ahrs.push(AhrsSample { t: r[0], orientation: q }),
            Err(_) => ahrs_c.log.rows_dropped += 1,
        }
    }
    log.hemisphere_flips = enforce_hemisphere(&mut ahrs);
    let mut dvl: Vec<DvlSample> = dvl_c
        .rows
        .iter()
        .map(|r| DvlSample {
            t: r[0],
            velocity: v3(&r[1..4]),
        })
        .collect();
    if spec.dvl_frame == DvlFrame::Body {
        if ahrs.is_empty() {
            return Err(Error::Config("dvl: body-frame velocities need an AHRS stream to rotate them".into()));
        }
        for d in dvl.iter_mut() {
            if let Some(q) = nearest_attitude(&ahrs, d.t) {
                *d = dvl_body_to_nav(d, &q);
            }
        }
        dvl_c.log.conversions.push("velocity: body -> nav with nearest AHRS attitude".into());
    }

    if let Some(m) = accel_magnitude(&imu) {
        if !(9.0..=10.6).contains(&m) {
            log.warnings.push(format!(
                "median accelerometer magnitude {m:.3} m/s^2 is far from 9.81; check the accelerometer unit (g vs m/s^2)"
            ));
        }
    }
    let mean_az = imu.iter().take(200).map(|s| s.accel.z).sum::<f64>() / imu.len().clamp(1, 200) as f64;
    if mean_az > 4.9 {
        log.warnings.push(format!(
            "mean z specific force {mean_az:.3} m/s^2 is positive; a level NED body frame reads about -9.81"
        ));
    }
    for w in &log.warnings {
        log::warn!("{w}");
    }

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    io::write_imu(&out.join(io::IMU_FILE), &imu)?;
    io::write_dvl(&out.join(io::DVL_FILE), &dvl)?;
    io::write_ahrs(&out.join(io::AHRS_FILE), &ahrs)?;
    imu_c.log.rows_written = imu.len();
    dvl_c.log.rows_written = dvl.len();
    ahrs_c.log.rows_written = ahrs.len();
    log.streams.extend([imu_c.log, dvl_c.log, ahrs_c.log]);

    if let Some(mut c) = gt_c {
        let mut gt = Vec::with_capacity(c.rows.len());
        for r in &c.rows {
            let orientation = if r.len() == 8 {
                match UnitQuaternion::new(r[4], r[5], r[6], r[7]) {
                    Ok(q) => Some(q),
                    Err(_) => {
                        c.log.rows_dropped += 1;
                        continue;
                    }
                }
            } else {
                None
            };
            gt.push(GroundTruthSample {
                t: r[0],
                position: v3(&r[1..4]),
                orientation,
            });
        }
        io::write_ground_truth(&out.join(io::GT_FILE), &gt)?;
        c.log.rows_written = gt.len();
        log.streams.push(c.log);
    }
    if let Some(mut c) = gps_c {
        let fixes: Vec<GpsFix> = c.rows.iter().map(|r| GpsFix { t: r[0], lat: r[1], lon: r[2] }).collect();
        io::write_gps(&out.join(io::GPS_FILE), &fixes)?;
        c.log.rows_written = fixes.len();
        log.streams.push(c.log);
    }

    let log_path = out.join(LOG_FILE);
    std::fs::write(&log_path, log.render()).map_err(|e| Error::io(&log_path, e))?;
    Ok(log)
}
