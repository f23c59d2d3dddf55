//! Canonical CSV schemas: loaders validate headers, values and time
//! ordering; writers emit shortest round-trip decimal floats.

use std::fs::File;
use std::path::{Path, PathBuf};

use cipg_core::cascade::{EstimateRow, OutputFlag};
use cipg_core::metrics::ErrorRow;
use cipg_core::sensors::{check_increasing, enforce_hemisphere};
use cipg_core::{AhrsSample, DvlSample, GpsFix, GroundTruthSample, ImuSample, NavState, UnitQuaternion, Vec3};

use crate::error::{Error, Result};

pub const IMU_COLUMNS: &[&str] = &["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const DVL_COLUMNS: &[&str] = &["t", "vx", "vy", "vz"];
pub const AHRS_COLUMNS: &[&str] = &["t", "qw", "qx", "qy", "qz"];
pub const GT_COLUMNS: &[&str] = &["t", "px", "py", "pz"];
pub const GT_POSE_COLUMNS: &[&str] = &["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];
pub const GPS_COLUMNS: &[&str] = &["t", "lat", "lon"];
pub const TRAJECTORY_COLUMNS: &[&str] = &[
    "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "flag",
];
pub const ERROR_COLUMNS: &[&str] = &["t", "ex", "ey", "ez", "ate", "rpe"];

pub const IMU_FILE: &str = "imu.csv";
pub const DVL_FILE: &str = "dvl.csv";
pub const AHRS_FILE: &str = "ahrs.csv";
pub const GT_FILE: &str = "gt.csv";
pub const GPS_FILE: &str = "gps.csv";

/// Kind of reference trajectory a CSV holds, decided by its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    GroundTruth,
    Gps,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn header(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| csv_error(path, e))?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn match_schema(path: &Path, found: &[String], schemas: &[&[&str]]) -> Result<usize> {
    schemas
        .iter()
        .position(|s| s.len() == found.len() && s.iter().zip(found).all(|(a, b)| a == b))
        .ok_or_else(|| Error::Header {
            path: path.to_path_buf(),
            expected: schemas.iter().map(|s| s.join(",")).collect::<Vec<_>>().join(" or "),
            found: found.to_vec(),
        })
}

struct Row {
    line: u64,
    values: Vec<f64>,
}

/// Reads a purely numeric table. `allow_missing` maps empty/non-finite
/// cells to NaN instead of failing.
fn numeric_table(path: &Path, schemas: &[&[&str]], allow_missing: bool) -> Result<(usize, Vec<Row>)> {
    let mut rdr = reader(path)?;
    let found = header(path, &mut rdr)?;
    let schema = match_schema(path, &found, schemas)?;
    let columns = schemas[schema];
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(columns.len());
        for (name, cell) in columns.iter().zip(record.iter()) {
            values.push(parse_cell(path, line, name, cell, allow_missing && *name != "t")?);
        }
        rows.push(Row { line, values });
    }
    check_order(path, rows.iter().map(|r| r.values[0]))?;
    Ok((schema, rows))
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str, allow_missing: bool) -> Result<f64> {
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    if cell.is_empty() {
        return if allow_missing {
            Ok(f64::NAN)
        } else {
            Err(parse_err(format!("empty value in column {column}")))
        };
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(format!("invalid number {cell:?} in column {column}")))?;
    if !v.is_finite() && !allow_missing {
        return Err(parse_err(format!("non-finite value in column {column}")));
    }
    Ok(v)
}

fn check_order(path: &Path, times: impl IntoIterator<Item = f64>) -> Result<()> {
    check_increasing(times).map_err(|source| Error::Data {
        path: path.to_path_buf(),
        source,
    })
}

fn vec3(v: &[f64]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn quaternion(path: &Path, line: u64, v: &[f64]) -> Result<UnitQuaternion> {
    UnitQuaternion::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    })
}

pub fn load_imu(path: &Path) -> Result<Vec<ImuSample>> {
    let (_, rows) = numeric_table(path, &[IMU_COLUMNS], false)?;
    Ok(rows
        .iter()
        .map(|r| ImuSample {
            t: r.values[0],
            accel: vec3(&r.values[1..4]),
            gyro: vec3(&r.values[4..7]),
        })
        .collect())
}

pub fn load_dvl(path: &Path) -> Result<Vec<DvlSample>> {
    let (_, rows) = numeric_table(path, &[DVL_COLUMNS], false)?;
    Ok(rows
        .iter()
        .map(|r| DvlSample {
            t: r.values[0],
            velocity: vec3(&r.values[1..4]),
        })
        .collect())
}

/// Loads and normalizes AHRS quaternions, then flips signs so consecutive
/// samples share a hemisphere. Returns the samples and the flip count.
pub fn load_ahrs(path: &Path) -> Result<(Vec<AhrsSample>, usize)> {
    let (_, rows) = numeric_table(path, &[AHRS_COLUMNS], false)?;
    let mut samples = rows
        .iter()
        .map(|r| {
            Ok(AhrsSample {
                t: r.values[0],
                orientation: quaternion(path, r.line, &r.values[1..5])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flips = enforce_hemisphere(&mut samples);
    if flips > 0 {
        log::info!("{}: {flips} AHRS hemisphere flips", path.display());
    }
    Ok((samples, flips))
}

/// Position-only or full-pose ground truth.
pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthSample>> {
    let (schema, rows) = numeric_table(path, &[GT_COLUMNS, GT_POSE_COLUMNS], false)?;
    rows.iter()
        .map(|r| {
            let orientation = if schema == 1 {
                Some(quaternion(path, r.line, &r.values[4..8])?)
            } else {
                None
            };
            Ok(GroundTruthSample {
                t: r.values[0],
                position: vec3(&r.values[1..4]),
                orientation,
            })
        })
        .collect()
}

/// GPS fixes in degrees; missing coordinates load as NaN and are skipped
/// later by the local projection.
pub fn load_gps(path: &Path) -> Result<Vec<GpsFix>> {
    let (_, rows) = numeric_table(path, &[GPS_COLUMNS], true)?;
    Ok(rows
        .iter()
        .map(|r| GpsFix {
            t: r.values[0],
            lat: r.values[1],
            lon: r.values[2],
        })
        .collect())
}

pub fn detect_reference(path: &Path) -> Result<Reference> {
    let mut rdr = reader(path)?;
    let found = header(path, &mut rdr)?;
    match match_schema(path, &found, &[GT_COLUMNS, GT_POSE_COLUMNS, GPS_COLUMNS])? {
        2 => Ok(Reference::Gps),
        _ => Ok(Reference::GroundTruth),
    }
}

fn parse_flag(path: &Path, line: u64, s: &str) -> Result<OutputFlag> {
    match s {
        "ok" => Ok(OutputFlag::Ok),
        "warmup" => Ok(OutputFlag::Warmup),
        "fallback" => Ok(OutputFlag::Fallback),
        other => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("unknown flag {other:?}"),
        }),
    }
}

pub fn load_trajectory(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut rdr = reader(path)?;
    let found = header(path, &mut rdr)?;
    match_schema(path, &found, &[TRAJECTORY_COLUMNS])?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut v = [0.0; 11];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = parse_cell(path, line, TRAJECTORY_COLUMNS[i], &record[i], false)?;
        }
        rows.push(EstimateRow {
            t: v[0],
            state: NavState {
                position: vec3(&v[1..4]),
                velocity: vec3(&v[4..7]),
                orientation: quaternion(path, line, &v[7..11])?,
            },
            flag: parse_flag(path, line, &record[11])?,
        });
    }
    check_order(path, rows.iter().map(|r| r.t))?;
    Ok(rows)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

fn write_table<I, R>(path: &Path, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(columns).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn nums(values: impl IntoIterator<Item = f64>) -> impl Iterator<Item = String> {
    values.into_iter().map(num)
}

fn quat_values(q: &UnitQuaternion) -> [f64; 4] {
    q.to_array()
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<()> {
    write_table(
        path,
        IMU_COLUMNS,
        samples.iter().map(|s| {
            nums([s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z])
        }),
    )
}

pub fn write_dvl(path: &Path, samples: &[DvlSample]) -> Result<()> {
    write_table(
        path,
        DVL_COLUMNS,
        samples.iter().map(|s| nums([s.t, s.velocity.x, s.velocity.y, s.velocity.z])),
    )
}

pub fn write_ahrs(path: &Path, samples: &[AhrsSample]) -> Result<()> {
    write_table(
        path,
        AHRS_COLUMNS,
        samples.iter().map(|s| {
            let q = quat_values(&s.orientation);
            nums([s.t, q[0], q[1], q[2], q[3]])
        }),
    )
}

/// Writes the full-pose schema when every sample has an orientation.
pub fn write_ground_truth(path: &Path, samples: &[GroundTruthSample]) -> Result<()> {
    let full = !samples.is_empty() && samples.iter().all(|s| s.orientation.is_some());
    let columns = if full { GT_POSE_COLUMNS } else { GT_COLUMNS };
    write_table(
        path,
        columns,
        samples.iter().map(|s| {
            let mut v = vec![s.t, s.position.x, s.position.y, s.position.z];
            if let (true, Some(q)) = (full, s.orientation) {
                v.extend(quat_values(&q));
            }
            nums(v).collect::<Vec<_>>()
        }),
    )
}

pub fn write_gps(path: &Path, fixes: &[GpsFix]) -> Result<()> {
    write_table(path, GPS_COLUMNS, fixes.iter().map(|f| nums([f.t, f.lat, f.lon])))
}

pub fn write_trajectory(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    write_table(
        path,
        TRAJECTORY_COLUMNS,
        rows.iter().map(|r| {
            let s = &r.state;
            let q = quat_values(&s.orientation);
            let mut cells: Vec<String> = nums([
                r.t,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                q[0],
                q[1],
                q[2],
                q[3],
            ])
            .collect();
            cells.push(r.flag.as_str().to_owned());
            cells
        }),
    )
}

/// RPE cells are empty within the first interval.
pub fn write_errors(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    write_table(
        path,
        ERROR_COLUMNS,
        rows.iter().map(|r| {
            let mut cells: Vec<String> = nums([r.t, r.error.x, r.error.y, r.error.z, r.ate]).collect();
            cells.push(r.rpe.map(num).unwrap_or_default());
            cells
        }),
    )
}

/// Sensor and reference files of one dataset.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    /// Directory holding the canonical file names; explicit paths win.
    pub dir: Option<PathBuf>,
    pub imu: Option<PathBuf>,
    pub dvl: Option<PathBuf>,
    pub ahrs: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub gps: Option<PathBuf>,
}

impl DatasetPaths {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    fn pick(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit.clone().or_else(|| self.dir.as_ref().map(|d| d.join(name)))
    }

    fn required(&self, explicit: &Option<PathBuf>, name: &str, stream: &str) -> Result<PathBuf> {
        self.pick(explicit, name)
            .ok_or_else(|| Error::Config(format!("no {stream} file given (set input.dataset.dir or input.dataset.{stream})")))
    }

    pub fn imu_path(&self) -> Result<PathBuf> {
        self.required(&self.imu, IMU_FILE, "imu")
    }

    pub fn dvl_path(&self) -> Result<PathBuf> {
        self.required(&self.dvl, DVL_FILE, "dvl")
    }

    pub fn ahrs_path(&self) -> Result<PathBuf> {
        self.required(&self.ahrs, AHRS_FILE, "ahrs")
    }

    /// Reference trajectory: explicit `gt`, explicit `gps`, then the
    /// canonical files that exist in `dir`.
    pub fn reference_path(&self) -> Option<PathBuf> {
        if let Some(p) = self.gt.clone().or_else(|| self.gps.clone()) {
            return Some(p);
        }
        let dir = self.dir.as_ref()?;
        [GT_FILE, GPS_FILE].iter().map(|n| dir.join(n)).find(|p| p.exists())
    }

    /// Makes every path absolute so a recorded config replays from any
    /// working directory.
    pub fn absolutized(&self) -> Self {
        let abs = |p: &Option<PathBuf>| p.as_ref().map(|p| std::path::absolute(p).unwrap_or_else(|_| p.clone()));
        Self {
            dir: abs(&self.dir),
            imu: abs(&self.imu),
            dvl: abs(&self.dvl),
            ahrs: abs(&self.ahrs),
            gt: abs(&self.gt),
            gps: abs(&self.gps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    pub imu: Vec<ImuSample>,
    pub dvl: Vec<DvlSample>,
    pub ahrs: Vec<AhrsSample>,
    pub hemisphere_flips: usize,
}

pub fn load_sensors(paths: &DatasetPaths) -> Result<SensorData> {
    let imu = load_imu(&paths.imu_path()?)?;
    let dvl = load_dvl(&paths.dvl_path()?)?;
    let (ahrs, hemisphere_flips) = load_ahrs(&paths.ahrs_path()?)?;
    Ok(SensorData {
        imu,
        dvl,
        ahrs,
        hemisphere_flips,
    })
}

/// Loads a reference file as local-frame poses; GPS fixes are projected
/// about the first finite fix.
pub fn load_reference(path: &Path) -> Result<Vec<GroundTruthSample>> {
    match detect_reference(path)? {
        Reference::GroundTruth => load_ground_truth(path),
        Reference::Gps => {
            let (poses, skipped) = cipg_core::sensors::gps_to_local(&load_gps(path)?, None);
            if skipped > 0 {
                log::warn!("{}: skipped {skipped} non-finite GPS fixes", path.display());
            }
            Ok(poses)
        }
    }
}
