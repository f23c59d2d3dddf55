use std::path::{Path, PathBuf};

use cipg::adapter::{adapt, AdapterSpec};
use cipg::io;
use cipg_core::sim::{generate, NoiseSpec, ScenarioSpec};
use proptest::prelude::*;

fn write_canonical(dir: &Path, seed: u64) {
    let mut spec = ScenarioSpec::lawnmower(20.0, 3.0, 0.5, 10.0);
    spec.noise = NoiseSpec::bluerov2();
    spec.seed = seed;
    let run = generate(&spec).unwrap();
    io::write_imu(&dir.join(io::IMU_FILE), &run.noisy.imu).unwrap();
    io::write_dvl(&dir.join(io::DVL_FILE), &run.noisy.dvl).unwrap();
    io::write_ahrs(&dir.join(io::AHRS_FILE), &run.noisy.ahrs).unwrap();
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn identity_spec_is_byte_identical_and_idempotent(seed in 0u64..1000) {
        let src = tempfile::tempdir().unwrap();
        let once = tempfile::tempdir().unwrap();
        let twice = tempfile::tempdir().unwrap();
        write_canonical(src.path(), seed);
        let spec = AdapterSpec::canonical();
        adapt(&spec, src.path(), once.path()).unwrap();
        adapt(&spec, once.path(), twice.path()).unwrap();
        for f in [io::IMU_FILE, io::DVL_FILE, io::AHRS_FILE] {
            prop_assert_eq!(read(src.path(), f), read(once.path(), f));
            prop_assert_eq!(read(once.path(), f), read(twice.path(), f));
        }
    }
}

#[test]
fn remapped_columns_units_and_offsets() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_canonical(src.path(), 1);
    let canonical = io::load_imu(&src.path().join(io::IMU_FILE)).unwrap();
    // rewrite the IMU in milliseconds, g and deg/s with shuffled names
    let mut text = String::from("stamp_ms;gz_dps;gy_dps;gx_dps;az_g;ay_g;ax_g;junk\n");
    for s in &canonical {
        let d = 180.0 / std::f64::consts::PI;
        let g = 9.81;
        text.push_str(&format!(
            "{};{};{};{};{};{};{};x\n",
            s.t * 1000.0 + 5.0,
            s.gyro.z * d,
            s.gyro.y * d,
            s.gyro.x * d,
            s.accel.z / g,
            s.accel.y / g,
            s.accel.x / g
        ));
    }
    std::fs::write(src.path().join("raw_imu.csv"), text).unwrap();
    let spec: AdapterSpec = toml::from_str(
        r#"
[imu]
file = "raw_imu.csv"
delimiter = ";"
time_offset = -0.005
units = { t = "ms", ax = "g", ay = "g", az = "g", gx = "deg/s", gy = "deg/s", gz = "deg/s" }
columns = { t = "stamp_ms", ax = "ax_g", ay = "ay_g", az = "az_g", gx = "gx_dps", gy = "gy_dps", gz = "gz_dps" }
[dvl]
file = "dvl.csv"
columns = { t = "t", vx = "vx", vy = "vy", vz = "vz" }
[ahrs]
file = "ahrs.csv"
columns = { t = "t", qw = "qw", qx = "qx", qy = "qy", qz = "qz" }
"#,
    )
    .unwrap();
    let log = adapt(&spec, src.path(), out.path()).unwrap();
    assert!(log.warnings.is_empty(), "{:?}", log.warnings);
    let converted = io::load_imu(&out.path().join(io::IMU_FILE)).unwrap();
    assert_eq!(converted.len(), canonical.len());
    for (a, b) in converted.iter().zip(&canonical) {
        assert!((a.t - b.t).abs() < 1e-9);
        assert!((a.accel - b.accel).amax() < 1e-9);
        assert!((a.gyro - b.gyro).amax() < 1e-12);
    }
    assert!(out.path().join(cipg::adapter::LOG_FILE).exists());
}

#[test]
fn missing_source_file_names_stream() {
    let src = tempfile::tempdir().unwrap();
    write_canonical(src.path(), 2);
    std::fs::remove_file(src.path().join(io::DVL_FILE)).unwrap();
    let err = adapt(&AdapterSpec::canonical(), src.path(), src.path()).unwrap_err();
    assert!(err.to_string().starts_with("config: dvl:"), "{err}");
}

#[test]
fn shipped_adapter_specs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/adapters");
    for name in ["girona.toml", "bluerov2.toml"] {
        let spec = AdapterSpec::load(&dir.join(name)).unwrap();
        assert!(spec.imu.is_some() && spec.dvl.is_some() && spec.ahrs.is_some(), "{name}");
    }
}
