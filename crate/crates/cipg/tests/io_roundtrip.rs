use cipg::io;
use cipg_core::cascade::{EstimateRow, OutputFlag};
use cipg_core::{AhrsSample, DvlSample, GroundTruthSample, ImuSample, NavState, UnitQuaternion, Vec3};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(1e-300), Just(-123.456e-7)]
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (finite(), finite(), finite()).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn quat() -> impl Strategy<Value = UnitQuaternion> {
    proptest::array::uniform3(-3.0..3.0f64).prop_map(|rv| UnitQuaternion::from_rotation_vector(&Vec3::from(rv)))
}

/// Strictly increasing timestamps from positive gaps.
fn times(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1e-4..10.0f64, n).prop_map(|gaps| {
        let mut t = 0.0;
        gaps.into_iter()
            .map(|g| {
                t += g;
                t
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn imu_and_dvl_round_trip_exactly(
        ts in times(20),
        a in proptest::collection::vec(vec3(), 20),
        g in proptest::collection::vec(vec3(), 20),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let imu: Vec<ImuSample> = ts.iter().zip(&a).zip(&g).map(|((t, a), g)| ImuSample { t: *t, accel: *a, gyro: *g }).collect();
        let dvl: Vec<DvlSample> = ts.iter().zip(&a).map(|(t, v)| DvlSample { t: *t, velocity: *v }).collect();
        io::write_imu(&dir.path().join("imu.csv"), &imu).unwrap();
        io::write_dvl(&dir.path().join("dvl.csv"), &dvl).unwrap();
        prop_assert_eq!(io::load_imu(&dir.path().join("imu.csv")).unwrap(), imu);
        prop_assert_eq!(io::load_dvl(&dir.path().join("dvl.csv")).unwrap(), dvl);
    }

    #[test]
    fn trajectory_and_ground_truth_round_trip(
        ts in times(12),
        p in proptest::collection::vec(vec3(), 12),
        q in proptest::collection::vec(quat(), 12),
        flags in proptest::collection::vec(0..3u8, 12),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<EstimateRow> = (0..12).map(|i| EstimateRow {
            t: ts[i],
            state: NavState { position: p[i], velocity: -p[i], orientation: q[i] },
            flag: [OutputFlag::Ok, OutputFlag::Warmup, OutputFlag::Fallback][flags[i] as usize],
        }).collect();
        let path = dir.path().join("trajectory.csv");
        io::write_trajectory(&path, &rows).unwrap();
        // writing what was read gives the same bytes
        let bytes = std::fs::read(&path).unwrap();
        let back = io::load_trajectory(&path).unwrap();
        io::write_trajectory(&path, &back).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), bytes);
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.state.position, b.state.position);
            prop_assert!(a.state.orientation.angular_distance(&b.state.orientation) < 1e-15);
            prop_assert_eq!(a.flag, b.flag);
        }

        let gt: Vec<GroundTruthSample> = (0..12).map(|i| GroundTruthSample { t: ts[i], position: p[i], orientation: Some(q[i]) }).collect();
        let gpath = dir.path().join("gt.csv");
        io::write_ground_truth(&gpath, &gt).unwrap();
        let gback = io::load_ground_truth(&gpath).unwrap();
        prop_assert!(gback.iter().all(|g| g.orientation.is_some()));
        prop_assert_eq!(gback.iter().map(|g| g.position).collect::<Vec<_>>(), p);
    }

    #[test]
    fn loaded_ahrs_is_unit_and_hemisphere_continuous(
        ts in times(30),
        q in proptest::collection::vec(quat(), 30),
        flip in proptest::collection::vec(any::<bool>(), 30),
        scale in 0.5..2.0f64,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ahrs.csv");
        let mut text = String::from("t,qw,qx,qy,qz\n");
        for i in 0..30 {
            let s = if flip[i] { -scale } else { scale };
            let a = q[i].to_array();
            text.push_str(&format!("{},{},{},{},{}\n", ts[i], s * a[0], s * a[1], s * a[2], s * a[3]));
        }
        std::fs::write(&path, text).unwrap();
        let (ahrs, _) = io::load_ahrs(&path).unwrap();
        for (i, s) in ahrs.iter().enumerate() {
            prop_assert!((s.orientation.norm() - 1.0).abs() < 1e-12);
            prop_assert!(s.orientation.angular_distance(&q[i]) < 1e-9);
            if i > 0 {
                prop_assert!(s.orientation.dot(&ahrs[i - 1].orientation) >= 0.0);
            }
        }
        let _: &[AhrsSample] = &ahrs;
    }
}
