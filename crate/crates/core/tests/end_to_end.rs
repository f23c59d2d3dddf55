use approx::assert_abs_diff_eq;
use cipg_core::baselines::kalman::{asymmetry, min_eigenvalue};
use cipg_core::baselines::{Ekf, FilterConfig, Inekf};
use cipg_core::cascade::{run_cascade, OutputFlag};
use cipg_core::estimator::run;
use cipg_core::metrics::{self, EvalOptions};
use cipg_core::sensors::{synchronize, DvlFrame, SyncOptions};
use cipg_core::sim::{generate, NoiseSpec, ScenarioSpec};
use cipg_core::{CascadeConfig, EstimatorKind, SyncedEpoch};
use proptest::prelude::*;

fn epochs(spec: &ScenarioSpec) -> Vec<SyncedEpoch> {
    let run = generate(spec).unwrap();
    let s = &run.noisy;
    let opts = SyncOptions {
        dvl_frame: spec.dvl_frame,
        ..SyncOptions::default()
    };
    synchronize(&s.imu, &s.dvl, &s.ahrs, &opts).unwrap()
}

#[test]
fn simulated_stream_covers_every_imu_sample_once() {
    let spec = ScenarioSpec::lawnmower(20.0, 3.0, 0.5, 30.0);
    let run = generate(&spec).unwrap();
    let ep = epochs(&spec);
    let total: usize = ep.iter().map(|e| e.imu_burst.len()).sum();
    assert_eq!(total, run.noisy.imu.len());
    assert_eq!(ep.len(), run.noisy.dvl.len());
}

#[test]
fn body_frame_dvl_round_trips_through_sync() {
    let mut nav = ScenarioSpec::circle(10.0, 0.5, 20.0);
    let mut body = nav.clone();
    body.dvl_frame = DvlFrame::Body;
    nav.dvl_frame = DvlFrame::Nav;
    for (a, b) in epochs(&nav).iter().zip(epochs(&body)) {
        assert_abs_diff_eq!(a.dvl.velocity, b.dvl.velocity, epsilon = 1e-12);
    }
}

#[test]
fn every_estimator_tracks_noiseless_line() {
    let spec = ScenarioSpec::line(0.5, 60.0);
    let ep = epochs(&spec);
    let gt = generate(&spec).unwrap().ground_truth();
    let opts = EvalOptions {
        align: false,
        ..EvalOptions::default()
    };
    for kind in EstimatorKind::ALL {
        let rows = run(kind, &CascadeConfig::default(), &FilterConfig::default(), &ep).unwrap();
        let r = metrics::evaluate(&metrics::poses(&rows), &gt, &opts).unwrap();
        assert!(r.total_error < 1e-9, "{kind}: {}", r.total_error);
    }
}

#[test]
fn cascade_flags_follow_warmup_then_ok() {
    let rows = run_cascade(&epochs(&ScenarioSpec::default()), &CascadeConfig::default()).unwrap();
    let n = CascadeConfig::default().horizon();
    assert!(rows[..n - 1].iter().all(|r| r.flag == OutputFlag::Warmup));
    assert!(rows[n - 1..].iter().all(|r| r.flag == OutputFlag::Ok));
}

#[test]
fn filter_covariances_stay_psd_over_long_noisy_run() {
    let mut spec = ScenarioSpec::default();
    spec.duration = 400.0;
    spec.noise = NoiseSpec::bluerov2();
    spec.seed = 21;
    let ep = epochs(&spec);
    let cfg = FilterConfig::default();
    let mut ekf = Ekf::new(cfg.clone(), &ep[0]).unwrap();
    let mut inekf = Inekf::new(cfg, &ep[0]).unwrap();
    for e in &ep[1..] {
        ekf.step(e).unwrap();
        inekf.step(e).unwrap();
        for p in [&ekf.state().covariance, &inekf.state().covariance] {
            assert!(min_eigenvalue(p) >= -1e-9);
            assert!(asymmetry(p) <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_deterministic_per_seed(seed in 0u64..10_000) {
        let mut spec = ScenarioSpec::lawnmower(20.0, 3.0, 0.5, 10.0);
        spec.noise = NoiseSpec::bluerov2();
        spec.seed = seed;
        let a = run_cascade(&epochs(&spec), &CascadeConfig::default()).unwrap();
        let b = run_cascade(&epochs(&spec), &CascadeConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn orientation_output_is_unit(seed in 0u64..10_000) {
        let mut spec = ScenarioSpec::circle(8.0, 0.6, 10.0);
        spec.noise = NoiseSpec::bluerov2();
        spec.seed = seed;
        for kind in EstimatorKind::ALL {
            let rows = run(kind, &CascadeConfig::default(), &FilterConfig::default(), &epochs(&spec)).unwrap();
            for r in rows {
                prop_assert!((r.state.orientation.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
