#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod cascade;
pub mod error;
pub mod estimator;
pub mod ipg;
pub mod metrics;
pub mod preintegration;
pub mod rotation;
pub mod sensors;
pub mod sim;

pub use cascade::{CascadeConfig, EstimateRow, OutputFlag};
pub use estimator::{Estimator, EstimatorKind};
pub use error::{Error, Result, Stage};
pub use preintegration::{GravityModel, ImuBiases, NavState};
pub use rotation::{Mat3, UnitQuaternion, Vec3};
pub use sensors::{AhrsSample, DvlSample, GpsFix, GroundTruthSample, ImuBurst, ImuSample, SyncedEpoch};
