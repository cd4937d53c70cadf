//! Dynamic state estimation of a synchronous machine from PMU phasors with
//! an extended Kalman filter whose prediction step is adaptively subdivided.
//!
//! The crate is organised bottom-up:
//!
//! - [`machine`]: two-axis machine model, frame rotations and Jacobians
//! - [`nonlinearity`]: Taylor-residual nonlinearity indexes
//! - [`estimator`]: EKF with multi-step prediction and the adaptive controller
//! - [`scenario`]: single machine / infinite bus truth generator
//! - [`pmu`]: decimation, phasor noise and noise-model derivation
//! - [`montecarlo`]: paired Monte-Carlo trials, mMSE and timing reports
//! - [`io`]: CSV schemas

pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod machine;
pub mod model;
pub mod montecarlo;
pub mod nonlinearity;
pub mod pmu;
pub mod scenario;

pub use nalgebra;

pub use error::{Error, Result};
pub use estimator::{
    amsp_update, correct, init_belief, multi_step_predict, predict_substep, run_filter,
    run_filter_with, AmspConfig, EstimatorMode, FilterOptions, FilterRun, GaussianBelief,
    NoiseModel, QSubstepMode,
};
pub use machine::{InputVector, MachineParams, MeasurementVector, StateVector};
pub use montecarlo::{run_mc, McConfig, McReport};
pub use nonlinearity::NonlinearityIndexes;
pub use pmu::{MeasurementSeries, SynthConfig};
pub use scenario::{DampingProfile, ScenarioConfig, TruthTrajectory};
