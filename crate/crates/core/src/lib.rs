//! Recursive state estimation for TOA tracking: Kalman-filter variants and
//! their factor-graph counterparts, a seeded simulator and Monte-Carlo
//! benchmarking.

pub mod autodiff;
pub mod bench;
pub mod error;
pub mod fgo;
pub mod kernel;
pub mod kfv;
pub mod linalg;
pub mod model;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
pub use kernel::RobustKernel;
pub use kfv::{IterationRecord, IterationTrace, KfvKind, KfvVariant};
pub use model::{
    FilterSetup, GaussianBelief, JacobianMode, MeasurementModel, Observation, Point, ProcessModel, StateVector,
    STATE_DIM,
};
pub use report::{EpochRecord, RunReport};
pub use sim::{DataScheme, Dataset, NoiseModel, SchemeName, SeededRng};
