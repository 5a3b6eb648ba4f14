use nalgebra::DMatrix;

use crate::kfv::IterationTrace;
use crate::model::StateVector;
use crate::sim::SchemeName;

/// Output of one estimator epoch.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub estimate: StateVector,
    pub covariance: DMatrix<f64>,
    pub trace: IterationTrace,
    /// Wall-clock seconds spent on this epoch.
    pub runtime: f64,
}

/// Per-epoch results of running one estimator over one dataset.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub estimator: String,
    pub scheme: SchemeName,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

impl RunReport {
    pub fn new(estimator: impl Into<String>, scheme: SchemeName, seed: u64) -> Self {
        RunReport {
            estimator: estimator.into(),
            scheme,
            seed,
            epochs: Vec::new(),
        }
    }

    pub fn estimates(&self) -> impl Iterator<Item = &StateVector> {
        self.epochs.iter().map(|e| &e.estimate)
    }

    pub fn runtimes(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.runtime).collect()
    }
}
