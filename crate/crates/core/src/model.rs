//! State, belief, process and measurement models shared by every estimator.
//!
//! The state is the planar constant-velocity vector `[px, py, vx, vy]`.

use std::fmt;

use nalgebra::{DMatrix, DVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Dual};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sim;

pub const STATE_DIM: usize = 4;

/// Planar point in meters.
pub type Point = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vector4<f64>);

impl StateVector {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        StateVector(Vector4::new(px, py, vx, vy))
    }

    pub fn try_new(px: f64, py: f64, vx: f64, vy: f64) -> Result<Self> {
        Self::try_from_slice(&[px, py, vx, vy])
    }

    pub fn try_from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != STATE_DIM {
            return Err(Error::Dimension {
                context: "state vector".into(),
                expected: STATE_DIM,
                actual: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("state component {bad} is not finite")));
        }
        Ok(StateVector(Vector4::from_column_slice(values)))
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::try_from_slice(v.as_slice())
    }

    pub fn px(&self) -> f64 {
        self.0[0]
    }
    pub fn py(&self) -> f64 {
        self.0[1]
    }
    pub fn vx(&self) -> f64 {
        self.0[2]
    }
    pub fn vy(&self) -> f64 {
        self.0[3]
    }

    pub fn position(&self) -> Point {
        Point::new(self.0[0], self.0[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.0[2], self.0[3])
    }

    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [self.0[0], self.0[1], self.0[2], self.0[3]]
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.6}, {:.6}, {:.6}, {:.6}]",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

/// Mean and SPD covariance of a 4-dimensional state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: StateVector,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    /// Rejects asymmetric (beyond 1e-12 relative) or non-SPD covariances.
    pub fn new(mean: StateVector, covariance: DMatrix<f64>) -> Result<Self> {
        check_shape(&covariance, STATE_DIM, "belief covariance")?;
        if !mean.is_finite() {
            return Err(Error::Domain("belief mean is not finite".into()));
        }
        if !linalg::is_symmetric(&covariance, 1e-12) {
            return Err(Error::NotSpd("belief covariance (asymmetric)".into()));
        }
        linalg::cholesky(&covariance, "belief covariance")?;
        Ok(GaussianBelief { mean, covariance })
    }

    /// Symmetrises `covariance` before validating.
    pub fn symmetrized(mean: StateVector, covariance: &DMatrix<f64>) -> Result<Self> {
        Self::new(mean, linalg::symmetrize(covariance))
    }

    pub fn from_diagonal(mean: StateVector, variances: [f64; STATE_DIM]) -> Result<Self> {
        Self::new(
            mean,
            DMatrix::from_diagonal(&DVector::from_column_slice(&variances)),
        )
    }

    pub fn mean(&self) -> &StateVector {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Linear propagation `x_k = F x_{k-1} + ν`, `ν ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    transition: DMatrix<f64>,
    noise: DMatrix<f64>,
    dt: f64,
}

impl ProcessModel {
    /// `noise` must be symmetric positive semi-definite. Factor-graph use
    /// additionally requires it to be SPD, which is checked there.
    pub fn new(transition: DMatrix<f64>, noise: DMatrix<f64>, dt: f64) -> Result<Self> {
        check_shape(&transition, STATE_DIM, "transition matrix")?;
        check_shape(&noise, STATE_DIM, "process noise")?;
        if !transition.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("transition matrix is not finite".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if !linalg::is_symmetric(&noise, 1e-12) {
            return Err(Error::NotSpd("process noise (asymmetric)".into()));
        }
        let eig = noise.clone().symmetric_eigen();
        let floor = -1e-12 * noise.amax().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < floor) {
            return Err(Error::NotSpd("process noise (negative eigenvalue)".into()));
        }
        Ok(ProcessModel {
            transition,
            noise,
            dt,
        })
    }

    /// Constant-velocity model with diagonal process noise `[qpx, qpy, qvx, qvy]`.
    pub fn constant_velocity(dt: f64, noise_diag: [f64; STATE_DIM]) -> Result<Self> {
        Self::new(
            cv_transition(dt),
            DMatrix::from_diagonal(&DVector::from_column_slice(&noise_diag)),
            dt,
        )
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `F x`.
    pub fn propagate(&self, state: &StateVector) -> StateVector {
        let v = &self.transition * state.to_dvector();
        StateVector::new(v[0], v[1], v[2], v[3])
    }

    /// Same map over dual numbers, for forward-mode Jacobians.
    pub fn propagate_dual(&self, state: &[Dual; STATE_DIM]) -> Vec<Dual> {
        (0..STATE_DIM)
            .map(|i| {
                (0..STATE_DIM).fold(Dual::constant(0.0), |acc, j| {
                    acc + state[j] * self.transition[(i, j)]
                })
            })
            .collect()
    }

    /// Jacobian of the propagation map.
    pub fn jacobian(&self, state: &StateVector, mode: JacobianMode) -> Result<DMatrix<f64>> {
        match mode {
            JacobianMode::Analytic => Ok(self.transition.clone()),
            JacobianMode::AutoDiff => {
                autodiff::jacobian_ad(|x| Ok(self.propagate_dual(x)), state)
            }
        }
    }
}

/// Constant-velocity transition: unit diagonal with `dt` position/velocity coupling.
pub fn cv_transition(dt: f64) -> DMatrix<f64> {
    let mut f = DMatrix::identity(STATE_DIM, STATE_DIM);
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// How Jacobians of the measurement and process maps are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JacobianMode {
    #[default]
    Analytic,
    #[serde(rename = "ad")]
    AutoDiff,
}

impl std::str::FromStr for JacobianMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(JacobianMode::Analytic),
            "ad" | "autodiff" => Ok(JacobianMode::AutoDiff),
            other => Err(Error::Config(format!(
                "unknown jacobian mode '{other}' (valid: analytic, ad)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Ranges to static anchors under a shared clock.
    Toa { anchors: Vec<Point> },
    /// `y = H x`.
    Linear { matrix: DMatrix<f64> },
}

/// Observation function plus its SPD noise covariance `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    observation: Observation,
    noise: DMatrix<f64>,
    noise_lower: DMatrix<f64>,
}

impl MeasurementModel {
    pub fn toa(anchors: Vec<Point>, noise: DMatrix<f64>) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::Config(format!(
                "TOA needs at least 3 anchors for planar observability, got {}",
                anchors.len()
            )));
        }
        Self::build(Observation::Toa { anchors }, noise)
    }

    /// TOA model with `R = std² I`.
    pub fn toa_isotropic(anchors: Vec<Point>, std: f64) -> Result<Self> {
        let m = anchors.len();
        Self::toa(anchors, DMatrix::identity(m, m) * (std * std))
    }

    pub fn linear(matrix: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() != STATE_DIM || matrix.nrows() == 0 {
            return Err(Error::Dimension {
                context: "linear measurement matrix columns".into(),
                expected: STATE_DIM,
                actual: matrix.ncols(),
            });
        }
        Self::build(Observation::Linear { matrix }, noise)
    }

    fn build(observation: Observation, noise: DMatrix<f64>) -> Result<Self> {
        let m = match &observation {
            Observation::Toa { anchors } => anchors.len(),
            Observation::Linear { matrix } => matrix.nrows(),
        };
        check_shape(&noise, m, "measurement noise")?;
        if !linalg::is_symmetric(&noise, 1e-12) {
            return Err(Error::NotSpd("measurement noise (asymmetric)".into()));
        }
        let noise_lower = linalg::cholesky(&noise, "measurement noise")?.l();
        Ok(MeasurementModel {
            observation,
            noise,
            noise_lower,
        })
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.observation, Observation::Linear { .. })
    }

    pub fn dim(&self) -> usize {
        self.noise.nrows()
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    /// Lower Cholesky factor of `R`.
    pub fn noise_lower(&self) -> &DMatrix<f64> {
        &self.noise_lower
    }

    pub fn check_measurement(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension {
                context: "measurement vector".into(),
                expected: self.dim(),
                actual: z.len(),
            });
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("measurement vector is not finite".into()));
        }
        Ok(())
    }

    /// `h(x)`.
    pub fn predict(&self, state: &StateVector) -> Result<DVector<f64>> {
        match &self.observation {
            Observation::Toa { anchors } => sim::toa_measure(anchors, &state.position()),
            Observation::Linear { matrix } => Ok(matrix * state.to_dvector()),
        }
    }

    /// The observation map over dual numbers.
    pub fn predict_dual(&self, state: &[Dual; STATE_DIM]) -> Result<Vec<Dual>> {
        match &self.observation {
            Observation::Toa { anchors } => anchors
                .iter()
                .map(|a| autodiff::toa_range_dual(state, a))
                .collect(),
            Observation::Linear { matrix } => Ok((0..matrix.nrows())
                .map(|i| {
                    (0..STATE_DIM).fold(Dual::constant(0.0), |acc, j| {
                        acc + state[j] * matrix[(i, j)]
                    })
                })
                .collect()),
        }
    }

    /// `(h(x), ∂h/∂x)`.
    pub fn predict_with_jacobian(
        &self,
        state: &StateVector,
        mode: JacobianMode,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match mode {
            JacobianMode::Analytic => {
                let h = self.predict(state)?;
                let jac = match &self.observation {
                    Observation::Toa { anchors } => sim::toa_jacobian(anchors, state)?,
                    Observation::Linear { matrix } => matrix.clone(),
                };
                Ok((h, jac))
            }
            JacobianMode::AutoDiff => {
                let (h, jac) = autodiff::value_and_jacobian(|x| self.predict_dual(x), state)?;
                Ok((h, jac))
            }
        }
    }
}

/// Everything an estimator needs besides the data itself.
#[derive(Debug, Clone)]
pub struct FilterSetup {
    pub process: ProcessModel,
    pub init: GaussianBelief,
    /// Range noise std used to build `R = std² I`.
    pub range_std: f64,
}

impl FilterSetup {
    pub const DEFAULT_INIT_MEAN: [f64; STATE_DIM] = [200.0, -100.0, 5.0, 5.0];
    pub const DEFAULT_P0: [f64; STATE_DIM] = [100.0, 100.0, 10.0, 10.0];
    pub const DEFAULT_Q: [f64; STATE_DIM] = [1e-4, 1e-4, 1e-3, 1e-3];

    /// Default initial belief and process noise for a given `dt` and range noise.
    pub fn defaults(dt: f64, range_std: f64) -> Result<Self> {
        let [px, py, vx, vy] = Self::DEFAULT_INIT_MEAN;
        Ok(FilterSetup {
            process: ProcessModel::constant_velocity(dt, Self::DEFAULT_Q)?,
            init: GaussianBelief::from_diagonal(StateVector::new(px, py, vx, vy), Self::DEFAULT_P0)?,
            range_std,
        })
    }

    pub fn measurement_model(&self, anchors: &[Point]) -> Result<MeasurementModel> {
        if !(self.range_std.is_finite() && self.range_std > 0.0) {
            return Err(Error::Config(format!(
                "range std must be positive, got {}",
                self.range_std
            )));
        }
        MeasurementModel::toa_isotropic(anchors.to_vec(), self.range_std)
    }
}

fn check_shape(m: &DMatrix<f64>, n: usize, name: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension {
            context: name.into(),
            expected: n,
            actual: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_rejects_non_finite() {
        assert!(StateVector::try_new(0.0, f64::NAN, 0.0, 0.0).is_err());
        assert!(StateVector::try_from_slice(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn belief_rejects_asymmetric_and_indefinite() {
        let m = StateVector::new(0.0, 0.0, 0.0, 0.0);
        let mut p = DMatrix::identity(4, 4);
        p[(0, 1)] = 0.1;
        assert!(GaussianBelief::new(m, p.clone()).is_err());
        p[(1, 0)] = 0.1;
        assert!(GaussianBelief::new(m, p).is_ok());
        let mut q = DMatrix::identity(4, 4);
        q[(2, 2)] = -1.0;
        assert!(matches!(GaussianBelief::new(m, q), Err(Error::NotSpd(_))));
    }

    #[test]
    fn cv_transition_structure() {
        let f = cv_transition(0.5);
        for i in 0..4 {
            assert_eq!(f[(i, i)], 1.0);
        }
        assert_eq!(f[(0, 2)], 0.5);
        assert_eq!(f[(1, 3)], 0.5);
        assert_eq!(f.iter().filter(|v| **v != 0.0).count(), 6);
    }

    #[test]
    fn process_rejects_negative_noise() {
        let mut q = DMatrix::zeros(4, 4);
        q[(0, 0)] = -1.0;
        assert!(ProcessModel::new(cv_transition(1.0), q, 1.0).is_err());
        assert!(ProcessModel::new(cv_transition(1.0), DMatrix::zeros(4, 4), 1.0).is_ok());
    }

    #[test]
    fn toa_needs_three_anchors() {
        let anchors = vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(MeasurementModel::toa_isotropic(anchors, 0.1).is_err());
    }

    #[test]
    fn ad_and_analytic_process_jacobian_agree() {
        let p = ProcessModel::constant_velocity(0.7, [1.0; 4]).unwrap();
        let x = StateVector::new(1.0, -2.0, 3.0, 0.5);
        assert_eq!(
            p.jacobian(&x, JacobianMode::Analytic).unwrap(),
            p.jacobian(&x, JacobianMode::AutoDiff).unwrap()
        );
    }
}
