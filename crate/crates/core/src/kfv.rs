//! Closed-form recursive filters: KF, EKF, IEKF, REKF and RIEKF.
//!
//! All nonlinear variants share one gain-form update. Iteration `j`
//! linearizes the measurement at `x_j` and computes
//!
//! ```text
//! P̃ = L_P Ψ_x⁻¹ L_Pᵀ,  R̃ = L_R Ψ_y⁻¹ L_Rᵀ
//! K = P̃ Hᵀ (H P̃ Hᵀ + R̃)⁻¹
//! x_{j+1} = x⁻ + K (z − h(x_j) − H (x⁻ − x_j))
//! P⁺ = (I − K H) P̃
//! ```
//!
//! where `Ψ_x`, `Ψ_y` are kernel weights of the whitened prior residual
//! `L_P⁻¹(x_j − x⁻)` and measurement residual `L_R⁻¹(h(x_j) − z)`. With
//! the L2 kernel both are identity; with one iteration `x_0 = x⁻` and the
//! update collapses to the EKF. This is one Gauss-Newton step on the
//! MAP cost per iteration, which is what makes the filters reproducible
//! by a factor-graph solver.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RobustKernel;
use crate::linalg;
use crate::model::{FilterSetup, GaussianBelief, JacobianMode, MeasurementModel, ProcessModel, StateVector, STATE_DIM};
use crate::report::{EpochRecord, RunReport};
use crate::sim::Dataset;

pub const DEFAULT_MAX_ITERS: usize = 10;
/// State-change norm (m) below which iterations stop.
pub const DEFAULT_ITER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KfvKind {
    Kf,
    Ekf,
    Iekf,
    Rekf,
    Riekf,
}

impl KfvKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KfvKind::Kf => "kf",
            KfvKind::Ekf => "ekf",
            KfvKind::Iekf => "iekf",
            KfvKind::Rekf => "rekf",
            KfvKind::Riekf => "riekf",
        }
    }

    pub fn is_iterated(&self) -> bool {
        matches!(self, KfvKind::Iekf | KfvKind::Riekf)
    }

    pub fn is_robust(&self) -> bool {
        matches!(self, KfvKind::Rekf | KfvKind::Riekf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KfvVariant {
    pub kind: KfvKind,
    pub max_iters: usize,
    pub iter_tol: f64,
    pub kernel: RobustKernel,
}

impl KfvVariant {
    pub fn kf() -> Self {
        Self::single(KfvKind::Kf, RobustKernel::L2)
    }

    pub fn ekf() -> Self {
        Self::single(KfvKind::Ekf, RobustKernel::L2)
    }

    pub fn rekf(kernel: RobustKernel) -> Self {
        Self::single(KfvKind::Rekf, kernel)
    }

    pub fn iekf(max_iters: usize, iter_tol: f64) -> Self {
        KfvVariant {
            kind: KfvKind::Iekf,
            max_iters,
            iter_tol,
            kernel: RobustKernel::L2,
        }
    }

    pub fn riekf(kernel: RobustKernel, max_iters: usize, iter_tol: f64) -> Self {
        KfvVariant {
            kind: KfvKind::Riekf,
            max_iters,
            iter_tol,
            kernel,
        }
    }

    fn single(kind: KfvKind, kernel: RobustKernel) -> Self {
        KfvVariant {
            kind,
            max_iters: 1,
            iter_tol: DEFAULT_ITER_TOL,
            kernel,
        }
    }

    /// Default configuration of `kind`: Huber for robust kinds, 10 iterations for iterated ones.
    pub fn default_for(kind: KfvKind) -> Self {
        match kind {
            KfvKind::Kf => Self::kf(),
            KfvKind::Ekf => Self::ekf(),
            KfvKind::Iekf => Self::iekf(DEFAULT_MAX_ITERS, DEFAULT_ITER_TOL),
            KfvKind::Rekf => Self::rekf(RobustKernel::default_huber()),
            KfvKind::Riekf => Self::riekf(RobustKernel::default_huber(), DEFAULT_MAX_ITERS, DEFAULT_ITER_TOL),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.iter_tol.is_finite() && self.iter_tol > 0.0) {
            return Err(Error::Config("iteration tolerance must be positive".into()));
        }
        if !self.kind.is_iterated() && self.max_iters != 1 {
            return Err(Error::Config(format!(
                "{} linearizes once; max_iters must be 1, got {}",
                self.kind.as_str(),
                self.max_iters
            )));
        }
        if !self.kind.is_robust() && !self.kernel.is_l2() {
            return Err(Error::Config(format!(
                "{} has no robust kernel; use rekf/riekf for Huber",
                self.kind.as_str()
            )));
        }
        Ok(())
    }

    pub fn id(&self) -> &'static str {
        self.kind.as_str()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub state: StateVector,
    /// 2-norm of the stacked whitened prior and measurement residuals at `state`.
    pub residual_norm: f64,
}

/// Residual norm at the starting point followed by one record per iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub initial_residual_norm: f64,
    pub iterations: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn new(initial_residual_norm: f64) -> Self {
        IterationTrace {
            initial_residual_norm,
            iterations: Vec::new(),
        }
    }

    pub fn push(&mut self, state: StateVector, residual_norm: f64) {
        self.iterations.push(IterationRecord {
            state,
            residual_norm,
        });
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Residual norm of the accepted (last) iterate.
    pub fn final_residual_norm(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_residual_norm, |r| r.residual_norm)
    }

    /// `(iteration, residual_norm)` pairs with iteration 0 as the starting point.
    pub fn residual_path(&self) -> Vec<(usize, f64)> {
        std::iter::once((0, self.initial_residual_norm))
            .chain(
                self.iterations
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (i + 1, r.residual_norm)),
            )
            .collect()
    }
}

/// `x⁻ = F x`, `P⁻ = F P Fᵀ + Q`.
pub fn kf_predict(belief: &GaussianBelief, model: &ProcessModel) -> Result<GaussianBelief> {
    let f = model.transition();
    let cov = f * belief.covariance() * f.transpose() + model.noise();
    GaussianBelief::symmetrized(model.propagate(belief.mean()), &cov)
}

/// Linear KF update; requires a linear measurement model.
pub fn kf_update(belief: &GaussianBelief, model: &MeasurementModel, z: &DVector<f64>) -> Result<GaussianBelief> {
    if !model.is_linear() {
        return Err(Error::Config(
            "KF needs a linear measurement model; TOA ranges are nonlinear (use ekf)".into(),
        ));
    }
    model.check_measurement(z)?;
    let (_, h) = model.predict_with_jacobian(belief.mean(), JacobianMode::Analytic)?;
    let p = belief.covariance();
    let pht = p * h.transpose();
    let s = &h * &pht + model.noise();
    let gain = gain_from(&pht, &s)?;
    let x = belief.mean().to_dvector();
    let mean = &x + &gain * (z - &h * &x);
    let cov = (DMatrix::identity(STATE_DIM, STATE_DIM) - &gain * &h) * p;
    GaussianBelief::symmetrized(StateVector::from_dvector(&mean)?, &cov)
}

pub fn ekf_update(
    belief: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
) -> Result<(GaussianBelief, IterationTrace)> {
    iterated_update(belief, model, z, RobustKernel::L2, 1, DEFAULT_ITER_TOL)
}

pub fn iekf_update(
    belief: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<(GaussianBelief, IterationTrace)> {
    iterated_update(belief, model, z, RobustKernel::L2, max_iters, tol)
}

pub fn rekf_update(
    belief: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
    kernel: RobustKernel,
) -> Result<(GaussianBelief, IterationTrace)> {
    iterated_update(belief, model, z, kernel, 1, DEFAULT_ITER_TOL)
}

pub fn riekf_update(
    belief: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
    kernel: RobustKernel,
    max_iters: usize,
    tol: f64,
) -> Result<(GaussianBelief, IterationTrace)> {
    iterated_update(belief, model, z, kernel, max_iters, tol)
}

/// Dispatches to the update of `variant`.
pub fn update(
    variant: &KfvVariant,
    belief: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
) -> Result<(GaussianBelief, IterationTrace)> {
    match variant.kind {
        KfvKind::Kf => {
            let posterior = kf_update(belief, model, z)?;
            let mut trace = IterationTrace::new(f64::NAN);
            trace.push(*posterior.mean(), f64::NAN);
            Ok((posterior, trace))
        }
        KfvKind::Ekf => ekf_update(belief, model, z),
        KfvKind::Iekf => iekf_update(belief, model, z, variant.max_iters, variant.iter_tol),
        KfvKind::Rekf => rekf_update(belief, model, z, variant.kernel),
        KfvKind::Riekf => riekf_update(belief, model, z, variant.kernel, variant.max_iters, variant.iter_tol),
    }
}

/// Kernel weights `(Ψ_x, Ψ_y)` at linearization point `lin`.
pub fn robust_weights(
    prior: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
    lin: &StateVector,
    kernel: RobustKernel,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p_lower = linalg::cholesky(prior.covariance(), "predicted covariance")?.l();
    let h = model.predict(lin)?;
    weights(
        kernel,
        &p_lower,
        model.noise_lower(),
        &(lin.to_dvector() - prior.mean().to_dvector()),
        &(h - z),
    )
}

fn weights(
    kernel: RobustKernel,
    p_lower: &DMatrix<f64>,
    r_lower: &DMatrix<f64>,
    prior_residual: &DVector<f64>,
    meas_residual: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if kernel.is_l2() {
        return Ok((
            DVector::from_element(prior_residual.len(), 1.0),
            DVector::from_element(meas_residual.len(), 1.0),
        ));
    }
    let wx = linalg::whiten_with(p_lower, prior_residual);
    let wy = linalg::whiten_with(r_lower, meas_residual);
    let psi = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let w: Result<Vec<f64>> = v.iter().map(|r| kernel.weight(*r)).collect();
        Ok(DVector::from_vec(w?))
    };
    Ok((psi(&wx)?, psi(&wy)?))
}

/// `L Ψ⁻¹ Lᵀ`; the covariance itself when every weight is one.
pub(crate) fn reweight(cov: &DMatrix<f64>, lower: &DMatrix<f64>, psi: &DVector<f64>) -> DMatrix<f64> {
    if psi.iter().all(|w| *w == 1.0) {
        return cov.clone();
    }
    let mut scaled = lower.clone();
    for (j, w) in psi.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col /= w.sqrt();
    }
    &scaled * scaled.transpose()
}

fn gain_from(pht: &DMatrix<f64>, innovation_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = linalg::symmetrize(innovation_cov);
    let chol = linalg::cholesky(&s, "innovation covariance")?;
    Ok(chol.solve(&pht.transpose()).transpose())
}

fn residual_norm(
    prior_mean: &DVector<f64>,
    p_lower: &DMatrix<f64>,
    model: &MeasurementModel,
    z: &DVector<f64>,
    state: &StateVector,
) -> Result<f64> {
    let wx = linalg::whiten_with(p_lower, &(state.to_dvector() - prior_mean));
    let wy = linalg::whiten_with(model.noise_lower(), &(model.predict(state)? - z));
    Ok((wx.norm_squared() + wy.norm_squared()).sqrt())
}

/// Stacked whitened residual norm of the update cost at `state`.
pub fn update_residual_norm(
    prior: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
    state: &StateVector,
) -> Result<f64> {
    let p_lower = linalg::cholesky(prior.covariance(), "predicted covariance")?.l();
    residual_norm(&prior.mean().to_dvector(), &p_lower, model, z, state)
}

fn iterated_update(
    belief: &GaussianBelief,
    model: &MeasurementModel,
    z: &DVector<f64>,
    kernel: RobustKernel,
    max_iters: usize,
    tol: f64,
) -> Result<(GaussianBelief, IterationTrace)> {
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be >= 1".into()));
    }
    model.check_measurement(z)?;
    let prior_mean = belief.mean().to_dvector();
    let p = belief.covariance();
    let p_lower = linalg::cholesky(p, "predicted covariance")?.l();
    let identity = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM);

    let mut lin = *belief.mean();
    let mut trace = IterationTrace::new(residual_norm(&prior_mean, &p_lower, model, z, &lin)?);
    let mut covariance = p.clone();

    for _ in 0..max_iters {
        let lin_v = lin.to_dvector();
        let (h_val, jac) = model.predict_with_jacobian(&lin, JacobianMode::Analytic)?;
        let meas_residual = z - &h_val;
        let (psi_x, psi_y) = weights(
            kernel,
            &p_lower,
            model.noise_lower(),
            &(&lin_v - &prior_mean),
            &(-&meas_residual),
        )?;
        let p_eff = reweight(p, &p_lower, &psi_x);
        let r_eff = reweight(model.noise(), model.noise_lower(), &psi_y);

        let pht = &p_eff * jac.transpose();
        let s = &jac * &pht + r_eff;
        let gain = gain_from(&pht, &s)?;
        let innovation = meas_residual - &jac * (&prior_mean - &lin_v);
        let next = &prior_mean + &gain * innovation;
        covariance = (&identity - &gain * &jac) * &p_eff;

        let step = (&next - &lin_v).norm();
        lin = StateVector::from_dvector(&next)?;
        trace.push(lin, residual_norm(&prior_mean, &p_lower, model, z, &lin)?);
        if step < tol {
            break;
        }
    }
    Ok((GaussianBelief::symmetrized(lin, &covariance)?, trace))
}

/// Predict then update at every epoch of `dataset`.
pub fn run_filter(variant: &KfvVariant, dataset: &Dataset, setup: &FilterSetup) -> Result<RunReport> {
    variant.validate()?;
    dataset.validate()?;
    let model = setup.measurement_model(&dataset.anchors)?;
    if variant.kind == KfvKind::Kf && !model.is_linear() {
        return Err(Error::Config(
            "kf needs a linear measurement model; TOA datasets require ekf or another variant".into(),
        ));
    }
    let mut report = RunReport::new(variant.id(), dataset.scheme.name, dataset.seed);
    let mut belief = setup.init.clone();
    for (k, z) in dataset.ranges.iter().enumerate() {
        let start = Instant::now();
        let (posterior, trace) = kf_predict(&belief, &setup.process)
            .and_then(|predicted| update(variant, &predicted, &model, z))
            .map_err(|e| e.at_epoch(k + 1))?;
        let runtime = start.elapsed().as_secs_f64();
        report.epochs.push(EpochRecord {
            estimate: *posterior.mean(),
            covariance: posterior.covariance().clone(),
            trace,
            runtime,
        });
        belief = posterior;
    }
    Ok(report)
}
