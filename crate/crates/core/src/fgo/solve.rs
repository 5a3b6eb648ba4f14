use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::graph::{assemble_touching, assemble_with_mode, residual_norm, Factor, FactorGraph, PriorFactor};
use crate::error::{Error, Result};
use crate::kernel::RobustKernel;
use crate::kfv::{IterationTrace, DEFAULT_ITER_TOL, DEFAULT_MAX_ITERS};
use crate::linalg;
use crate::model::{JacobianMode, StateVector, STATE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the Gauss-Newton step norm drops below this.
    pub tol: f64,
    pub kernel: RobustKernel,
    pub jacobian: JacobianMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 1,
            tol: DEFAULT_ITER_TOL,
            kernel: RobustKernel::L2,
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl SolverOptions {
    pub fn fg_ekf() -> Self {
        Self::default()
    }

    pub fn fg_iekf() -> Self {
        SolverOptions {
            max_iters: DEFAULT_MAX_ITERS,
            ..Self::default()
        }
    }

    pub fn fg_rekf() -> Self {
        SolverOptions {
            kernel: RobustKernel::default_huber(),
            ..Self::default()
        }
    }

    pub fn fg_riekf() -> Self {
        SolverOptions {
            max_iters: DEFAULT_MAX_ITERS,
            kernel: RobustKernel::default_huber(),
            ..Self::default()
        }
    }

    pub fn with_jacobian(mut self, jacobian: JacobianMode) -> Self {
        self.jacobian = jacobian;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub estimates: Vec<StateVector>,
    /// Information matrix of the full window at the last linearization.
    pub information: DMatrix<f64>,
    /// Residual norms with iterate states of the newest variable.
    pub trace: IterationTrace,
}

impl SolveResult {
    /// Marginal covariance block of variable `node`.
    pub fn marginal_covariance(&self, node: usize) -> Result<DMatrix<f64>> {
        let cov = linalg::spd_inverse(&self.information, "window information")?;
        Ok(cov
            .view((node * STATE_DIM, node * STATE_DIM), (STATE_DIM, STATE_DIM))
            .into_owned())
    }
}

/// Variables spanned by near-null directions of `h`.
fn unconstrained_variables(h: &DMatrix<f64>) -> Vec<usize> {
    let eig = linalg::symmetrize(h).symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut nodes = std::collections::BTreeSet::new();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda <= 1e-12 * scale {
            let v = eig.eigenvectors.column(k);
            for (i, c) in v.iter().enumerate() {
                if c.abs() > 1e-6 {
                    nodes.insert(i / STATE_DIM);
                }
            }
        }
    }
    nodes.into_iter().collect()
}

fn factor_normal(h: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    linalg::cholesky(h, "information matrix").map_err(|_| {
        let nodes = unconstrained_variables(h);
        Error::RankDeficient(if nodes.is_empty() { (0..h.nrows() / STATE_DIM).collect() } else { nodes })
    })
}

fn apply_step(lin: &mut [StateVector], delta: &DVector<f64>) -> Result<()> {
    for (i, x) in lin.iter_mut().enumerate() {
        let next = x.to_dvector() + delta.rows(i * STATE_DIM, STATE_DIM);
        *x = StateVector::from_dvector(&next)?;
    }
    Ok(())
}

/// Undamped Gauss-Newton: `δ = H⁻¹ b` by Cholesky, relinearize, repeat.
pub fn gauss_newton_solve(graph: &FactorGraph, init: &[StateVector], options: &SolverOptions) -> Result<SolveResult> {
    options.validate()?;
    if graph.is_empty() {
        return Err(Error::Config("cannot solve an empty graph".into()));
    }
    let mut lin = init.to_vec();
    let mut trace = IterationTrace::new(residual_norm(graph, &lin)?);
    let mut information = DMatrix::zeros(0, 0);
    for _ in 0..options.max_iters {
        let ne = assemble_with_mode(graph, &lin, options.kernel, options.jacobian)?;
        let delta = factor_normal(&ne.information)?.solve(&ne.vector);
        information = ne.information;
        apply_step(&mut lin, &delta)?;
        let newest = *lin.last().expect("graph is non-empty");
        trace.push(newest, residual_norm(graph, &lin)?);
        if delta.norm() < options.tol {
            break;
        }
    }
    Ok(SolveResult {
        estimates: lin,
        information,
        trace,
    })
}

/// Eliminates variable 0 by Schur complement over the factors touching it.
///
/// The result is a prior on variable 1, re-indexed to node 0 so it can seed
/// the next, shorter graph.
pub fn marginalize_oldest(graph: &FactorGraph, solution: &SolveResult) -> Result<PriorFactor> {
    if graph.len() < 2 {
        return Err(Error::Config("marginalization needs at least two variables".into()));
    }
    for (i, f) in graph.factors().iter().enumerate() {
        let nodes = f.nodes();
        if nodes.contains(&0) && nodes.iter().any(|n| *n > 1) {
            return Err(Error::Config(format!(
                "{} links the oldest variable beyond its neighbour",
                f.id(i)
            )));
        }
    }
    if !graph
        .factors()
        .iter()
        .any(|f| matches!(f, Factor::Propagation(_)) && f.nodes().contains(&0))
    {
        return Err(Error::Config("oldest variable has no propagation link to marginalize through".into()));
    }
    let ne = assemble_touching(graph, &solution.estimates, 0)?;
    let d = STATE_DIM;
    let a = ne.information.view((0, 0), (d, d)).into_owned();
    let bm = ne.information.view((0, d), (d, d)).into_owned();
    let c = ne.information.view((d, d), (d, d)).into_owned();
    let ba = ne.vector.rows(0, d).into_owned();
    let bc = ne.vector.rows(d, d).into_owned();

    let a_chol = linalg::cholesky(&a, "eliminated block")?;
    let a_inv_b = a_chol.solve(&bm);
    let information = linalg::symmetrize(&(c - bm.transpose() * &a_inv_b));
    let vector = bc - bm.transpose() * a_chol.solve(&ba);

    let info_chol = linalg::cholesky(&information, "marginal information")?;
    let shift = info_chol.solve(&vector);
    let mean = StateVector::from_dvector(&(solution.estimates[1].to_dvector() + shift))?;
    PriorFactor::new(0, mean, information)
}
