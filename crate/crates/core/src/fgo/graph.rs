use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::autodiff::{self, Dual};
use crate::error::{Error, Result};
use crate::kernel::RobustKernel;
use crate::linalg;
use crate::model::{GaussianBelief, JacobianMode, MeasurementModel, ProcessModel, StateVector, STATE_DIM};

/// Gaussian anchor `‖x − μ‖²_Λ` on one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorFactor {
    node: usize,
    mean: StateVector,
    information: DMatrix<f64>,
    covariance: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl PriorFactor {
    pub fn new(node: usize, mean: StateVector, information: DMatrix<f64>) -> Result<Self> {
        if information.shape() != (STATE_DIM, STATE_DIM) {
            return Err(Error::Dimension {
                context: "prior information".into(),
                expected: STATE_DIM,
                actual: information.nrows(),
            });
        }
        let information = linalg::symmetrize(&information);
        let covariance = linalg::spd_inverse(&information, "prior information")?;
        let lower = linalg::cholesky(&covariance, "prior covariance")?.l();
        Ok(PriorFactor {
            node,
            mean,
            information,
            covariance,
            lower,
        })
    }

    pub fn from_belief(node: usize, belief: &GaussianBelief) -> Result<Self> {
        let information = linalg::spd_inverse(belief.covariance(), "belief covariance")?;
        let lower = linalg::cholesky(belief.covariance(), "belief covariance")?.l();
        Ok(PriorFactor {
            node,
            mean: *belief.mean(),
            information,
            covariance: belief.covariance().clone(),
            lower,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn with_node(mut self, node: usize) -> Self {
        self.node = node;
        self
    }

    pub fn mean(&self) -> &StateVector {
        &self.mean
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.information
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn to_belief(&self) -> Result<GaussianBelief> {
        GaussianBelief::symmetrized(self.mean, &self.covariance)
    }
}

/// `x_to − F x_from` with covariance `Q`.
#[derive(Debug, Clone)]
pub struct PropagationFactor {
    pub from: usize,
    pub to: usize,
    process: ProcessModel,
    lower: DMatrix<f64>,
}

impl PropagationFactor {
    pub fn new(from: usize, to: usize, process: ProcessModel) -> Result<Self> {
        let lower = linalg::cholesky(process.noise(), "process noise Q")?.l();
        Ok(PropagationFactor {
            from,
            to,
            process,
            lower,
        })
    }

    pub fn process(&self) -> &ProcessModel {
        &self.process
    }
}

/// `h(x) − z` with covariance `R`.
#[derive(Debug, Clone)]
pub struct MeasurementFactor {
    pub node: usize,
    model: MeasurementModel,
    z: DVector<f64>,
}

impl MeasurementFactor {
    pub fn new(node: usize, model: MeasurementModel, z: DVector<f64>) -> Result<Self> {
        model.check_measurement(&z)?;
        Ok(MeasurementFactor { node, model, z })
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    pub fn measurement(&self) -> &DVector<f64> {
        &self.z
    }
}

#[derive(Debug, Clone)]
pub enum Factor {
    Prior(PriorFactor),
    Propagation(PropagationFactor),
    Measurement(MeasurementFactor),
}

/// Jacobian blocks keyed by variable index.
type Blocks = Vec<(usize, DMatrix<f64>)>;

/// Residual of one factor with its Jacobian blocks, already whitened.
pub(crate) struct Linearized {
    pub whitened: DVector<f64>,
    pub blocks: Blocks,
}

impl Factor {
    pub fn nodes(&self) -> Vec<usize> {
        match self {
            Factor::Prior(p) => vec![p.node],
            Factor::Propagation(p) => vec![p.from, p.to],
            Factor::Measurement(m) => vec![m.node],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Prior(_) | Factor::Propagation(_) => STATE_DIM,
            Factor::Measurement(m) => m.model.dim(),
        }
    }

    pub fn id(&self, index: usize) -> String {
        match self {
            Factor::Prior(p) => format!("f{index}:prior[{}]", p.node),
            Factor::Propagation(p) => format!("f{index}:propagation[{}->{}]", p.from, p.to),
            Factor::Measurement(m) => format!("f{index}:measurement[{}]", m.node),
        }
    }

    fn lower(&self) -> &DMatrix<f64> {
        match self {
            Factor::Prior(p) => &p.lower,
            Factor::Propagation(p) => &p.lower,
            Factor::Measurement(m) => m.model.noise_lower(),
        }
    }

    /// Raw residual and Jacobian blocks at `lin`.
    fn evaluate(&self, lin: &[StateVector], mode: JacobianMode) -> Result<(DVector<f64>, Blocks)> {
        match (self, mode) {
            (Factor::Prior(p), JacobianMode::Analytic) => Ok((
                lin[p.node].to_dvector() - p.mean.to_dvector(),
                vec![(p.node, DMatrix::identity(STATE_DIM, STATE_DIM))],
            )),
            (Factor::Prior(p), JacobianMode::AutoDiff) => {
                let mean = p.mean.as_array();
                let (e, j) = autodiff::value_and_jacobian(
                    |x| Ok((0..STATE_DIM).map(|i| x[i] - mean[i]).collect()),
                    &lin[p.node],
                )?;
                Ok((e, vec![(p.node, j)]))
            }
            (Factor::Propagation(p), JacobianMode::Analytic) => {
                let f = p.process.transition();
                let e = lin[p.to].to_dvector() - p.process.propagate(&lin[p.from]).to_dvector();
                Ok((e, vec![(p.from, -f), (p.to, DMatrix::identity(STATE_DIM, STATE_DIM))]))
            }
            (Factor::Propagation(p), JacobianMode::AutoDiff) => {
                let to = lin[p.to].as_array();
                let (e, j_from) = autodiff::value_and_jacobian(
                    |x| {
                        Ok(p.process
                            .propagate_dual(x)
                            .into_iter()
                            .zip(to)
                            .map(|(fx, t)| Dual::constant(t) - fx)
                            .collect())
                    },
                    &lin[p.from],
                )?;
                let fx = p.process.propagate(&lin[p.from]).as_array();
                let (_, j_to) = autodiff::value_and_jacobian(
                    |x| Ok((0..STATE_DIM).map(|i| x[i] - fx[i]).collect()),
                    &lin[p.to],
                )?;
                Ok((e, vec![(p.from, j_from), (p.to, j_to)]))
            }
            (Factor::Measurement(m), _) => {
                let (h, j) = m.model.predict_with_jacobian(&lin[m.node], mode)?;
                Ok((h - &m.z, vec![(m.node, j)]))
            }
        }
    }

    pub(crate) fn linearize(&self, lin: &[StateVector], mode: JacobianMode) -> Result<Linearized> {
        let (e, blocks) = self.evaluate(lin, mode)?;
        let lower = self.lower();
        let whitened = linalg::whiten_with(lower, &e);
        let blocks = blocks
            .into_iter()
            .map(|(node, j)| {
                let wj = lower
                    .solve_lower_triangular(&j)
                    .expect("Cholesky factor has a non-zero diagonal");
                (node, wj)
            })
            .collect();
        Ok(Linearized { whitened, blocks })
    }

    /// Whitened residual only.
    pub fn whitened_residual(&self, lin: &[StateVector]) -> Result<DVector<f64>> {
        let (e, _) = self.evaluate(lin, JacobianMode::Analytic)?;
        Ok(linalg::whiten_with(self.lower(), &e))
    }
}

/// Variables (window states, oldest first) and the factors that constrain them.
#[derive(Debug, Clone, Default)]
pub struct FactorGraph {
    variables: Vec<StateVector>,
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with the given value and returns its index.
    pub fn add_variable(&mut self, value: StateVector) -> usize {
        self.variables.push(value);
        self.variables.len() - 1
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<usize> {
        let id = factor.id(self.factors.len());
        for node in factor.nodes() {
            if node >= self.variables.len() {
                return Err(Error::Dimension {
                    context: format!("{id} references a missing variable"),
                    expected: self.variables.len(),
                    actual: node + 1,
                });
            }
        }
        if let Factor::Propagation(p) = &factor {
            if p.from == p.to {
                return Err(Error::Config(format!("{id} links a variable to itself")));
            }
        }
        self.factors.push(factor);
        Ok(self.factors.len() - 1)
    }

    pub fn variables(&self) -> &[StateVector] {
        &self.variables
    }

    pub fn set_variables(&mut self, values: Vec<StateVector>) -> Result<()> {
        if values.len() != self.variables.len() {
            return Err(Error::Dimension {
                context: "graph variables".into(),
                expected: self.variables.len(),
                actual: values.len(),
            });
        }
        self.variables = values;
        Ok(())
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Every variable touched by a factor, and no chain link duplicated.
    pub fn validate(&self) -> Result<()> {
        let mut touched = vec![false; self.variables.len()];
        let mut links = std::collections::HashSet::new();
        for (i, f) in self.factors.iter().enumerate() {
            for n in f.nodes() {
                touched[n] = true;
            }
            if let Factor::Propagation(p) = f {
                if !links.insert((p.from.min(p.to), p.from.max(p.to))) {
                    return Err(Error::Config(format!("{} duplicates a propagation link", f.id(i))));
                }
            }
        }
        let orphans: Vec<usize> = touched
            .iter()
            .enumerate()
            .filter_map(|(i, t)| (!t).then_some(i))
            .collect();
        if orphans.is_empty() {
            Ok(())
        } else {
            Err(Error::RankDeficient(orphans))
        }
    }
}

/// Gauss-Newton normal equations `H δ = b` at a linearization point.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub information: DMatrix<f64>,
    pub vector: DVector<f64>,
    /// Unweighted norm of the stacked whitened residuals.
    pub residual_norm: f64,
}

fn check_linearization(graph: &FactorGraph, lin: &[StateVector]) -> Result<()> {
    if lin.len() != graph.len() {
        return Err(Error::Dimension {
            context: "linearization point".into(),
            expected: graph.len(),
            actual: lin.len(),
        });
    }
    Ok(())
}

fn kernel_weights(kernel: RobustKernel, whitened: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    if kernel.is_l2() {
        return Ok(None);
    }
    let w: Result<Vec<f64>> = whitened.iter().map(|r| kernel.weight(*r)).collect();
    let w = DVector::from_vec(w?);
    Ok((!w.iter().all(|v| *v == 1.0)).then_some(w))
}

/// Adds the contribution of factor `index` to `(H, b)` and returns its squared whitened norm.
fn accumulate(
    factor: &Factor,
    index: usize,
    lin: &[StateVector],
    kernel: RobustKernel,
    mode: JacobianMode,
    h: &mut DMatrix<f64>,
    b: &mut DVector<f64>,
) -> Result<f64> {
    let lz = factor.linearize(lin, mode).map_err(|e| match e {
        Error::Dimension { expected, actual, .. } => Error::Dimension {
            context: factor.id(index),
            expected,
            actual,
        },
        other => other,
    })?;
    let psi = kernel_weights(kernel, &lz.whitened)?;

    if let (Factor::Prior(p), None) = (factor, &psi) {
        let node = p.node * STATE_DIM;
        let e = lin[p.node].to_dvector() - p.mean.to_dvector();
        let mut hb = h.view_mut((node, node), (STATE_DIM, STATE_DIM));
        hb += &p.information;
        let mut bb = b.rows_mut(node, STATE_DIM);
        bb -= &p.information * e;
        return Ok(lz.whitened.norm_squared());
    }

    let weighted_residual = match &psi {
        Some(w) => lz.whitened.component_mul(w),
        None => lz.whitened.clone(),
    };
    for (ni, ji) in &lz.blocks {
        let weighted_ji = match &psi {
            Some(w) => DMatrix::from_fn(ji.nrows(), ji.ncols(), |r, c| ji[(r, c)] * w[r]),
            None => ji.clone(),
        };
        let mut bb = b.rows_mut(ni * STATE_DIM, STATE_DIM);
        bb -= ji.transpose() * &weighted_residual;
        for (nj, jj) in &lz.blocks {
            let mut hb = h.view_mut((ni * STATE_DIM, nj * STATE_DIM), (STATE_DIM, STATE_DIM));
            hb += weighted_ji.transpose() * jj;
        }
    }
    Ok(lz.whitened.norm_squared())
}

fn assemble_subset(
    graph: &FactorGraph,
    lin: &[StateVector],
    kernel: RobustKernel,
    mode: JacobianMode,
    keep: impl Fn(&Factor) -> bool,
) -> Result<NormalEquations> {
    check_linearization(graph, lin)?;
    kernel.validate()?;
    let n = graph.len() * STATE_DIM;
    let mut h = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut sq = 0.0;
    for (i, f) in graph.factors.iter().enumerate() {
        if keep(f) {
            sq += accumulate(f, i, lin, kernel, mode, &mut h, &mut b)?;
        }
    }
    Ok(NormalEquations {
        information: linalg::symmetrize(&h),
        vector: b,
        residual_norm: sq.sqrt(),
    })
}

/// `H = Σ J̃ᵀ Ψ J̃`, `b = −Σ J̃ᵀ Ψ ẽ` over all factors, with `J̃ = L⁻¹J`, `ẽ = L⁻¹e`.
pub fn assemble_normal_equations(
    graph: &FactorGraph,
    lin: &[StateVector],
    kernel: RobustKernel,
) -> Result<NormalEquations> {
    assemble_with_mode(graph, lin, kernel, JacobianMode::Analytic)
}

pub fn assemble_with_mode(
    graph: &FactorGraph,
    lin: &[StateVector],
    kernel: RobustKernel,
    mode: JacobianMode,
) -> Result<NormalEquations> {
    assemble_subset(graph, lin, kernel, mode, |_| true)
}

/// Normal equations of only the factors that touch `node`.
pub(crate) fn assemble_touching(
    graph: &FactorGraph,
    lin: &[StateVector],
    node: usize,
) -> Result<NormalEquations> {
    assemble_subset(graph, lin, RobustKernel::L2, JacobianMode::Analytic, |f| {
        f.nodes().contains(&node)
    })
}

/// Unweighted norm of all whitened residuals at `lin`.
pub fn residual_norm(graph: &FactorGraph, lin: &[StateVector]) -> Result<f64> {
    check_linearization(graph, lin)?;
    let mut sq = 0.0;
    for f in &graph.factors {
        sq += f.whitened_residual(lin)?.norm_squared();
    }
    Ok(sq.sqrt())
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

/// Per-factor `(H, b, residual)` contributions keyed by factor id, for diffing.
pub fn debug_dump(graph: &FactorGraph, lin: &[StateVector], kernel: RobustKernel) -> Result<Value> {
    check_linearization(graph, lin)?;
    let n = graph.len() * STATE_DIM;
    let mut out = serde_json::Map::new();
    for (i, f) in graph.factors.iter().enumerate() {
        let mut h = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        accumulate(f, i, lin, kernel, JacobianMode::Analytic, &mut h, &mut b)?;
        let residual = f.whitened_residual(lin)?;
        out.insert(
            f.id(i),
            json!({
                "nodes": f.nodes(),
                "whitened_residual": residual.iter().copied().collect::<Vec<_>>(),
                "H": matrix_json(&h),
                "b": b.iter().copied().collect::<Vec<_>>(),
            }),
        );
    }
    Ok(Value::Object(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;

    fn scalar_chain() -> (FactorGraph, Vec<StateVector>) {
        let mut g = FactorGraph::new();
        let zero = StateVector::new(0.0, 0.0, 0.0, 0.0);
        g.add_variable(zero);
        g.add_variable(zero);
        g.add_factor(Factor::Prior(PriorFactor::new(0, zero, DMatrix::identity(4, 4)).unwrap())).unwrap();
        let process = ProcessModel::new(DMatrix::identity(4, 4), DMatrix::identity(4, 4), 1.0).unwrap();
        g.add_factor(Factor::Propagation(PropagationFactor::new(0, 1, process).unwrap())).unwrap();
        (g, vec![zero, zero])
    }

    #[test]
    fn single_prior_at_anchor() {
        let x0 = StateVector::new(1.0, 2.0, 3.0, 4.0);
        let mut g = FactorGraph::new();
        g.add_variable(x0);
        g.add_factor(Factor::Prior(PriorFactor::new(0, x0, DMatrix::identity(4, 4)).unwrap())).unwrap();
        let ne = assemble_normal_equations(&g, &[x0], RobustKernel::L2).unwrap();
        assert_eq!(ne.information, DMatrix::identity(4, 4));
        assert_eq!(ne.vector, DVector::zeros(4));
        assert_eq!(ne.residual_norm, 0.0);
    }

    #[test]
    fn scalar_chain_blocks() {
        let (g, lin) = scalar_chain();
        let h = assemble_normal_equations(&g, &lin, RobustKernel::L2).unwrap().information;
        for i in 0..4 {
            assert_eq!(h[(i, i)], 2.0);
            assert_eq!(h[(i, i + 4)], -1.0);
            assert_eq!(h[(i + 4, i)], -1.0);
            assert_eq!(h[(i + 4, i + 4)], 1.0);
        }
    }

    #[test]
    fn huber_at_zero_residual_equals_l2() {
        let (g, lin) = scalar_chain();
        let a = assemble_normal_equations(&g, &lin, RobustKernel::L2).unwrap();
        let b = assemble_normal_equations(&g, &lin, RobustKernel::default_huber()).unwrap();
        assert_eq!(a.information, b.information);
        assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn wrong_linearization_length() {
        let (g, lin) = scalar_chain();
        assert!(assemble_normal_equations(&g, &lin[..1], RobustKernel::L2).is_err());
    }

    #[test]
    fn factor_referencing_missing_variable() {
        let mut g = FactorGraph::new();
        g.add_variable(StateVector::new(0.0, 0.0, 0.0, 0.0));
        let process = ProcessModel::constant_velocity(1.0, [1.0; 4]).unwrap();
        let err = g
            .add_factor(Factor::Propagation(PropagationFactor::new(0, 3, process).unwrap()))
            .unwrap_err();
        assert!(err.to_string().contains("propagation[0->3]"));
    }

    #[test]
    fn orphan_variable_reported() {
        let (mut g, _) = scalar_chain();
        g.add_variable(StateVector::new(0.0, 0.0, 0.0, 0.0));
        assert!(matches!(g.validate(), Err(Error::RankDeficient(v)) if v == vec![2]));
    }

    #[test]
    fn ad_matches_analytic_assembly() {
        let anchors = sim::place_anchors(105.0, 4).unwrap();
        let meas = MeasurementModel::toa_isotropic(anchors, 0.1).unwrap();
        let process = ProcessModel::constant_velocity(1.0, [1e-4, 1e-4, 1e-3, 1e-3]).unwrap();
        let mut g = FactorGraph::new();
        let a = StateVector::new(10.0, 20.0, 1.0, -1.0);
        let b = StateVector::new(11.2, 18.7, 0.9, -1.1);
        g.add_variable(a);
        g.add_variable(b);
        g.add_factor(Factor::Prior(PriorFactor::new(0, a, DMatrix::identity(4, 4) * 2.0).unwrap())).unwrap();
        g.add_factor(Factor::Propagation(PropagationFactor::new(0, 1, process).unwrap())).unwrap();
        let z = meas.predict(&StateVector::new(11.0, 19.0, 0.0, 0.0)).unwrap();
        g.add_factor(Factor::Measurement(MeasurementFactor::new(1, meas, z).unwrap())).unwrap();
        let lin = [StateVector::new(10.5, 19.5, 1.0, -1.0), b];
        for kernel in [RobustKernel::L2, RobustKernel::default_huber()] {
            let an = assemble_with_mode(&g, &lin, kernel, JacobianMode::Analytic).unwrap();
            let ad = assemble_with_mode(&g, &lin, kernel, JacobianMode::AutoDiff).unwrap();
            assert!((an.information - ad.information).amax() < 1e-6);
            assert!((an.vector - ad.vector).amax() < 1e-6);
        }
    }

    #[test]
    fn debug_dump_keys_every_factor() {
        let (g, lin) = scalar_chain();
        let dump = debug_dump(&g, &lin, RobustKernel::L2).unwrap();
        let obj = dump.as_object().unwrap();
        assert_eq!(obj.len(), 2);
        assert!(obj.contains_key("f1:propagation[0->1]"));
    }
}
