use std::time::Instant;

use nalgebra::DVector;

use super::graph::{Factor, FactorGraph, MeasurementFactor, PriorFactor, PropagationFactor};
use super::solve::{gauss_newton_solve, marginalize_oldest, SolverOptions};
use crate::error::Result;
use crate::kernel::RobustKernel;
use crate::kfv::IterationTrace;
use crate::model::{FilterSetup, GaussianBelief, MeasurementModel, ProcessModel};
use crate::report::{EpochRecord, RunReport};
use crate::sim::Dataset;

/// Predicted prior on `x_k` from the posterior prior on `x_{k−1}`.
pub fn refgo_predict(prior: &PriorFactor, process: &ProcessModel, options: &SolverOptions) -> Result<PriorFactor> {
    let mut graph = FactorGraph::new();
    let x = *prior.mean();
    let fx = process.propagate(&x);
    graph.add_variable(x);
    graph.add_variable(fx);
    graph.add_factor(Factor::Prior(prior.clone().with_node(0)))?;
    graph.add_factor(Factor::Propagation(PropagationFactor::new(0, 1, process.clone())?))?;
    let linear = SolverOptions {
        max_iters: 1,
        kernel: RobustKernel::L2,
        ..*options
    };
    let solution = gauss_newton_solve(&graph, &[x, fx], &linear)?;
    marginalize_oldest(&graph, &solution)
}

/// Posterior on `x_k` from its predicted prior and the measurement `z`.
pub fn refgo_update(
    predicted: &PriorFactor,
    meas: &MeasurementModel,
    z: &DVector<f64>,
    options: &SolverOptions,
) -> Result<(PriorFactor, GaussianBelief, IterationTrace)> {
    let mut graph = FactorGraph::new();
    let x = *predicted.mean();
    graph.add_variable(x);
    graph.add_factor(Factor::Prior(predicted.clone().with_node(0)))?;
    graph.add_factor(Factor::Measurement(MeasurementFactor::new(0, meas.clone(), z.clone())?))?;
    let solution = gauss_newton_solve(&graph, &[x], options)?;
    let posterior = PriorFactor::new(0, solution.estimates[0], solution.information)?;
    let belief = posterior.to_belief()?;
    Ok((posterior, belief, solution.trace))
}

/// One recursive step: propagate, marginalize the old state, then update.
pub fn refgo_step(
    prior: &PriorFactor,
    process: &ProcessModel,
    meas: &MeasurementModel,
    z: &DVector<f64>,
    options: &SolverOptions,
) -> Result<(PriorFactor, GaussianBelief, IterationTrace)> {
    options.validate()?;
    let predicted = refgo_predict(prior, process, options)?;
    refgo_update(&predicted, meas, z, options)
}

pub fn run_refgo(options: &SolverOptions, dataset: &Dataset, setup: &FilterSetup, id: &str) -> Result<RunReport> {
    options.validate()?;
    dataset.validate()?;
    let meas = setup.measurement_model(&dataset.anchors)?;
    let mut report = RunReport::new(id, dataset.scheme.name, dataset.seed);
    let mut prior = PriorFactor::from_belief(0, &setup.init)?;
    for (k, z) in dataset.ranges.iter().enumerate() {
        let start = Instant::now();
        let (next, belief, trace) =
            refgo_step(&prior, &setup.process, &meas, z, options).map_err(|e| e.at_epoch(k + 1))?;
        let runtime = start.elapsed().as_secs_f64();
        report.epochs.push(EpochRecord {
            estimate: *belief.mean(),
            covariance: belief.covariance().clone(),
            trace,
            runtime,
        });
        prior = next;
    }
    Ok(report)
}
