use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DVector;

use super::graph::{Factor, FactorGraph, MeasurementFactor, PriorFactor, PropagationFactor};
use super::solve::{gauss_newton_solve, SolverOptions};
use crate::error::{Error, Result};
use crate::kfv::{self, IterationTrace};
use crate::model::{FilterSetup, GaussianBelief, MeasurementModel, ProcessModel, StateVector};
use crate::report::{EpochRecord, RunReport};
use crate::sim::Dataset;

/// The last `size` states with their measurements, anchored at the oldest.
///
/// When a state slides out, the next-oldest state is anchored to
/// `F x̂_dropped` with covariance `Q`. The dropped estimate enters as a fixed
/// point: its own uncertainty is discarded rather than marginalized.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    size: usize,
    process: ProcessModel,
    meas: MeasurementModel,
    anchor: PriorFactor,
    states: VecDeque<StateVector>,
    measurements: VecDeque<DVector<f64>>,
}

impl SlidingWindow {
    pub fn new(size: usize, init: &GaussianBelief, process: ProcessModel, meas: MeasurementModel) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("window size must be >= 1".into()));
        }
        let anchor = PriorFactor::from_belief(0, &kfv::kf_predict(init, &process)?)?;
        Ok(SlidingWindow {
            size,
            process,
            meas,
            anchor,
            states: VecDeque::with_capacity(size + 1),
            measurements: VecDeque::with_capacity(size + 1),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn states(&self) -> impl Iterator<Item = &StateVector> {
        self.states.iter()
    }

    pub fn anchor(&self) -> &PriorFactor {
        &self.anchor
    }

    fn push(&mut self, z: &DVector<f64>) -> Result<()> {
        self.meas.check_measurement(z)?;
        let guess = match self.states.back() {
            Some(last) => self.process.propagate(last),
            None => *self.anchor.mean(),
        };
        self.states.push_back(guess);
        self.measurements.push_back(z.clone());
        if self.states.len() > self.size {
            let dropped = self.states.pop_front().expect("window is non-empty");
            self.measurements.pop_front();
            let anchored = GaussianBelief::new(self.process.propagate(&dropped), self.process.noise().clone())?;
            self.anchor = PriorFactor::from_belief(0, &anchored)?;
        }
        Ok(())
    }

    /// Graph over the current window states.
    pub fn graph(&self) -> Result<FactorGraph> {
        let mut graph = FactorGraph::new();
        for s in &self.states {
            graph.add_variable(*s);
        }
        graph.add_factor(Factor::Prior(self.anchor.clone()))?;
        for i in 1..self.states.len() {
            graph.add_factor(Factor::Propagation(PropagationFactor::new(i - 1, i, self.process.clone())?))?;
        }
        for (i, z) in self.measurements.iter().enumerate() {
            graph.add_factor(Factor::Measurement(MeasurementFactor::new(i, self.meas.clone(), z.clone())?))?;
        }
        Ok(graph)
    }
}

/// Appends `x_k`, slides the window if needed and solves all window states jointly.
pub fn swfgo_step(
    window: &mut SlidingWindow,
    z: &DVector<f64>,
    options: &SolverOptions,
) -> Result<(FactorGraph, GaussianBelief, IterationTrace)> {
    options.validate()?;
    window.push(z)?;
    let mut graph = window.graph()?;
    let init: Vec<StateVector> = window.states.iter().copied().collect();
    let solution = gauss_newton_solve(&graph, &init, options)?;
    let newest = solution.estimates.len() - 1;
    let covariance = solution.marginal_covariance(newest)?;
    let belief = GaussianBelief::symmetrized(solution.estimates[newest], &covariance)?;
    window.states = solution.estimates.iter().copied().collect();
    graph.set_variables(solution.estimates)?;
    Ok((graph, belief, solution.trace))
}

pub fn run_swfgo(
    window_size: usize,
    options: &SolverOptions,
    dataset: &Dataset,
    setup: &FilterSetup,
    id: &str,
) -> Result<RunReport> {
    options.validate()?;
    dataset.validate()?;
    let meas = setup.measurement_model(&dataset.anchors)?;
    let mut window = SlidingWindow::new(window_size, &setup.init, setup.process.clone(), meas)?;
    let mut report = RunReport::new(id, dataset.scheme.name, dataset.seed);
    for (k, z) in dataset.ranges.iter().enumerate() {
        let start = Instant::now();
        let (_, belief, trace) = swfgo_step(&mut window, z, options).map_err(|e| e.at_epoch(k + 1))?;
        let runtime = start.elapsed().as_secs_f64();
        report.epochs.push(EpochRecord {
            estimate: *belief.mean(),
            covariance: belief.covariance().clone(),
            trace,
            runtime,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fgo::graph::assemble_normal_equations;
    use crate::kernel::RobustKernel;
    use crate::model::{Point, STATE_DIM};
    use crate::sim::{self, DataScheme, SchemeName};

    fn setup() -> (FilterSetup, MeasurementModel) {
        let s = FilterSetup::defaults(1.0, 0.1).unwrap();
        let m = s.measurement_model(&sim::place_anchors(105.0, 4).unwrap()).unwrap();
        (s, m)
    }

    #[test]
    fn window_never_exceeds_size() {
        let (s, m) = setup();
        let mut w = SlidingWindow::new(3, &s.init, s.process.clone(), m.clone()).unwrap();
        for k in 0..6 {
            let z = m.predict(&StateVector::new(200.0 + k as f64, -100.0, 1.0, 0.0)).unwrap();
            let (g, _, _) = swfgo_step(&mut w, &z, &SolverOptions::default()).unwrap();
            assert_eq!(g.len(), (k + 1).min(3));
            assert!(g.validate().is_ok());
        }
    }

    #[test]
    fn information_is_block_tridiagonal() {
        let (s, m) = setup();
        let mut w = SlidingWindow::new(4, &s.init, s.process.clone(), m.clone()).unwrap();
        let mut graph = None;
        for k in 0..4 {
            let z = m.predict(&StateVector::new(200.0 + k as f64, -100.0, 1.0, 0.0)).unwrap();
            graph = Some(swfgo_step(&mut w, &z, &SolverOptions::default()).unwrap().0);
        }
        let g = graph.unwrap();
        let h = assemble_normal_equations(&g, g.variables(), RobustKernel::L2).unwrap().information;
        for i in 0..4 {
            for j in 0..4 {
                let block = h.view((i * STATE_DIM, j * STATE_DIM), (STATE_DIM, STATE_DIM));
                if i.abs_diff(j) > 1 {
                    assert!(block.iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn zero_size_rejected() {
        let (s, m) = setup();
        assert!(SlidingWindow::new(0, &s.init, s.process.clone(), m).is_err());
    }

    #[test]
    fn noiseless_straight_line_is_exact() {
        let mut ds = sim::generate_dataset(&DataScheme::named(SchemeName::NonlinearGaussian).with_epochs(25), 3).unwrap();
        ds.truth = sim::cv_trajectory(Point::new(205.0, -95.0), Point::new(5.0, 5.0), 25, 1.0);
        ds.ranges = ds
            .truth
            .iter()
            .map(|t| sim::toa_measure(&ds.anchors, &t.position()).unwrap())
            .collect();
        let setup = FilterSetup::defaults(1.0, 1e-3).unwrap();
        for w in [1, 2, 4] {
            let opts = SolverOptions::fg_iekf();
            let report = run_swfgo(w, &opts, &ds, &setup, "sw-fgo").unwrap();
            for (e, t) in report.estimates().zip(&ds.truth) {
                assert!((e.position() - t.position()).norm() < 1e-6, "w={w}");
            }
        }
    }
}
