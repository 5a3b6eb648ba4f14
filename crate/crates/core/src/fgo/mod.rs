//! Factor-graph estimation: graph assembly, robust Gauss-Newton, Schur
//! marginalization, the recursive window-1 scheme that reproduces the filter
//! family, and the sliding-window smoother.

mod graph;
mod refgo;
mod solve;
mod window;

pub use graph::{
    assemble_normal_equations, assemble_with_mode, debug_dump, residual_norm, Factor, FactorGraph,
    MeasurementFactor, NormalEquations, PriorFactor, PropagationFactor,
};
pub use refgo::{refgo_predict, refgo_step, refgo_update, run_refgo};
pub use solve::{gauss_newton_solve, marginalize_oldest, SolveResult, SolverOptions};
pub use window::{run_swfgo, swfgo_step, SlidingWindow};
