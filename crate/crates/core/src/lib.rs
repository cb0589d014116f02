//! Hierarchical sparse-grid stochastic collocation with warm-started iterative solves.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod driver;
pub mod error;
pub mod estimates;
pub mod fem;
pub mod interpolant;
pub mod model_problems;
pub mod qmc;
pub mod solvers;
pub mod sparse_grid;

pub use driver::{
    run_experiment, run_experiment_full, ExperimentReport, LevelStats, Mode, PcPolicy, ReferenceSpec, RunConfig,
    SolveRecord, Totals,
};
pub use error::{Error, Result};
pub use estimates::{BoundCheck, EstimateParams};
pub use fem::{AssembledSystem, Discretization, Mesh, SparseMatrix};
pub use interpolant::{lebesgue_estimate, QuadratureRule, SparseGridBasis, VectorValuedInterpolant};
pub use model_problems::{
    BoundaryCondition, CoefficientField, Forcing, Nonlinearity, ParameterDomain, ProblemSpec,
};
pub use solvers::{cg_solve, GuessSource, Preconditioner, SolveReport, Stopping};
pub use sparse_grid::{
    build_grid, build_grid_capped, AnisotropyWeights, CollocationGrid, GridPoint, MultiIndex,
};
