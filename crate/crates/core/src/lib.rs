//! Tensor-network solvers for quadratic and tensor unconstrained discrete
//! optimization.
//!
//! A problem assigns each of `n` variables a value in `0..d` and minimizes a
//! sum of single-variable and pairwise costs. The solvers encode the
//! Boltzmann weight `e^{-tau C(x)}` as a tensor network and fix the variables
//! one at a time from the largest entry of each conditional marginal.

pub mod chain_solver;
pub mod dense_solver;
pub mod error;
mod factors;
pub mod oracle;
pub mod problem;
pub mod solve;
pub mod stair;
pub mod tn;
pub mod waterfall;
mod wide;

pub use chain_solver::{
    backward_pass_matrix, build_chain_stair, solve_matrix, solve_matrix_with, solve_tensor,
    solve_tensor_with, ChainOptions, MessageState, TransferOperator,
};
pub use dense_solver::{
    build_stair, contract_marginal, solve_dense, solve_dense_with, ContractionPath, DenseOptions,
};
pub use error::{Error, FaultKind, Result};
pub use oracle::{brute_force, direct_marginal, OracleResult};
pub use problem::{Assignment, ChainProblem, Problem, ProblemBuilder, ProblemKind};
pub use solve::{
    chain_width, relative_error, solve, solve_best_of_grid, GridOutcome, Method, RelativeError,
    Solution, SolveOptions,
};
pub use stair::StairNetwork;
pub use tn::{
    argmax_extract, bit_extract, bits_extract, normalize, Capacity, MarginalVector, NodeKind,
    SolverConfig, TauGrid, TensorNode, TieBreak,
};
pub use waterfall::{
    candidate_table, check_cascade, solve_waterfall, solve_waterfall_with, Cascade,
    WaterfallOptions, WaterfallStats, WaterfallTable,
};
