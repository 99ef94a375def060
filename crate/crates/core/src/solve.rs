//! Method dispatch, best-of-grid search and error metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain_solver::{solve_matrix, solve_tensor};
use crate::dense_solver::solve_dense;
use crate::error::{Error, Result};
use crate::oracle::brute_force;
use crate::problem::{Assignment, Problem};
use crate::tn::{MarginalVector, SolverConfig};
use crate::waterfall::{solve_waterfall_with, WaterfallOptions, WaterfallStats};

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Assignment,
    /// Recomputed from the assignment, never taken from the contraction.
    pub cost: f64,
    pub tau: f64,
    /// One entry per variable in fixing order; empty for brute force.
    pub marginals: Vec<MarginalVector>,
    /// Intermediate tensors, messages or tables kept alive at peak.
    pub tensors_held: usize,
    pub waterfall: Option<WaterfallStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Matrix,
    Tensor,
    Waterfall,
    Brute,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dense,
        Method::Matrix,
        Method::Tensor,
        Method::Waterfall,
        Method::Brute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Matrix => "matrix",
            Method::Tensor => "tensor",
            Method::Waterfall => "waterfall",
            Method::Brute => "brute",
        }
    }

    /// Whether the method works on a k-neighbor chain view.
    pub fn is_chain(self) -> bool {
        matches!(self, Method::Matrix | Method::Tensor | Method::Waterfall)
    }

    /// Whether the result depends on `tau`.
    pub fn uses_tau(self) -> bool {
        self != Method::Brute
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    /// Chain width; defaults to the instance bandwidth (at least 1).
    pub k: Option<usize>,
    pub waterfall: WaterfallOptions,
}

pub fn chain_width(p: &Problem, k: Option<usize>) -> usize {
    k.unwrap_or_else(|| p.bandwidth().max(1))
}

pub fn solve(
    p: &Problem,
    method: Method,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<Solution> {
    cfg.validate()?;
    match method {
        Method::Dense => solve_dense(p, cfg),
        Method::Brute => {
            let r = brute_force(p, cfg.caps.brute_states)?;
            Ok(Solution {
                assignment: r.best,
                cost: r.best_cost,
                tau: cfg.tau,
                marginals: Vec::new(),
                tensors_held: 0,
                waterfall: None,
            })
        }
        Method::Matrix | Method::Tensor | Method::Waterfall => {
            let chain = p.chain_view(chain_width(p, opts.k))?;
            match method {
                Method::Matrix => solve_matrix(&chain, cfg),
                Method::Tensor => solve_tensor(&chain, cfg),
                _ => solve_waterfall_with(&chain, cfg, opts.waterfall),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: Solution,
    pub evaluated: usize,
    /// Grid points skipped because of a numeric fault.
    pub faults: usize,
}

/// Solves at every point of `cfg.tau_grid` (the default grid when unset) and keeps the lowest cost,
/// the earliest point on ties. Points that fault numerically are skipped.
pub fn solve_best_of_grid(
    p: &Problem,
    method: Method,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<GridOutcome> {
    cfg.validate()?;
    let points = if method.uses_tau() {
        cfg.tau_grid.unwrap_or_default().points()
    } else {
        vec![cfg.tau]
    };
    let mut best: Option<Solution> = None;
    let mut faults = 0;
    let mut last_fault = None;
    for &tau in &points {
        match solve(p, method, &cfg.at_tau(tau), opts) {
            Ok(s) => {
                if best.as_ref().is_none_or(|b| s.cost < b.cost) {
                    best = Some(s);
                }
            }
            Err(e @ Error::NumericFault { .. }) => {
                faults += 1;
                last_fault = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(best) => Ok(GridOutcome {
            best,
            evaluated: points.len(),
            faults,
        }),
        None => Err(last_fault.unwrap_or_else(|| Error::InvalidConfig("empty tau grid".into()))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    pub value: f64,
    /// Set when the reference cost is zero and `value` is `C_method - C_ref`.
    pub absolute: bool,
}

/// `1 - C_method / C_ref`; negative when the method beats the reference.
pub fn relative_error(c_method: f64, c_ref: f64) -> RelativeError {
    if c_ref == 0.0 {
        RelativeError {
            value: c_method - c_ref,
            absolute: true,
        }
    } else {
        RelativeError {
            value: 1.0 - c_method / c_ref,
            absolute: false,
        }
    }
}
