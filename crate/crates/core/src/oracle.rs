//! Exhaustive ground truth: optimum search and direct marginal summation.

use crate::error::{Error, Result};
use crate::problem::{Assignment, Problem};
use crate::tn::MarginalVector;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: Assignment,
    pub best_cost: f64,
    /// Number of assignments whose cost equals `best_cost` exactly.
    pub optima_count: u64,
}

fn state_count(d: usize, vars: usize, cap: u128) -> Result<u64> {
    let mut total: u128 = 1;
    for _ in 0..vars {
        total = total.saturating_mul(d as u128);
        if total > cap {
            return Err(Error::Capacity {
                what: "enumeration",
                needed: (d as u128).saturating_pow(vars as u32),
                cap,
            });
        }
    }
    Ok(total as u64)
}

/// Advances `x[from..]` as an odometer, last variable fastest.
fn advance(x: &mut [usize], from: usize, d: usize) {
    for v in x[from..].iter_mut().rev() {
        *v += 1;
        if *v < d {
            return;
        }
        *v = 0;
    }
}

/// Enumerates all `d^n` assignments in lexicographic order.
/// Ties keep the lexicographically smallest assignment.
pub fn brute_force(p: &Problem, cap: u128) -> Result<OracleResult> {
    let (n, d) = (p.n(), p.d());
    let total = state_count(d, n, cap)?;
    let mut x = vec![0; n];
    let mut best = x.clone();
    let mut best_cost = f64::INFINITY;
    let mut optima_count = 0;
    for _ in 0..total {
        let c = p.cost_of(&x);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&x);
            optima_count = 1;
        } else if c == best_cost {
            optima_count += 1;
        }
        advance(&mut x, 0, d);
    }
    Ok(OracleResult {
        best: Assignment::new(best),
        best_cost,
        optima_count,
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// Entry `j` is the sum of `e^{-tau (C(x) - c)}` over every completion of
/// `fixed` (values of `x_0 .. x_{fixed.len()-1}`) with `x_i = j`, where
/// `c = min(0, min C)` over those completions.
/// The shift is a common factor, so ratios between entries are exact.
pub fn direct_marginal(
    p: &Problem,
    i: usize,
    fixed: &[usize],
    tau: f64,
    cap: u128,
) -> Result<MarginalVector> {
    let (n, d) = (p.n(), p.d());
    if i >= n {
        return Err(Error::IndexOutOfRange(format!("variable {i} >= n = {n}")));
    }
    if fixed.len() > i {
        return Err(Error::InvalidAssignment(format!(
            "{} fixed values but variable {i} is the one being marginalized",
            fixed.len()
        )));
    }
    if let Some(&v) = fixed.iter().find(|&&v| v >= d) {
        return Err(Error::InvalidAssignment(format!(
            "fixed value {v} >= d = {d}"
        )));
    }
    let free = n - fixed.len();
    let total = state_count(d, free, cap)?;
    let mut x = vec![0; n];
    x[..fixed.len()].copy_from_slice(fixed);
    let start = x.clone();
    let mut shift = 0.0f64;
    for _ in 0..total {
        shift = shift.min(p.cost_of(&x));
        advance(&mut x, fixed.len(), d);
    }
    x = start;
    let mut sums = vec![CompensatedSum::default(); d];
    for _ in 0..total {
        sums[x[i]].add((-tau * (p.cost_of(&x) - shift)).exp());
        advance(&mut x, fixed.len(), d);
    }
    Ok(MarginalVector::new(
        sums.into_iter().map(CompensatedSum::value).collect(),
    ))
}
