//! Per-variable cost tables in chain layout and their imaginary-time weights.

use crate::problem::{ChainProblem, Problem};
use crate::wide::Wide;

/// Local costs with at most `k` back-neighbors per variable.
///
/// `back(m, j)` is the `d x d` table of the coupling between `x_{m-j}` (row
/// index) and `x_m` (column index); `None` when that pair does not couple.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LocalCosts {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    self_cost: Vec<f64>,
    back: Vec<Option<Vec<f64>>>,
}

impl LocalCosts {
    /// Caller guarantees `p.bandwidth() <= k`.
    pub fn from_problem(p: &Problem, k: usize) -> Self {
        let (n, d) = (p.n(), p.d());
        let k = k.max(1);
        debug_assert!(p.bandwidth() <= k);
        let mut self_cost = vec![0.0; n * d];
        let mut back = vec![None; n * k];
        for i in 0..n {
            for a in 0..d {
                self_cost[i * d + a] = p.self_cost(i, a);
            }
            for t in p.pairs_of(i) {
                back[t.j * k + (t.j - i) - 1] = Some(t.table.clone());
            }
        }
        LocalCosts {
            n,
            d,
            k,
            self_cost,
            back,
        }
    }

    pub fn from_chain(chain: &ChainProblem<'_>) -> Self {
        Self::from_problem(chain.problem(), chain.k())
    }

    pub fn self_costs(&self, m: usize) -> &[f64] {
        &self.self_cost[m * self.d..(m + 1) * self.d]
    }

    pub fn back(&self, m: usize, j: usize) -> Option<&[f64]> {
        if j == 0 || j > m {
            return None;
        }
        self.back[m * self.k + j - 1].as_deref()
    }

    /// The prefix `0..m` as its own chain, with every coupling to the known
    /// values `tail[q - m] = x_q` (`q >= m`) folded into the self costs.
    pub fn restrict_prefix(&self, m: usize, tail: &[usize]) -> LocalCosts {
        let (d, k) = (self.d, self.k);
        let mut self_cost = self.self_cost[..m * d].to_vec();
        for (offset, &xq) in tail.iter().enumerate() {
            let q = m + offset;
            for j in 1..=k.min(q) {
                let p = q - j;
                if p >= m {
                    continue;
                }
                if let Some(table) = self.back(q, j) {
                    for a in 0..d {
                        self_cost[p * d + a] += table[a * d + xq];
                    }
                }
            }
        }
        LocalCosts {
            n: m,
            d,
            k,
            self_cost,
            back: self.back[..m * k].to_vec(),
        }
    }
}

/// Weights of a cost table, shifted so the smallest cost maps to 1. The
/// shift is a constant factor per table, so every contraction built from
/// them is proportional to the unshifted one.
fn shifted(costs: &[f64], tau: f64) -> Vec<Wide> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    costs.iter().map(|c| Wide::exp(-tau * (c - min))).collect()
}

/// Weights `e^{-tau (c - min c)}` of every local table.
#[derive(Debug, Clone)]
pub(crate) struct FactorTables {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    self_w: Vec<Wide>,
    back_w: Vec<Option<Vec<Wide>>>,
}

impl FactorTables {
    pub fn new(costs: &LocalCosts, tau: f64) -> Self {
        let d = costs.d;
        let self_w = (0..costs.n)
            .flat_map(|m| shifted(costs.self_costs(m), tau))
            .collect();
        let back_w = costs
            .back
            .iter()
            .map(|t| t.as_ref().map(|t| shifted(t, tau)))
            .collect();
        debug_assert_eq!(costs.self_cost.len(), costs.n * d);
        FactorTables {
            n: costs.n,
            d,
            k: costs.k,
            self_w,
            back_w,
        }
    }

    #[inline]
    pub fn self_w(&self, m: usize, z: usize) -> Wide {
        self.self_w[m * self.d + z]
    }

    /// Weight of `x_{m-j} = a`, `x_m = z`; 1 for uncoupled pairs.
    #[inline]
    pub fn back_w(&self, m: usize, j: usize, a: usize, z: usize) -> Wide {
        match &self.back_w[m * self.k + j - 1] {
            Some(t) => t[a * self.d + z],
            None => Wide::ONE,
        }
    }

    pub fn has_back(&self, m: usize, j: usize) -> bool {
        j >= 1 && j <= m && j <= self.k && self.back_w[m * self.k + j - 1].is_some()
    }
}

/// Digits of `t` in base `d`, lowest digit first.
#[inline]
pub(crate) fn decode(mut t: usize, d: usize, out: &mut [usize]) {
    for slot in out.iter_mut() {
        *slot = t % d;
        t /= d;
    }
}

/// `sum_j d^j digits[j]`.
#[inline]
pub(crate) fn encode(digits: &[usize], d: usize) -> usize {
    digits.iter().rev().fold(0, |acc, &v| acc * d + v)
}
