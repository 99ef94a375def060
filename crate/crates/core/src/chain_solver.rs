//! Solvers for k-neighbor chains.
//!
//! The matrix method sweeps a backward message `B_m` over the states of the
//! `k` lowest unabsorbed variables `(x_m, .., x_{m+k-1})` from the last
//! variable to the first, one sparse transfer operator per row, then fixes the
//! variables first to last. The tensor method contracts the banded stair
//! network row by row instead; its boundary tensor holds the `k` open column
//! lines of the earlier variables. Both compute the same conditional
//! marginals through different factorizations.

use crate::dense_solver::{environments, row_marginal, ContractionPath};
use crate::error::{Error, Result};
use crate::factors::{decode, FactorTables, LocalCosts};
use crate::problem::{Assignment, ChainProblem};
use crate::solve::Solution;
use crate::stair::StairNetwork;
use crate::tn::{argmax, normalize_in_place, MarginalVector, SolverConfig};
use crate::wide::{finish_wide, normalize_wide, Wide};

/// Backward message `B_m` over `(x_m, .., x_{m+L-1})`, `L = min(k, n - m)`,
/// encoded `t = sum_j d^j x_{m+j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub origin: usize,
    pub entries: Vec<f64>,
}

/// Transfer from `B_{m+1}` to `B_m`. State `(x_{m+1}, .., x_{m+L})` of the
/// input maps to `(z, x_{m+1}, .., x_{m+L-1})` with weight
/// `phi_mm(z) prod_j phi_{m,m+j}(z, x_{m+j})`, summing out `x_{m+k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOperator {
    row: usize,
    d: usize,
    in_vars: usize,
    out_vars: usize,
    self_w: Vec<Wide>,
    // forward[j - 1][z * d + a]: coupling of x_m = z with x_{m+j} = a
    forward: Vec<Option<Vec<Wide>>>,
}

impl TransferOperator {
    pub fn new(chain: &ChainProblem<'_>, m: usize, tau: f64) -> Result<Self> {
        if m >= chain.n() {
            return Err(Error::IndexOutOfRange(format!(
                "row {m} >= n = {}",
                chain.n()
            )));
        }
        let f = FactorTables::new(&LocalCosts::from_chain(chain), tau);
        Ok(Self::from_tables(&f, m))
    }

    pub(crate) fn from_tables(f: &FactorTables, m: usize) -> Self {
        let (d, k, n) = (f.d, f.k, f.n);
        let in_vars = k.min(n - 1 - m);
        let out_vars = k.min(n - m);
        let self_w = (0..d).map(|z| f.self_w(m, z)).collect();
        let forward = (1..=in_vars)
            .map(|j| {
                f.has_back(m + j, j).then(|| {
                    let mut t = vec![Wide::ZERO; d * d];
                    for z in 0..d {
                        for a in 0..d {
                            t[z * d + a] = f.back_w(m + j, j, z, a);
                        }
                    }
                    t
                })
            })
            .collect();
        TransferOperator {
            row: m,
            d,
            in_vars,
            out_vars,
            self_w,
            forward,
        }
    }

    pub fn row(&self) -> usize {
        self.row
    }

    pub fn in_len(&self) -> usize {
        self.d.pow(self.in_vars as u32)
    }

    pub fn out_len(&self) -> usize {
        self.d.pow(self.out_vars as u32)
    }

    #[inline]
    fn out_index(&self, z: usize, s: usize) -> usize {
        z + self.d * (s % self.d.pow(self.out_vars as u32 - 1))
    }

    fn weight(&self, z: usize, digits: &[usize]) -> Wide {
        let d = self.d;
        let mut w = self.self_w[z];
        for (j, t) in self.forward.iter().enumerate() {
            if let Some(t) = t {
                w *= t[z * d + digits[j]];
            }
        }
        w
    }

    /// Structural nonzeros: one per (input state, row value) pair.
    pub fn structural_nonzeros(&self) -> usize {
        self.in_len() * self.d
    }

    pub(crate) fn apply_wide(&self, next: &[Wide]) -> Vec<Wide> {
        debug_assert_eq!(next.len(), self.in_len());
        let d = self.d;
        let mut out = vec![Wide::ZERO; self.out_len()];
        let mut digits = vec![0; self.in_vars];
        for (s, &b) in next.iter().enumerate() {
            if b.is_zero() {
                continue;
            }
            decode(s, d, &mut digits);
            for z in 0..d {
                out[self.out_index(z, s)] += self.weight(z, &digits) * b;
            }
        }
        out
    }

    fn dense_wide(&self) -> Vec<Vec<Wide>> {
        let mut m = vec![vec![Wide::ZERO; self.in_len()]; self.out_len()];
        let mut digits = vec![0; self.in_vars];
        for s in 0..self.in_len() {
            decode(s, self.d, &mut digits);
            for z in 0..self.d {
                m[self.out_index(z, s)][s] = self.weight(z, &digits);
            }
        }
        m
    }

    fn apply_dense_wide(&self, next: &[Wide]) -> Vec<Wide> {
        self.dense_wide()
            .iter()
            .map(|row| {
                row.iter()
                    .zip(next)
                    .fold(Wide::ZERO, |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Applies the operator, touching only the structural nonzeros.
    pub fn apply(&self, next: &[f64]) -> Vec<f64> {
        let next: Vec<Wide> = next.iter().map(|&v| Wide::from_f64(v)).collect();
        self.apply_wide(&next)
            .into_iter()
            .map(Wide::to_f64)
            .collect()
    }

    /// The operator as a dense `out_len x in_len` matrix.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.dense_wide()
            .into_iter()
            .map(|row| row.into_iter().map(Wide::to_f64).collect())
            .collect()
    }
}

/// `B_m` for every row `m >= stop`, last row first.
pub(crate) fn backward_messages(
    f: &FactorTables,
    stop: usize,
    normalize: bool,
    dense: bool,
) -> Result<Vec<Vec<Wide>>> {
    let n = f.n;
    let mut out: Vec<Vec<Wide>> = Vec::with_capacity(n - stop);
    for m in (stop..n).rev() {
        let op = TransferOperator::from_tables(f, m);
        let one = [Wide::ONE];
        let next = out.last().map_or(&one[..], |b| &b[..]);
        let mut entries = if dense {
            op.apply_dense_wide(next)
        } else {
            op.apply_wide(next)
        };
        if normalize {
            normalize_wide(&mut entries, || format!("backward message of row {m}"))?;
        }
        out.push(entries);
    }
    Ok(out)
}

/// Backward pass of the matrix method: `(B_{n-1}, .., B_1)`.
pub fn backward_pass_matrix(
    chain: &ChainProblem<'_>,
    cfg: &SolverConfig,
) -> Result<Vec<MessageState>> {
    cfg.validate()?;
    let f = FactorTables::new(&LocalCosts::from_chain(chain), cfg.tau);
    let n = chain.n();
    let msgs = backward_messages(&f, 1.min(n - 1), cfg.normalize, false)?;
    Ok(msgs
        .into_iter()
        .enumerate()
        .map(|(i, b)| MessageState {
            origin: n - 1 - i,
            entries: b.into_iter().map(Wide::to_f64).collect(),
        })
        .collect())
}

/// Marginal of `x_m` given its predecessors `preds = (x_{m-P}, .., x_{m-1})`,
/// `P = min(k, m)`, and the message `B_{m+1}` (`None` on the last row).
///
/// Besides the factors touching `x_m`, the couplings between predecessors and
/// the variables `m+1 ..` inside the message window are applied, so the
/// result is exact for every `k`.
pub(crate) fn conditional_marginal(
    f: &FactorTables,
    m: usize,
    preds: &[usize],
    next: Option<&[Wide]>,
) -> Vec<Wide> {
    let (d, k, n) = (f.d, f.k, f.n);
    let p_count = preds.len();
    debug_assert_eq!(p_count, k.min(m));
    let ahead = k.min(n - 1 - m);
    let one = [Wide::ONE];
    let b = next.unwrap_or(&one);
    debug_assert_eq!(b.len(), d.pow(ahead as u32));

    // weight of each window state against the fixed predecessors
    let mut digits = vec![0; ahead];
    let mut window = vec![Wide::ZERO; b.len()];
    for (s, slot) in window.iter_mut().enumerate() {
        if b[s].is_zero() {
            continue;
        }
        decode(s, d, &mut digits);
        let mut w = b[s];
        for (i, &xq) in digits.iter().enumerate() {
            let q = m + 1 + i;
            for j in (i + 2)..=k.min(q) {
                let p = q - j;
                if p + p_count < m {
                    continue;
                }
                if f.has_back(q, j) {
                    w *= f.back_w(q, j, preds[p + p_count - m], xq);
                }
            }
        }
        *slot = w;
    }

    (0..d)
        .map(|z| {
            let mut head = f.self_w(m, z);
            for j in 1..=p_count {
                if f.has_back(m, j) {
                    head *= f.back_w(m, j, preds[p_count - j], z);
                }
            }
            let mut acc = Wide::ZERO;
            for (s, &w) in window.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                decode(s, d, &mut digits);
                let mut v = w;
                for (i, &xq) in digits.iter().enumerate() {
                    if f.has_back(m + 1 + i, i + 1) {
                        v *= f.back_w(m + 1 + i, i + 1, z, xq);
                    }
                }
                acc += v;
            }
            head * acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    /// `Dense` materializes every operator or node and multiplies through the
    /// zeros; it exists for benchmarking.
    pub path: ContractionPath,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            path: ContractionPath::Sparse,
        }
    }
}

pub fn solve_matrix(chain: &ChainProblem<'_>, cfg: &SolverConfig) -> Result<Solution> {
    solve_matrix_with(chain, cfg, ChainOptions::default())
}

pub fn solve_matrix_with(
    chain: &ChainProblem<'_>,
    cfg: &SolverConfig,
    opts: ChainOptions,
) -> Result<Solution> {
    cfg.validate()?;
    let f = FactorTables::new(&LocalCosts::from_chain(chain), cfg.tau);
    let n = f.n;
    let messages = backward_messages(
        &f,
        1.min(n - 1),
        cfg.normalize,
        opts.path == ContractionPath::Dense,
    )?;
    // messages[n - 1 - m] holds B_m
    let message = |m: usize| (m < n && m >= 1).then(|| &messages[n - 1 - m][..]);
    let mut x = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    for m in 0..n {
        let preds = &x[m - f.k.min(m)..m];
        let entries = finish_wide(
            conditional_marginal(&f, m, preds, message(m + 1)),
            cfg.normalize,
            || format!("marginal of variable {m}"),
        )?;
        x.push(argmax(&entries)?);
        trace.push(MarginalVector {
            entries,
            scale_dropped: cfg.normalize,
        });
    }
    finish(chain, x, trace, cfg.tau, messages.len())
}

/// Banded stair network of the chain.
pub fn build_chain_stair(chain: &ChainProblem<'_>, cfg: &SolverConfig) -> StairNetwork {
    StairNetwork::with_band(chain.problem(), chain.k(), cfg.tau)
}

pub fn solve_tensor(chain: &ChainProblem<'_>, cfg: &SolverConfig) -> Result<Solution> {
    solve_tensor_with(chain, cfg, ChainOptions::default())
}

pub fn solve_tensor_with(
    chain: &ChainProblem<'_>,
    cfg: &SolverConfig,
    opts: ChainOptions,
) -> Result<Solution> {
    cfg.validate()?;
    let (n, d, k) = (chain.n(), chain.d(), chain.k());
    let needed = (d as u128).saturating_pow(k as u32);
    if needed > cfg.caps.chain_states {
        return Err(Error::Capacity {
            what: "chain boundary tensor",
            needed,
            cap: cfg.caps.chain_states,
        });
    }
    let mut x = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    let held;
    match opts.path {
        ContractionPath::Sparse => {
            let f = FactorTables::new(&LocalCosts::from_chain(chain), cfg.tau);
            let envs = environments(&f, 0, &[], cfg.normalize)?;
            held = envs.len();
            for i in 0..n {
                let entries =
                    finish_wide(row_marginal(&f, i, &x, &envs[i]), cfg.normalize, || {
                        format!("marginal of variable {i}")
                    })?;
                x.push(argmax(&entries)?);
                trace.push(MarginalVector {
                    entries,
                    scale_dropped: cfg.normalize,
                });
            }
        }
        ContractionPath::Dense => {
            let net = build_chain_stair(chain, cfg);
            held = 1;
            for i in 0..n {
                let mut m = net.contract_dense(i, &x, cfg.normalize)?;
                if cfg.normalize {
                    normalize_in_place(&mut m.entries, || format!("marginal of variable {i}"))?;
                }
                x.push(argmax(&m.entries)?);
                trace.push(m);
            }
        }
    }
    finish(chain, x, trace, cfg.tau, held)
}

fn finish(
    chain: &ChainProblem<'_>,
    x: Vec<usize>,
    marginals: Vec<MarginalVector>,
    tau: f64,
    held: usize,
) -> Result<Solution> {
    let assignment = Assignment::new(x);
    let cost = chain.problem().evaluate_cost(&assignment)?;
    Ok(Solution {
        assignment,
        cost,
        tau,
        marginals,
        tensors_held: held,
        waterfall: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force, direct_marginal};
    use crate::problem::{Problem, ProblemKind};

    fn cfg(tau: f64) -> SolverConfig {
        SolverConfig::with_tau(tau)
    }

    fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().copied().fold(0.0, f64::max);
        let mb = b.iter().copied().fold(0.0, f64::max);
        a.iter()
            .zip(b)
            .map(|(x, y)| (x / ma - y / mb).abs())
            .fold(0.0, f64::max)
    }

    fn frustrated() -> Problem {
        Problem::qubo(3)
            .quad(0, 1, -1.0)
            .quad(1, 2, 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn last_message_from_local_factors() {
        let p = Problem::qubo(2).quad(0, 1, 1.0).build().unwrap();
        let msgs = backward_pass_matrix(&p.chain_view(1).unwrap(), &cfg(1.0)).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].origin, 1);
        assert_eq!(msgs[0].entries, vec![1.0, 1.0]);
    }

    #[test]
    fn second_message_by_summation() {
        let p = Problem::qubo(3).quad(1, 2, 1.0).build().unwrap();
        let msgs = backward_pass_matrix(&p.chain_view(1).unwrap(), &cfg(1.0)).unwrap();
        let b1 = &msgs[1];
        assert_eq!(b1.origin, 1);
        assert!(max_rel_dev(&b1.entries, &[2.0, 1.0 + (-1.0f64).exp()]) < 1e-15);
    }

    #[test]
    fn transfer_operator_dense_form() {
        let p = Problem::qubo(3).quad(0, 1, 1.0).build().unwrap();
        let op = TransferOperator::new(&p.chain_view(1).unwrap(), 0, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(op.to_dense(), vec![vec![1.0, 1.0], vec![1.0, e]]);
    }

    #[test]
    fn transfer_nonzeros() {
        for d in 2..=5 {
            for k in 1..=3 {
                let p = Problem::random(ProblemKind::Qudo, k + 3, d, k, 1, true).unwrap();
                let chain = p.chain_view(k).unwrap();
                let op = TransferOperator::new(&chain, 1, 0.3).unwrap();
                assert_eq!(op.structural_nonzeros(), d.pow(k as u32 + 1));
                let nz = op
                    .to_dense()
                    .iter()
                    .flatten()
                    .filter(|v| **v != 0.0)
                    .count();
                assert_eq!(nz, d.pow(k as u32 + 1));
            }
        }
    }

    #[test]
    fn messages_are_positive() {
        let p = Problem::random(ProblemKind::Qudo, 30, 3, 2, 4, false).unwrap();
        for m in backward_pass_matrix(&p.chain_view(2).unwrap(), &cfg(2.0)).unwrap() {
            assert!(m.entries.iter().all(|v| *v > 0.0));
            assert_eq!(
                m.entries.len(),
                9usize.min(3usize.pow((30 - m.origin) as u32))
            );
        }
    }

    #[test]
    fn frustrated_chain_methods() {
        let p = frustrated();
        let chain = p.chain_view(1).unwrap();
        for s in [
            solve_matrix(&chain, &cfg(10.0)).unwrap(),
            solve_tensor(&chain, &cfg(10.0)).unwrap(),
        ] {
            assert_eq!(s.assignment.values(), &[1, 1, 0]);
            assert_eq!(s.cost, -1.0);
        }
    }

    #[test]
    fn decoupled_gives_zeros() {
        let p = Problem::qudo(6, 3).build().unwrap();
        let chain = p.chain_view(2).unwrap();
        assert_eq!(
            solve_matrix(&chain, &cfg(5.0)).unwrap().assignment.values(),
            &[0; 6]
        );
        assert_eq!(
            solve_tensor(&chain, &cfg(5.0)).unwrap().assignment.values(),
            &[0; 6]
        );
    }

    #[test]
    fn strong_linear_term() {
        let p = Problem::qudo(2, 3)
            .quad(0, 1, 1.0)
            .lin(0, -5.0)
            .build()
            .unwrap();
        let s = solve_matrix(&p.chain_view(1).unwrap(), &cfg(5.0)).unwrap();
        let oracle = brute_force(&p, 1000).unwrap();
        assert_eq!(s.assignment.values()[0], 2);
        assert_eq!(s.cost, oracle.best_cost);
    }

    #[test]
    fn chain_stair_shapes() {
        let p = Problem::random(ProblemKind::Qudo, 5, 2, 2, 1, false).unwrap();
        let k1 = build_chain_stair(&p.chain_view(4).unwrap(), &cfg(1.0));
        let full = StairNetwork::build(&p, &cfg(1.0)).unwrap();
        assert_eq!(k1.node_census(), full.node_census());

        let c1 = Problem::random(ProblemKind::Qudo, 5, 2, 1, 1, false).unwrap();
        let net = build_chain_stair(&c1.chain_view(1).unwrap(), &cfg(1.0));
        // one coupling per adjacent pair; the first row has no earlier neighbor
        assert_eq!(net.cross_nodes_per_row(), vec![0, 1, 1, 1, 1]);
        let net = build_chain_stair(&p.chain_view(2).unwrap(), &cfg(1.0));
        let mut by_lower = net.cross_nodes_per_row();
        assert_eq!(by_lower, vec![0, 1, 2, 2, 2]);
        // counted by the lower variable of each pair instead
        by_lower.reverse();
        assert_eq!(by_lower, vec![2, 2, 2, 1, 0]);
    }

    #[test]
    fn marginals_match_oracle_for_k_up_to_three() {
        for seed in 0..24 {
            let k = 1 + seed as usize % 3;
            let d = 2 + seed as usize % 2;
            let n = k + 2 + seed as usize % 4;
            let p = Problem::random(ProblemKind::Qudo, n, d, k, seed, seed % 2 == 0).unwrap();
            let chain = p.chain_view(k).unwrap();
            let s = solve_matrix(&chain, &cfg(1.3)).unwrap();
            let t = solve_tensor(&chain, &cfg(1.3)).unwrap();
            assert_eq!(s.assignment, t.assignment);
            for i in 0..n {
                let prefix = &s.assignment.values()[..i];
                let want = direct_marginal(&p, i, prefix, 1.3, 1 << 22).unwrap();
                assert!(
                    max_rel_dev(&s.marginals[i].entries, &want.entries) < 1e-10,
                    "seed {seed} var {i}"
                );
                assert!(
                    max_rel_dev(&t.marginals[i].entries, &want.entries) < 1e-10,
                    "seed {seed} var {i}"
                );
            }
        }
    }

    #[test]
    fn dense_modes_agree_with_sparse() {
        let p = Problem::random(ProblemKind::Qudo, 8, 3, 2, 17, false).unwrap();
        let chain = p.chain_view(2).unwrap();
        let dense = ChainOptions {
            path: ContractionPath::Dense,
        };
        let a = solve_matrix(&chain, &cfg(2.0)).unwrap();
        let b = solve_matrix_with(&chain, &cfg(2.0), dense).unwrap();
        let c = solve_tensor_with(&chain, &cfg(2.0), dense).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.assignment, c.assignment);
        for i in 0..8 {
            assert!(max_rel_dev(&a.marginals[i].entries, &c.marginals[i].entries) < 1e-12);
        }
    }

    #[test]
    fn qubo_and_embedding_agree() {
        for seed in 0..10 {
            let p = Problem::random(ProblemKind::Qubo, 12, 2, 2, seed, false).unwrap();
            let e = p.to_tqudo();
            let a = solve_matrix(&p.chain_view(2).unwrap(), &cfg(8.0)).unwrap();
            let b = solve_matrix(&e.chain_view(2).unwrap(), &cfg(8.0)).unwrap();
            assert_eq!(a.assignment, b.assignment);
        }
    }

    #[test]
    fn single_variable_chain() {
        let p = Problem::qudo(1, 3).quad(0, 0, -1.0).build().unwrap();
        let chain = p.chain_view(1).unwrap();
        assert_eq!(
            solve_matrix(&chain, &cfg(1.0)).unwrap().assignment.values(),
            &[2]
        );
        assert_eq!(
            solve_tensor(&chain, &cfg(1.0)).unwrap().assignment.values(),
            &[2]
        );
        assert!(backward_pass_matrix(&chain, &cfg(1.0)).unwrap().len() == 1);
    }
}
