//! Row-by-row contraction of the stair network and the dense-coupling solver.
//!
//! Absorbing the rows `r..n` bottom to top leaves a [`RowTensor`] whose legs
//! are the column lines still open below row `r - 1`: one `d`-sized index per
//! earlier variable in the band. Each row is absorbed sparsely. The copy and
//! interaction nodes force their horizontal indices equal, so a row reduces
//! to a loop over the row value `z` and the open column values.

use crate::error::Result;
use crate::factors::{decode, encode, FactorTables, LocalCosts};
use crate::problem::{Assignment, Problem};
use crate::solve::Solution;
use crate::stair::{check_dense_cap, StairNetwork};
use crate::tn::{argmax, normalize_in_place, MarginalVector, SolverConfig};
use crate::wide::{finish_wide, normalize_wide, Wide};

/// Boundary tensor over the consecutive variables `first .. first + vars`,
/// lowest variable in the lowest digit.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RowTensor {
    pub first: usize,
    pub vars: usize,
    pub data: Vec<Wide>,
    pub scale_dropped: bool,
}

impl RowTensor {
    /// The empty environment below the last row.
    pub(crate) fn closed(n: usize) -> Self {
        RowTensor {
            first: n,
            vars: 0,
            data: vec![Wide::ONE],
            scale_dropped: false,
        }
    }
}

/// Absorbs row `r` into `below` (the environment of rows `r+1..`).
/// Variables `0..fixed.len()` are sliced at their known values.
pub(crate) fn absorb_row(
    f: &FactorTables,
    r: usize,
    below: &RowTensor,
    fixed: &[usize],
    normalize: bool,
) -> Result<RowTensor> {
    let (d, k) = (f.d, f.k);
    debug_assert!(r >= fixed.len());
    let lo = fixed.len().max(r.saturating_sub(k));
    let vars = r - lo;
    let size = d.pow(vars as u32);
    let (shift, z_stride) = if below.vars == 0 {
        (0, 0)
    } else {
        debug_assert!(below.first >= lo && below.first + below.vars == r + 1);
        (
            d.pow((below.first - lo) as u32),
            d.pow((r - below.first) as u32),
        )
    };
    let back: Vec<usize> = (1..=k.min(r)).filter(|&j| f.has_back(r, j)).collect();

    let mut digits = vec![0; vars];
    let mut data = vec![Wide::ZERO; size];
    for (t, slot) in data.iter_mut().enumerate() {
        decode(t, d, &mut digits);
        let base = if below.vars == 0 { 0 } else { t / shift };
        let mut acc = Wide::ZERO;
        for z in 0..d {
            let e = below.data[base + z * z_stride];
            if e.is_zero() {
                continue;
            }
            let mut w = f.self_w(r, z);
            for &j in &back {
                let v = r - j;
                let a = if v < lo { fixed[v] } else { digits[v - lo] };
                w *= f.back_w(r, j, a, z);
            }
            acc += w * e;
        }
        *slot = acc;
    }
    if normalize {
        normalize_wide(&mut data, || format!("absorbing row {r}"))?;
    }
    Ok(RowTensor {
        first: lo,
        vars,
        data,
        scale_dropped: normalize || below.scale_dropped,
    })
}

/// Marginal of `x_i` given `prefix` (values of at least `x_0 .. x_{i-1}`)
/// and the environment `env` of rows `i+1..`.
pub(crate) fn row_marginal(
    f: &FactorTables,
    i: usize,
    prefix: &[usize],
    env: &RowTensor,
) -> Vec<Wide> {
    let (d, k) = (f.d, f.k);
    let base = if env.vars == 0 {
        0
    } else {
        encode(&prefix[env.first..i], d)
    };
    let z_stride = if env.vars == 0 {
        0
    } else {
        d.pow((i - env.first) as u32)
    };
    (0..d)
        .map(|z| {
            let mut w = f.self_w(i, z);
            for j in 1..=k.min(i) {
                if f.has_back(i, j) {
                    w *= f.back_w(i, j, prefix[i - j], z);
                }
            }
            w * env.data[base + z * z_stride]
        })
        .collect()
}

/// Environments `E_{r}` for `r = lo+1 ..= n`, built bottom-up with `fixed`
/// sliced in. Index `r - lo - 1` holds the environment of rows `r..`.
pub(crate) fn environments(
    f: &FactorTables,
    lo: usize,
    fixed: &[usize],
    normalize: bool,
) -> Result<Vec<RowTensor>> {
    let n = f.n;
    let mut envs = vec![RowTensor::closed(n)];
    for r in ((lo + 1)..n).rev() {
        let next = absorb_row(f, r, envs.last().unwrap(), fixed, normalize)?;
        envs.push(next);
    }
    envs.reverse();
    Ok(envs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionPath {
    /// Index-selection loops over the structural nonzeros.
    Sparse,
    /// Materialized nodes, summing over every index tuple.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseOptions {
    /// Keep the row tensors of the first contraction and slice them for every
    /// later variable instead of re-contracting.
    pub reuse: bool,
    pub path: ContractionPath,
}

impl Default for DenseOptions {
    fn default() -> Self {
        DenseOptions {
            reuse: true,
            path: ContractionPath::Sparse,
        }
    }
}

pub fn build_stair(p: &Problem, cfg: &SolverConfig) -> Result<StairNetwork> {
    StairNetwork::build(p, cfg)
}

fn dense_tables(p: &Problem, tau: f64) -> FactorTables {
    FactorTables::new(&LocalCosts::from_problem(p, p.n().saturating_sub(1)), tau)
}

/// Marginal of `x_i` given `fixed = (x_0 .. x_{i-1})`, contracting the rows
/// below `i` with the fixed values sliced in. Normalized when `cfg.normalize`.
pub fn contract_marginal(
    p: &Problem,
    cfg: &SolverConfig,
    i: usize,
    fixed: &[usize],
) -> Result<MarginalVector> {
    cfg.validate()?;
    check_dense_cap(p, cfg)?;
    check_prefix(p, i, fixed)?;
    let f = dense_tables(p, cfg.tau);
    let envs = environments(&f, i, fixed, cfg.normalize)?;
    marginal_from(&f, i, fixed, &envs[0], cfg.normalize)
}

fn check_prefix(p: &Problem, i: usize, fixed: &[usize]) -> Result<()> {
    use crate::error::Error;
    if i >= p.n() || fixed.len() != i || fixed.iter().any(|&v| v >= p.d()) {
        return Err(Error::InvalidAssignment(format!(
            "marginal of variable {i} needs {i} fixed values in [0, {}), got {fixed:?}",
            p.d()
        )));
    }
    Ok(())
}

fn marginal_from(
    f: &FactorTables,
    i: usize,
    prefix: &[usize],
    env: &RowTensor,
    normalize: bool,
) -> Result<MarginalVector> {
    let entries = finish_wide(row_marginal(f, i, prefix, env), normalize, || {
        format!("marginal of variable {i}")
    })?;
    Ok(MarginalVector {
        entries,
        scale_dropped: normalize || env.scale_dropped,
    })
}

pub fn solve_dense(p: &Problem, cfg: &SolverConfig) -> Result<Solution> {
    solve_dense_with(p, cfg, DenseOptions::default())
}

pub fn solve_dense_with(p: &Problem, cfg: &SolverConfig, opts: DenseOptions) -> Result<Solution> {
    cfg.validate()?;
    check_dense_cap(p, cfg)?;
    let n = p.n();
    let mut x = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    let mut held = 0;

    match opts.path {
        ContractionPath::Sparse => {
            let f = dense_tables(p, cfg.tau);
            let stored = if opts.reuse {
                let envs = environments(&f, 0, &[], cfg.normalize)?;
                held = envs.len();
                Some(envs)
            } else {
                None
            };
            for i in 0..n {
                let m = match &stored {
                    Some(envs) => marginal_from(&f, i, &x, &envs[i], cfg.normalize)?,
                    None => {
                        let envs = environments(&f, i, &x, cfg.normalize)?;
                        held = held.max(envs.len());
                        marginal_from(&f, i, &x, &envs[0], cfg.normalize)?
                    }
                };
                x.push(argmax(&m.entries)?);
                trace.push(m);
            }
        }
        ContractionPath::Dense => {
            let net = StairNetwork::build(p, cfg)?;
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
    let assignment = Assignment::new(x);
    let cost = p.evaluate_cost(&assignment)?;
    Ok(Solution {
        assignment,
        cost,
        tau: cfg.tau,
        marginals: trace,
        tensors_held: held,
        waterfall: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force, direct_marginal};
    use crate::problem::ProblemKind;

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

    #[test]
    fn two_variable_marginals() {
        let p = Problem::qubo(2).quad(0, 1, 1.0).build().unwrap();
        let m = contract_marginal(&p, &cfg(1.0), 0, &[]).unwrap();
        let expected = [1.0, (1.0 + (-1.0f64).exp()) / 2.0];
        assert!(max_rel_dev(&m.entries, &expected) < 1e-15);
        assert_eq!(argmax(&m.entries).unwrap(), 0);

        let m = contract_marginal(&p, &cfg(1.0), 1, &[1]).unwrap();
        assert!(max_rel_dev(&m.entries, &[1.0, (-1.0f64).exp()]) < 1e-15);

        let q = Problem::qubo(2).quad(0, 1, -1.0).build().unwrap();
        let m = contract_marginal(&q, &cfg(1.0), 0, &[]).unwrap();
        assert!(max_rel_dev(&m.entries, &[2.0, 1.0 + 1.0f64.exp()]) < 1e-15);
        assert_eq!(argmax(&m.entries).unwrap(), 1);
    }

    #[test]
    fn last_variable_sees_completion_costs() {
        let p = Problem::random(ProblemKind::Qudo, 4, 3, 3, 2, true).unwrap();
        let fixed = [2, 0, 1];
        let m = contract_marginal(&p, &cfg(1.0), 3, &fixed).unwrap();
        let want: Vec<f64> = (0..3)
            .map(|z| (-p.evaluate_cost(&vec![2, 0, 1, z].into()).unwrap()).exp())
            .collect();
        assert!(max_rel_dev(&m.entries, &want) < 1e-14);
    }

    #[test]
    fn zero_instance_constant_marginals() {
        let p = Problem::qudo(4, 3).build().unwrap();
        let m = contract_marginal(&p, &cfg(2.0), 0, &[]).unwrap();
        assert_eq!(m.entries, vec![1.0; 3]);
        let s = solve_dense(&p, &cfg(2.0)).unwrap();
        assert_eq!(s.assignment.values(), &[0, 0, 0, 0]);
        assert_eq!(s.cost, 0.0);
    }

    #[test]
    fn triangle_instances() {
        for (q, want, cost) in [(1.0, [0, 0, 0], 0.0), (-1.0, [1, 1, 1], -3.0)] {
            let p = Problem::qubo(3)
                .quad(0, 1, q)
                .quad(0, 2, q)
                .quad(1, 2, q)
                .build()
                .unwrap();
            let s = solve_dense(&p, &cfg(10.0)).unwrap();
            assert_eq!(s.assignment.values(), &want);
            assert_eq!(s.cost, cost);
        }
    }

    #[test]
    fn matches_oracle_marginals() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 6);
            let d = 2 + (seed as usize % 2);
            let p = Problem::random(ProblemKind::Qudo, n, d, n - 1, seed, seed % 3 == 0).unwrap();
            let s = solve_dense(&p, &cfg(1.0)).unwrap();
            for i in 0..n {
                let want =
                    direct_marginal(&p, i, &s.assignment.values()[..i], 1.0, 1 << 22).unwrap();
                assert!(max_rel_dev(&s.marginals[i].entries, &want.entries) <= 1e-10);
            }
        }
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        for seed in 0..6 {
            let p = Problem::random(ProblemKind::Qudo, 5, 2 + seed as usize % 2, 4, seed, true)
                .unwrap();
            let sparse = solve_dense(&p, &cfg(1.5)).unwrap();
            let dense = solve_dense_with(
                &p,
                &cfg(1.5),
                DenseOptions {
                    reuse: false,
                    path: ContractionPath::Dense,
                },
            )
            .unwrap();
            assert_eq!(sparse.assignment, dense.assignment);
            for (a, b) in sparse.marginals.iter().zip(&dense.marginals) {
                assert!(max_rel_dev(&a.entries, &b.entries) <= 1e-12);
            }
        }
    }

    #[test]
    fn reuse_does_not_change_assignments() {
        for seed in 0..20 {
            let p = Problem::random(ProblemKind::Qudo, 7, 3, 6, seed, false).unwrap();
            let with = solve_dense(&p, &cfg(3.0)).unwrap();
            let without = solve_dense_with(
                &p,
                &cfg(3.0),
                DenseOptions {
                    reuse: false,
                    path: ContractionPath::Sparse,
                },
            )
            .unwrap();
            assert_eq!(with.assignment, without.assignment, "seed {seed}");
        }
    }

    #[test]
    fn large_tau_reaches_unique_optimum() {
        for seed in 0..15 {
            let p = Problem::random(ProblemKind::Qudo, 8, 2, 7, seed, false).unwrap();
            let oracle = brute_force(&p, 1 << 20).unwrap();
            if oracle.optima_count > 1 {
                continue;
            }
            let s = solve_dense(&p, &cfg(50.0)).unwrap();
            assert!(s.cost >= oracle.best_cost - 1e-12);
            assert!((s.cost - oracle.best_cost).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn capacity_error_for_large_dense() {
        let p = Problem::qudo(30, 2).build().unwrap();
        assert!(matches!(
            solve_dense(&p, &cfg(1.0)),
            Err(crate::error::Error::Capacity { .. })
        ));
        let p = Problem::qudo(11, 3).build().unwrap();
        assert!(solve_dense(&p, &cfg(1.0)).is_err());
        let p = Problem::qudo(10, 3).build().unwrap();
        assert!(solve_dense(&p, &cfg(1.0)).is_ok());
        let p = Problem::qudo(16, 2).build().unwrap();
        assert!(solve_dense(&p, &cfg(1.0)).is_ok());
    }
}
