//! Waterfall variant of the matrix method.
//!
//! During the backward sweep each row stores the best value of its variable
//! for every combination of predecessor values. Once a run of tables is
//! constant, the variables from that row up to the last unresolved one are
//! fixed by lookup and their tables are dropped.

use crate::chain_solver::{conditional_marginal, MessageState, TransferOperator};
use crate::error::{Error, Result};
use crate::factors::{decode, encode, FactorTables, LocalCosts};
use crate::problem::{Assignment, ChainProblem};
use crate::solve::Solution;
use crate::tn::{argmax, SolverConfig};
use crate::wide::{finish_wide, normalize_wide, Wide};

/// `Y_m`: best value of `x_m` for each predecessor combination
/// `t = sum_j d^j x_{m-P+j}`, `P = min(k, m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaterfallTable {
    pub row: usize,
    pub entries: Vec<usize>,
}

impl WaterfallTable {
    pub fn is_uniform(&self) -> bool {
        self.entries.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaterfallStats {
    pub uniform_events: usize,
    pub w_prob: f64,
    pub peak_tables_held: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterfallOptions {
    /// `tau` is multiplied by this factor for the prefix left after every
    /// cascade; 1 keeps a single sweep.
    pub restart_factor: f64,
}

impl Default for WaterfallOptions {
    fn default() -> Self {
        WaterfallOptions {
            restart_factor: 1.0,
        }
    }
}

impl WaterfallOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.restart_factor.is_finite() && self.restart_factor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "restart factor must be positive and finite, got {}",
                self.restart_factor
            )));
        }
        Ok(())
    }

    fn restarts(&self) -> bool {
        self.restart_factor != 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cascade {
    /// Values of the checked rows, lowest row first.
    Resolved(Vec<usize>),
    Open,
}

fn table_from(
    f: &FactorTables,
    m: usize,
    next: Option<&[Wide]>,
    normalize: bool,
) -> Result<WaterfallTable> {
    let p_count = f.k.min(m);
    let count = f.d.pow(p_count as u32);
    let mut preds = vec![0; p_count];
    let mut entries = Vec::with_capacity(count);
    for t in 0..count {
        decode(t, f.d, &mut preds);
        let v = finish_wide(conditional_marginal(f, m, &preds, next), normalize, || {
            format!("candidate {t} of row {m}")
        })?;
        entries.push(argmax(&v)?);
    }
    Ok(WaterfallTable { row: m, entries })
}

/// `Y_m` given `B_{m+1}` (`None` on the last row).
pub fn candidate_table(
    chain: &ChainProblem<'_>,
    m: usize,
    next: Option<&MessageState>,
    cfg: &SolverConfig,
) -> Result<WaterfallTable> {
    cfg.validate()?;
    if m >= chain.n() {
        return Err(Error::IndexOutOfRange(format!(
            "row {m} >= n = {}",
            chain.n()
        )));
    }
    let f = FactorTables::new(&LocalCosts::from_chain(chain), cfg.tau);
    let expected = chain.k().min(chain.n() - 1 - m);
    let next: Option<Vec<Wide>> =
        next.map(|b| b.entries.iter().map(|&v| Wide::from_f64(v)).collect());
    if next.as_ref().map_or(0, |b| b.len())
        != if expected == 0 {
            0
        } else {
            chain.d().pow(expected as u32)
        }
    {
        return Err(Error::InvalidDimensions(format!(
            "message does not match row {m}"
        )));
    }
    table_from(&f, m, next.as_deref(), cfg.normalize)
}

/// `tables` are consecutive rows starting at `m`. Checks `Y_m` for
/// constancy, then each following table only over the components whose
/// entries for rows `m ..` equal the values found so far.
pub fn check_cascade(tables: &[&WaterfallTable], k: usize, d: usize) -> Cascade {
    let Some(first) = tables.first() else {
        return Cascade::Open;
    };
    let m = first.row;
    let mut known = Vec::with_capacity(tables.len().min(k));
    for (i, y) in tables.iter().take(k.max(1)).enumerate() {
        debug_assert_eq!(y.row, m + i);
        let p_count = k.min(y.row);
        let free = d.pow((p_count - i) as u32);
        let offset = encode(&known, d) * free;
        let block = &y.entries[offset..offset + free];
        if block.iter().any(|&v| v != block[0]) {
            return Cascade::Open;
        }
        known.push(block[0]);
    }
    Cascade::Resolved(known)
}

pub fn solve_waterfall(chain: &ChainProblem<'_>, cfg: &SolverConfig) -> Result<Solution> {
    solve_waterfall_with(chain, cfg, WaterfallOptions::default())
}

pub fn solve_waterfall_with(
    chain: &ChainProblem<'_>,
    cfg: &SolverConfig,
    opts: WaterfallOptions,
) -> Result<Solution> {
    cfg.validate()?;
    opts.validate()?;
    let (n, d, k) = (chain.n(), chain.d(), chain.k());
    let base = LocalCosts::from_chain(chain);
    let mut tau = cfg.tau;
    let mut f = FactorTables::new(&base, tau);
    let mut x = vec![0; n];
    let mut tables: Vec<Option<WaterfallTable>> = vec![None; n];
    let mut stats = WaterfallStats::default();
    let mut held = 0;
    let mut boundary = n;
    let mut next: Option<Vec<Wide>> = None;

    for m in (0..n).rev() {
        tables[m] = Some(table_from(&f, m, next.as_deref(), cfg.normalize)?);
        held += 1;
        stats.peak_tables_held = stats.peak_tables_held.max(held);

        let top = (m + k).min(boundary);
        let window: Vec<&WaterfallTable> = tables[m..top].iter().flatten().collect();
        if let Cascade::Resolved(values) = check_cascade(&window, k, d) {
            x[m..top].copy_from_slice(&values);
            for r in top..boundary {
                let y = tables[r].as_ref().expect("table of unresolved row");
                x[r] = y.entries[encode(&x[r - k.min(r)..r], d)];
            }
            tables[m..boundary].iter_mut().for_each(|t| *t = None);
            held = 0;
            stats.uniform_events += 1;
            boundary = m;
            if opts.restarts() && m > 0 {
                tau *= opts.restart_factor;
                f = FactorTables::new(&base.restrict_prefix(m, &x[m..]), tau);
                next = None;
                stats.restarts += 1;
                continue;
            }
        }

        if m > 0 {
            let op = TransferOperator::from_tables(&f, m);
            let one = [Wide::ONE];
            let mut b = op.apply_wide(next.as_deref().unwrap_or(&one));
            if cfg.normalize {
                normalize_wide(&mut b, || format!("backward message of row {m}"))?;
            }
            next = Some(b);
        }
    }

    for m in 0..boundary {
        let y = tables[m].as_ref().expect("table of unresolved row");
        x[m] = y.entries[encode(&x[m - k.min(m)..m], d)];
    }

    stats.w_prob = stats.uniform_events as f64 / n as f64;
    let assignment = Assignment::new(x);
    let cost = chain.problem().evaluate_cost(&assignment)?;
    Ok(Solution {
        assignment,
        cost,
        tau: cfg.tau,
        marginals: Vec::new(),
        tensors_held: stats.peak_tables_held,
        waterfall: Some(stats),
    })
}
