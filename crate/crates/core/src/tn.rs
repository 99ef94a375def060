//! Tensor definitions of the stair network, imaginary-time factors, value
//! extraction and overflow-safe normalization shared by every solver.

use crate::error::{Error, FaultKind, Result};
use crate::problem::Problem;

/// Rule for equal marginal entries. Only lowest-index is defined; it exists
/// as a type so the choice shows up in configurations and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

/// Geometric grid of imaginary-time values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl TauGrid {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let grid = TauGrid { min, max, count };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau grid bounds must be positive and finite, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.min >= self.max {
            return Err(Error::InvalidConfig(format!(
                "tau grid needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidConfig(
                "tau grid needs at least one point".into(),
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let ratio = self.max / self.min;
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| match i {
                0 => self.min,
                i if i + 1 == self.count => self.max,
                i => self.min * ratio.powf(i as f64 / last),
            })
            .collect()
    }
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid {
            min: 0.1,
            max: 500.0,
            count: 100,
        }
    }
}

/// Size limits for the exponential-cost paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    /// Largest boundary tensor (`d^(n-1)` entries) the dense solver accepts.
    pub dense_states: u128,
    /// Largest `d^n` the brute-force oracle enumerates.
    pub brute_states: u128,
    /// Largest `d^k` boundary tensor for the chain tensor method.
    pub chain_states: u128,
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity {
            dense_states: 1 << 15,
            brute_states: 2_000_000,
            chain_states: 1 << 20,
        }
    }
}

impl Capacity {
    pub const DENSE_ENV: &'static str = "QUDO_DENSE_CAP";
    pub const BRUTE_ENV: &'static str = "QUDO_BRUTE_CAP";

    /// Defaults overridden by `QUDO_DENSE_CAP` / `QUDO_BRUTE_CAP` when set.
    pub fn from_env() -> Result<Self> {
        let mut caps = Capacity::default();
        if let Some(v) = read_cap(Self::DENSE_ENV)? {
            caps.dense_states = v;
        }
        if let Some(v) = read_cap(Self::BRUTE_ENV)? {
            caps.brute_states = v;
        }
        Ok(caps)
    }
}

fn read_cap(var: &str) -> Result<Option<u128>> {
    match std::env::var(var) {
        Ok(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| *v >= 1.0 && v.is_finite())
            .map(|v| Some(v as u128))
            .ok_or_else(|| Error::InvalidConfig(format!("{var}=`{s}` is not a positive count"))),
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub tie_break: TieBreak,
    /// Divide every intermediate tensor by its maximum entry.
    pub normalize: bool,
    pub tau_grid: Option<TauGrid>,
    pub caps: Capacity,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 50.0,
            tie_break: TieBreak::LowestIndex,
            normalize: true,
            tau_grid: None,
            caps: Capacity::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_tau(tau: f64) -> Self {
        SolverConfig {
            tau,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        if let Some(grid) = &self.tau_grid {
            grid.validate()?;
        }
        Ok(())
    }

    /// The same configuration at a different imaginary time.
    pub fn at_tau(&self, tau: f64) -> Self {
        SolverConfig {
            tau,
            ..self.clone()
        }
    }
}

/// `e^{-tau (Q_ll a^2 + D_l a)}`, or `e^{-tau Qhat_{l,l,a,a}}` for tensor-QUDO.
pub fn factor_self(p: &Problem, l: usize, a: usize, tau: f64) -> Result<f64> {
    check_var(p, l)?;
    check_value(p, a)?;
    Ok((-tau * p.self_cost(l, a)).exp())
}

/// `e^{-tau Q_lm a b}` (or `e^{-tau Qhat_{l,m,a,b}}`) for `x_l = a`, `x_m = b`.
/// The pair may be given in either order; missing couplings give 1.
pub fn factor_cross(p: &Problem, l: usize, m: usize, a: usize, b: usize, tau: f64) -> Result<f64> {
    check_var(p, l)?;
    check_var(p, m)?;
    check_value(p, a)?;
    check_value(p, b)?;
    let cost = match l.cmp(&m) {
        std::cmp::Ordering::Less => p.pair_cost(l, m, a, b),
        std::cmp::Ordering::Greater => p.pair_cost(m, l, b, a),
        std::cmp::Ordering::Equal => {
            return Err(Error::IndexOutOfRange(format!(
                "cross factor needs two distinct variables, got ({l}, {m})"
            )))
        }
    };
    Ok((-tau * cost).exp())
}

fn check_var(p: &Problem, i: usize) -> Result<()> {
    if i < p.n() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange(format!(
            "variable {i} >= n = {}",
            p.n()
        )))
    }
}

fn check_value(p: &Problem, a: usize) -> Result<()> {
    if a < p.d() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange(format!(
            "value {a} >= d = {}",
            p.d()
        )))
    }
}

/// One node of the stair network.
///
/// Index order follows the naming convention of the network: `i`/`mu` are the
/// horizontal input/output of the row variable, `j`/`nu` the vertical
/// input/output of the column variable. Weight tables are indexed
/// `row_value * d + column_value`.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorNode {
    /// Initial superposition `+_i = 1`.
    Plus { d: usize },
    /// Partial-trace superposition `P+_i = 1`.
    PlusTrace { d: usize },
    /// `S^l_{i mu}`, nonzero only on `mu = i`.
    SelfInteraction { l: usize, weights: Vec<f64> },
    /// `S^{lm}_{i mu j nu}`, nonzero only on `mu = i`, `nu = j`.
    CrossInteraction {
        l: usize,
        m: usize,
        d: usize,
        weights: Vec<f64>,
    },
    /// `S^{lm}_{i mu j}`, the terminating variant with no vertical output.
    CrossLastRow {
        l: usize,
        m: usize,
        d: usize,
        weights: Vec<f64>,
    },
    /// `C_{i mu nu}`, nonzero only on `mu = nu = i`.
    Copy { d: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Plus,
    PlusTrace,
    SelfInteraction,
    CrossInteraction,
    CrossLastRow,
    Copy,
}

impl TensorNode {
    pub fn self_interaction(p: &Problem, l: usize, tau: f64) -> TensorNode {
        TensorNode::SelfInteraction {
            l,
            weights: (0..p.d())
                .map(|a| (-tau * p.self_cost(l, a)).exp())
                .collect(),
        }
    }

    /// Cross node in the row of `l` carrying column variable `m`.
    pub fn cross(p: &Problem, l: usize, m: usize, tau: f64, terminating: bool) -> TensorNode {
        let d = p.d();
        let mut weights = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let cost = if l < m {
                    p.pair_cost(l, m, i, j)
                } else {
                    p.pair_cost(m, l, j, i)
                };
                weights[i * d + j] = (-tau * cost).exp();
            }
        }
        if terminating {
            TensorNode::CrossLastRow { l, m, d, weights }
        } else {
            TensorNode::CrossInteraction { l, m, d, weights }
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            TensorNode::Plus { .. } => NodeKind::Plus,
            TensorNode::PlusTrace { .. } => NodeKind::PlusTrace,
            TensorNode::SelfInteraction { .. } => NodeKind::SelfInteraction,
            TensorNode::CrossInteraction { .. } => NodeKind::CrossInteraction,
            TensorNode::CrossLastRow { .. } => NodeKind::CrossLastRow,
            TensorNode::Copy { .. } => NodeKind::Copy,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            TensorNode::Plus { d }
            | TensorNode::PlusTrace { d }
            | TensorNode::Copy { d }
            | TensorNode::CrossInteraction { d, .. }
            | TensorNode::CrossLastRow { d, .. } => *d,
            TensorNode::SelfInteraction { weights, .. } => weights.len(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            TensorNode::Plus { .. } | TensorNode::PlusTrace { .. } => 1,
            TensorNode::SelfInteraction { .. } => 2,
            TensorNode::CrossLastRow { .. } | TensorNode::Copy { .. } => 3,
            TensorNode::CrossInteraction { .. } => 4,
        }
    }

    /// Whether `idx` lies on the value-transmission pattern of the node.
    pub fn is_structural(&self, idx: &[usize]) -> bool {
        debug_assert_eq!(idx.len(), self.rank());
        match self {
            TensorNode::Plus { .. } | TensorNode::PlusTrace { .. } => true,
            TensorNode::SelfInteraction { .. } | TensorNode::CrossLastRow { .. } => {
                idx[1] == idx[0]
            }
            TensorNode::CrossInteraction { .. } => idx[1] == idx[0] && idx[3] == idx[2],
            TensorNode::Copy { .. } => idx[1] == idx[0] && idx[2] == idx[0],
        }
    }

    /// Element value at a full index tuple.
    pub fn element(&self, idx: &[usize]) -> f64 {
        if !self.is_structural(idx) {
            return 0.0;
        }
        match self {
            TensorNode::Plus { .. } | TensorNode::PlusTrace { .. } | TensorNode::Copy { .. } => 1.0,
            TensorNode::SelfInteraction { weights, .. } => weights[idx[0]],
            TensorNode::CrossInteraction { d, weights, .. }
            | TensorNode::CrossLastRow { d, weights, .. } => weights[idx[0] * d + idx[2]],
        }
    }

    /// Every index tuple of the node, last index fastest.
    pub fn index_tuples(&self) -> impl Iterator<Item = Vec<usize>> {
        let (d, rank) = (self.d(), self.rank());
        let total = d.pow(rank as u32);
        (0..total).map(move |mut flat| {
            let mut idx = vec![0; rank];
            for slot in idx.iter_mut().rev() {
                *slot = flat % d;
                flat /= d;
            }
            idx
        })
    }

    /// Count of structurally nonzero elements, by enumeration.
    pub fn structural_nonzeros(&self) -> usize {
        self.index_tuples()
            .filter(|idx| self.is_structural(idx))
            .count()
    }

    /// Count of elements that are actually nonzero, by enumeration.
    pub fn nonzeros(&self) -> usize {
        self.index_tuples()
            .filter(|idx| self.element(idx) != 0.0)
            .count()
    }
}

/// The `d`-entry marginal of one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVector {
    pub entries: Vec<f64>,
    pub scale_dropped: bool,
}

impl MarginalVector {
    pub fn new(entries: Vec<f64>) -> Self {
        MarginalVector {
            entries,
            scale_dropped: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        MarginalVector {
            entries: self.entries.iter().map(|v| v * c).collect(),
            scale_dropped: self.scale_dropped,
        }
    }
}

/// Divides `v` by its largest entry and returns that entry.
pub(crate) fn normalize_in_place(v: &mut [f64], step: impl FnOnce() -> String) -> Result<f64> {
    let mut max = 0.0f64;
    for &x in v.iter() {
        if x.is_nan() {
            return Err(Error::NumericFault {
                kind: FaultKind::NaN,
                step: step(),
            });
        }
        max = max.max(x);
    }
    if max.is_infinite() {
        return Err(Error::NumericFault {
            kind: FaultKind::Overflow,
            step: step(),
        });
    }
    if max <= 0.0 {
        return Err(Error::NumericFault {
            kind: FaultKind::Underflow,
            step: step(),
        });
    }
    v.iter_mut().for_each(|x| *x /= max);
    Ok(max)
}

/// Scale-free copy of `v` with maximum entry 1.
pub fn normalize(v: &MarginalVector) -> Result<MarginalVector> {
    let mut entries = v.entries.clone();
    normalize_in_place(&mut entries, || "marginal normalization".into())?;
    Ok(MarginalVector {
        entries,
        scale_dropped: true,
    })
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x.is_nan() {
            return Err(Error::NumericFault {
                kind: FaultKind::NaN,
                step: format!("argmax entry {i}"),
            });
        }
        if x > v[best] {
            best = i;
        }
    }
    Ok(best)
}

/// The value whose marginal entry is largest.
pub fn argmax_extract(v: &MarginalVector) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::InvalidDimensions("empty marginal vector".into()));
    }
    argmax(&v.entries)
}

/// Heaviside of the marginal contracted with a `(-1, +1)` bit selector:
/// value `a` contributes `+v_a` when bit `j` of `a` is set, `-v_a` otherwise.
/// `H(0) = 0`.
pub fn bit_extract(v: &MarginalVector, j: u32) -> Result<u8> {
    let d = v.len();
    if d < 2 {
        return Err(Error::InvalidDimensions(format!(
            "bit extraction needs d >= 2, got {d}"
        )));
    }
    if j >= bit_width(d) {
        return Err(Error::IndexOutOfRange(format!(
            "bit {j} beyond the {} bits of d = {d}",
            bit_width(d)
        )));
    }
    let mut omega = 0.0;
    for (a, &x) in v.entries.iter().enumerate() {
        if x.is_nan() {
            return Err(Error::NumericFault {
                kind: FaultKind::NaN,
                step: format!("bit extraction entry {a}"),
            });
        }
        omega += if (a >> j) & 1 == 1 { x } else { -x };
    }
    Ok(u8::from(omega > 0.0))
}

/// `ceil(log2 d)`, the number of bits needed for values in `[0, d)`.
pub fn bit_width(d: usize) -> u32 {
    usize::BITS - (d.max(1) - 1).leading_zeros()
}

/// Reassembles a value from per-bit Heaviside extraction.
pub fn bits_extract(v: &MarginalVector) -> Result<usize> {
    let mut value = 0;
    for j in 0..bit_width(v.len()) {
        value |= (bit_extract(v, j)? as usize) << j;
    }
    Ok(value)
}
