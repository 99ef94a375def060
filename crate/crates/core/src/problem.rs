//! Problem classes (QUBO, QUDO, tensor-QUDO), cost evaluation, the k-neighbor
//! chain view, the JSON instance format and seeded random instances.
//!
//! Coefficients are stored sparsely in upper-triangular maps (`i <= j`).
//! Every kind is lowered to the same pair of cost tables: a `d`-entry self
//! table per variable and a `d x d` table per stored coupling, so every solver
//! downstream works with a single code path.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Qubo,
    Qudo,
    Tqudo,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Qubo => "qubo",
            ProblemKind::Qudo => "qudo",
            ProblemKind::Tqudo => "tqudo",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qubo" => Ok(ProblemKind::Qubo),
            "qudo" => Ok(ProblemKind::Qudo),
            "tqudo" => Ok(ProblemKind::Tqudo),
            other => Err(Error::Parse(format!("unknown problem kind `{other}`"))),
        }
    }
}

/// A coupling between variable `i` and a later variable `j`, lowered to a
/// dense `d x d` cost table indexed `a * d + b` for `x_i = a`, `x_j = b`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PairTerm {
    pub j: usize,
    pub table: Vec<f64>,
}

/// An immutable optimization instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    n: usize,
    d: usize,
    quad: BTreeMap<(usize, usize), f64>,
    lin: BTreeMap<usize, f64>,
    qhat: BTreeMap<(usize, usize, usize, usize), f64>,
    bandwidth: usize,
    // lowered cost tables
    self_cost: Vec<Vec<f64>>,
    pairs: Vec<Vec<PairTerm>>,
}

/// Collects coefficients and validates them into a [`Problem`].
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    kind: ProblemKind,
    n: usize,
    d: usize,
    quad: Vec<(usize, usize, f64)>,
    lin: Vec<(usize, f64)>,
    qhat: Vec<(usize, usize, usize, usize, f64)>,
}

impl ProblemBuilder {
    pub fn quad(mut self, i: usize, j: usize, value: f64) -> Self {
        self.quad.push((i, j, value));
        self
    }

    pub fn lin(mut self, i: usize, value: f64) -> Self {
        self.lin.push((i, value));
        self
    }

    pub fn qhat(mut self, i: usize, j: usize, a: usize, b: usize, value: f64) -> Self {
        self.qhat.push((i, j, a, b, value));
        self
    }

    pub fn build(self) -> Result<Problem> {
        Problem::from_entries(self.kind, self.n, self.d, self.quad, self.lin, self.qhat)
    }
}

#[inline]
pub(crate) fn qudo_pair_cost(q: f64, a: usize, b: usize) -> f64 {
    q * (a as f64) * (b as f64)
}

#[inline]
pub(crate) fn qudo_self_cost(q: f64, lin: f64, a: usize) -> f64 {
    q * (a as f64) * (a as f64) + lin * (a as f64)
}

impl Problem {
    pub fn builder(kind: ProblemKind, n: usize, d: usize) -> ProblemBuilder {
        ProblemBuilder {
            kind,
            n,
            d,
            quad: Vec::new(),
            lin: Vec::new(),
            qhat: Vec::new(),
        }
    }

    /// Shorthand for a QUBO (`d = 2`) builder.
    pub fn qubo(n: usize) -> ProblemBuilder {
        Self::builder(ProblemKind::Qubo, n, 2)
    }

    pub fn qudo(n: usize, d: usize) -> ProblemBuilder {
        Self::builder(ProblemKind::Qudo, n, d)
    }

    pub fn tqudo(n: usize, d: usize) -> ProblemBuilder {
        Self::builder(ProblemKind::Tqudo, n, d)
    }

    fn from_entries(
        kind: ProblemKind,
        n: usize,
        d: usize,
        quad: Vec<(usize, usize, f64)>,
        lin: Vec<(usize, f64)>,
        qhat: Vec<(usize, usize, usize, usize, f64)>,
    ) -> Result<Self> {
        check_dims(kind, n, d)?;
        match kind {
            ProblemKind::Qubo if !lin.is_empty() => {
                return Err(Error::InvalidDimensions(
                    "qubo absorbs the linear term into the diagonal; lin must be empty".into(),
                ))
            }
            ProblemKind::Qubo | ProblemKind::Qudo if !qhat.is_empty() => {
                return Err(Error::InvalidDimensions(format!(
                    "{kind} instances take no qhat entries"
                )))
            }
            ProblemKind::Tqudo if !quad.is_empty() || !lin.is_empty() => {
                return Err(Error::InvalidDimensions(
                    "tqudo instances take only qhat entries".into(),
                ))
            }
            _ => {}
        }

        let mut quad_map = BTreeMap::new();
        for (i, j, v) in quad {
            check_pair(n, i, j)?;
            check_finite(v, || format!("q[{i},{j}]"))?;
            if quad_map.insert((i, j), v).is_some() {
                return Err(Error::DuplicateEntry(format!("q ({i}, {j})")));
            }
        }
        let mut lin_map = BTreeMap::new();
        for (i, v) in lin {
            if i >= n {
                return Err(Error::IndexOutOfRange(format!("lin index {i} >= n = {n}")));
            }
            check_finite(v, || format!("lin[{i}]"))?;
            if lin_map.insert(i, v).is_some() {
                return Err(Error::DuplicateEntry(format!("lin ({i})")));
            }
        }
        let mut qhat_map = BTreeMap::new();
        for (i, j, a, b, v) in qhat {
            check_pair(n, i, j)?;
            if a >= d || b >= d {
                return Err(Error::IndexOutOfRange(format!(
                    "qhat value index ({a}, {b}) outside [0, {d})"
                )));
            }
            if i == j && a != b {
                return Err(Error::IndexOutOfRange(format!(
                    "qhat self entry ({i}, {i}, {a}, {b}) must have a == b"
                )));
            }
            check_finite(v, || format!("qhat[{i},{j},{a},{b}]"))?;
            if qhat_map.insert((i, j, a, b), v).is_some() {
                return Err(Error::DuplicateEntry(format!("qhat ({i}, {j}, {a}, {b})")));
            }
        }

        let bandwidth = quad_map
            .keys()
            .map(|&(i, j)| j - i)
            .chain(qhat_map.keys().map(|&(i, j, _, _)| j - i))
            .max()
            .unwrap_or(0);

        let mut p = Problem {
            kind,
            n,
            d,
            quad: quad_map,
            lin: lin_map,
            qhat: qhat_map,
            bandwidth,
            self_cost: Vec::new(),
            pairs: Vec::new(),
        };
        p.lower();
        Ok(p)
    }

    fn lower(&mut self) {
        let (n, d) = (self.n, self.d);
        let mut self_cost = vec![vec![0.0; d]; n];
        let mut pair_tables: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); n];
        match self.kind {
            ProblemKind::Qubo | ProblemKind::Qudo => {
                for (i, row) in self_cost.iter_mut().enumerate() {
                    let q = self.quad.get(&(i, i)).copied().unwrap_or(0.0);
                    let l = self.lin.get(&i).copied().unwrap_or(0.0);
                    for (a, c) in row.iter_mut().enumerate() {
                        *c = qudo_self_cost(q, l, a);
                    }
                }
                for (&(i, j), &q) in self.quad.range((0, 0)..) {
                    if i == j {
                        continue;
                    }
                    let mut table = vec![0.0; d * d];
                    for a in 0..d {
                        for b in 0..d {
                            table[a * d + b] = qudo_pair_cost(q, a, b);
                        }
                    }
                    pair_tables[i].insert(j, table);
                }
            }
            ProblemKind::Tqudo => {
                for (&(i, j, a, b), &v) in &self.qhat {
                    if i == j {
                        self_cost[i][a] = v;
                    } else {
                        pair_tables[i].entry(j).or_insert_with(|| vec![0.0; d * d])[a * d + b] = v;
                    }
                }
            }
        }
        self.self_cost = self_cost;
        self.pairs = pair_tables
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|(j, table)| PairTerm { j, table })
                    .collect()
            })
            .collect();
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Largest `j - i` over all stored couplings.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn quad(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quad
    }

    pub fn lin(&self) -> &BTreeMap<usize, f64> {
        &self.lin
    }

    pub fn qhat(&self) -> &BTreeMap<(usize, usize, usize, usize), f64> {
        &self.qhat
    }

    /// Cost contributed by `x_i = a` alone (diagonal plus linear term).
    #[inline]
    pub fn self_cost(&self, i: usize, a: usize) -> f64 {
        self.self_cost[i][a]
    }

    /// Cost contributed by the coupling of `x_i = a` and `x_j = b`, `i < j`.
    /// Zero when the pair is not stored.
    pub fn pair_cost(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.pair_table(i, j).map_or(0.0, |t| t[a * self.d + b])
    }

    pub(crate) fn pair_table(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.pairs[i]
            .binary_search_by_key(&j, |t| t.j)
            .ok()
            .map(|pos| self.pairs[i][pos].table.as_slice())
    }

    pub(crate) fn pairs_of(&self, i: usize) -> &[PairTerm] {
        &self.pairs[i]
    }

    /// Cost of a raw value slice. The caller guarantees validity.
    pub(crate) fn cost_of(&self, x: &[usize]) -> f64 {
        let d = self.d;
        let mut total = 0.0;
        for (i, &a) in x.iter().enumerate() {
            total += self.self_cost[i][a];
            for t in &self.pairs[i] {
                total += t.table[a * d + x[t.j]];
            }
        }
        total
    }

    /// Evaluates the objective at `x`.
    pub fn evaluate_cost(&self, x: &Assignment) -> Result<f64> {
        x.validate(self)?;
        Ok(self.cost_of(x.values()))
    }

    /// Restricts the instance to a chain with at most `k` neighbors.
    pub fn chain_view(&self, k: usize) -> Result<ChainProblem<'_>> {
        ChainProblem::new(self, k)
    }

    /// Re-expresses a QUBO/QUDO instance as the equivalent tensor-QUDO, with
    /// `qhat[i,j,a,b] = Q_ij a b` and `qhat[i,i,a,a] = Q_ii a^2 + D_i a`.
    /// Tensor-QUDO instances are returned unchanged.
    pub fn to_tqudo(&self) -> Problem {
        if self.kind == ProblemKind::Tqudo {
            return self.clone();
        }
        let d = self.d;
        let mut builder = Problem::tqudo(self.n, d);
        let mut diag_done = vec![false; self.n];
        for (&(i, j), &q) in &self.quad {
            if i == j {
                let l = self.lin.get(&i).copied().unwrap_or(0.0);
                for a in 0..d {
                    builder = builder.qhat(i, i, a, a, qudo_self_cost(q, l, a));
                }
                diag_done[i] = true;
            } else {
                for a in 0..d {
                    for b in 0..d {
                        builder = builder.qhat(i, j, a, b, qudo_pair_cost(q, a, b));
                    }
                }
            }
        }
        for (&i, &l) in &self.lin {
            if !diag_done[i] {
                for a in 0..d {
                    builder = builder.qhat(i, i, a, a, qudo_self_cost(0.0, l, a));
                }
            }
        }
        builder
            .build()
            .expect("embedding of a valid instance is valid")
    }

    /// Seeded random instance: couplings `(i, i + j)` for `j` in `0..=k` drawn
    /// uniformly from `[-1, 1]`; linear terms likewise when `lin_enabled`.
    pub fn random(
        kind: ProblemKind,
        n: usize,
        d: usize,
        k: usize,
        seed: u64,
        lin_enabled: bool,
    ) -> Result<Problem> {
        check_dims(kind, n, d)?;
        if k == 0 || k >= n {
            return Err(Error::InvalidDimensions(format!(
                "neighbor count k = {k} must satisfy 1 <= k < n = {n}"
            )));
        }
        if lin_enabled && kind != ProblemKind::Qudo {
            return Err(Error::InvalidDimensions(format!(
                "linear terms are only drawn for qudo, not {kind}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.gen_range(-1.0..=1.0);
        let mut builder = Problem::builder(kind, n, d);
        for i in 0..n {
            for j in i..(i + k + 1).min(n) {
                match kind {
                    ProblemKind::Qubo | ProblemKind::Qudo => builder = builder.quad(i, j, draw()),
                    ProblemKind::Tqudo if i == j => {
                        for a in 0..d {
                            builder = builder.qhat(i, i, a, a, draw());
                        }
                    }
                    ProblemKind::Tqudo => {
                        for a in 0..d {
                            for b in 0..d {
                                builder = builder.qhat(i, j, a, b, draw());
                            }
                        }
                    }
                }
            }
        }
        if lin_enabled {
            for i in 0..n {
                builder = builder.lin(i, draw());
            }
        }
        builder.build()
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            kind: self.kind,
            n: self.n,
            d: self.d,
            q: self.quad.iter().map(|(&(i, j), &v)| (i, j, v)).collect(),
            lin: (!self.lin.is_empty()).then(|| self.lin.iter().map(|(&i, &v)| (i, v)).collect()),
            qhat: (self.kind == ProblemKind::Tqudo).then(|| {
                self.qhat
                    .iter()
                    .map(|(&(i, j, a, b), &v)| (i, j, a, b, v))
                    .collect()
            }),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Problem> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Problem::from_entries(
            file.kind,
            file.n,
            file.d,
            file.q,
            file.lin.unwrap_or_default(),
            file.qhat.unwrap_or_default(),
        )
    }
}

fn check_dims(kind: ProblemKind, n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidDimensions("n must be at least 1".into()));
    }
    if d < 2 {
        return Err(Error::InvalidDimensions(format!(
            "d = {d} must be at least 2"
        )));
    }
    if kind == ProblemKind::Qubo && d != 2 {
        return Err(Error::InvalidDimensions(format!(
            "qubo requires d = 2, got {d}"
        )));
    }
    Ok(())
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i > j {
        return Err(Error::IndexOutOfRange(format!(
            "entry ({i}, {j}) violates i <= j"
        )));
    }
    if j >= n {
        return Err(Error::IndexOutOfRange(format!(
            "entry ({i}, {j}) has j >= n = {n}"
        )));
    }
    Ok(())
}

fn check_finite(v: f64, what: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parse(format!("non-finite coefficient {}", what())))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    kind: ProblemKind,
    n: usize,
    d: usize,
    #[serde(default)]
    q: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lin: Option<Vec<(usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qhat: Option<Vec<(usize, usize, usize, usize, f64)>>,
}

/// A candidate solution: one value in `[0, d)` per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(values: Vec<usize>) -> Self {
        Assignment(values)
    }

    pub fn zeros(n: usize) -> Self {
        Assignment(vec![0; n])
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn validate(&self, p: &Problem) -> Result<()> {
        if self.0.len() != p.n() {
            return Err(Error::InvalidAssignment(format!(
                "length {} does not match n = {}",
                self.0.len(),
                p.n()
            )));
        }
        if let Some((i, &v)) = self.0.iter().enumerate().find(|(_, &v)| v >= p.d()) {
            return Err(Error::InvalidAssignment(format!(
                "x[{i}] = {v} outside [0, {})",
                p.d()
            )));
        }
        Ok(())
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A problem seen as a linear chain where variable `m` couples only to
/// `m - k ..= m + k`.
///
/// Holds dense per-variable cost tables: `self_cost(m, z)` and
/// `back_cost(m, j, a, z)`, the coupling of `x_{m-j} = a` with `x_m = z`.
#[derive(Debug, Clone)]
pub struct ChainProblem<'a> {
    problem: &'a Problem,
    k: usize,
    // [(m * k + j - 1) * d * d + a * d + z]
    back: Vec<f64>,
    present: Vec<bool>,
}

impl<'a> ChainProblem<'a> {
    fn new(problem: &'a Problem, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDimensions(
                "chain neighbor count k must be >= 1".into(),
            ));
        }
        let offending = problem
            .quad
            .keys()
            .copied()
            .chain(problem.qhat.keys().map(|&(i, j, _, _)| (i, j)))
            .find(|&(i, j)| j - i > k);
        if let Some((i, j)) = offending {
            return Err(Error::NotAChain { i, j, k });
        }
        let (n, d) = (problem.n, problem.d);
        let mut back = vec![0.0; n * k * d * d];
        let mut present = vec![false; n * k];
        for i in 0..n {
            for t in &problem.pairs[i] {
                let (m, j) = (t.j, t.j - i);
                let base = (m * k + j - 1) * d * d;
                back[base..base + d * d].copy_from_slice(&t.table);
                present[m * k + j - 1] = true;
            }
        }
        Ok(ChainProblem {
            problem,
            k,
            back,
            present,
        })
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.problem.n
    }

    pub fn d(&self) -> usize {
        self.problem.d
    }

    #[inline]
    pub fn self_cost(&self, m: usize, z: usize) -> f64 {
        self.problem.self_cost[m][z]
    }

    /// Coupling cost between `x_{m-j} = a` and `x_m = z` for `1 <= j <= k`.
    #[inline]
    pub fn back_cost(&self, m: usize, j: usize, a: usize, z: usize) -> f64 {
        let d = self.problem.d;
        self.back[(m * self.k + j - 1) * d * d + a * d + z]
    }

    /// The `d x d` coupling table of `(m - j, m)`, if that coupling is stored.
    pub fn back_table(&self, m: usize, j: usize) -> Option<&[f64]> {
        if j == 0 || j > self.k || j > m || !self.present[m * self.k + j - 1] {
            return None;
        }
        let dd = self.problem.d * self.problem.d;
        let base = (m * self.k + j - 1) * dd;
        Some(&self.back[base..base + dd])
    }

    /// Number of neighbors variable `m` has before it in the chain.
    pub fn predecessors(&self, m: usize) -> usize {
        m.min(self.k)
    }
}
