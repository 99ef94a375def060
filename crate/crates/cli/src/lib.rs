//! Benchmark harness behind the `qudo` binary: instance generation, solving,
//! cross-method comparison, scaling sweeps and waterfall statistics, with
//! fixed-column CSV output.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use anyhow::Result;
use qudo_core::{
    relative_error, solve, solve_best_of_grid, Assignment, Method, Problem, ProblemKind,
    RelativeError, Solution, SolveOptions, SolverConfig, TauGrid,
};

/// Invalid command-line input detected after argument parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Clone, PartialEq)]
pub enum TauChoice {
    Fixed(f64),
    Grid(TauGrid),
}

impl Default for TauChoice {
    fn default() -> Self {
        TauChoice::Fixed(SolverConfig::default().tau)
    }
}

impl TauChoice {
    pub fn from_flags(tau: Option<f64>, grid: Option<TauGrid>) -> Result<Self> {
        match (tau, grid) {
            (Some(_), Some(_)) => usage("--tau and --tau-grid are mutually exclusive"),
            (_, Some(g)) => Ok(TauChoice::Grid(g)),
            (Some(t), None) => Ok(TauChoice::Fixed(t)),
            (None, None) => Ok(TauChoice::default()),
        }
    }
}

impl fmt::Display for TauChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauChoice::Fixed(t) => write!(f, "{t}"),
            TauChoice::Grid(g) => write!(f, "grid:{}:{}:{}", g.min, g.max, g.count),
        }
    }
}

/// Parses `MIN,MAX,COUNT`.
pub fn parse_tau_grid(s: &str) -> Result<TauGrid, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [min, max, count] = parts[..] else {
        return Err(format!("expected MIN,MAX,COUNT, got `{s}`"));
    };
    let min = min.parse::<f64>().map_err(|e| format!("grid min: {e}"))?;
    let max = max.parse::<f64>().map_err(|e| format!("grid max: {e}"))?;
    let count = count
        .parse::<usize>()
        .map_err(|e| format!("grid count: {e}"))?;
    TauGrid::new(min, max, count).map_err(|e| e.to_string())
}

/// Parses `A,B,C` or `START:END[:STEP]` (inclusive).
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let values: Vec<usize> = if s.contains(':') {
        let parts = s
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| UsageError(format!("range `{s}`: {e}")))?;
        let (start, end, step) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, c] => (a, b, c),
            _ => return usage(format!("range `{s}` must be START:END[:STEP]")),
        };
        if step == 0 {
            return usage(format!("range `{s}` has step 0"));
        }
        (start..=end).step_by(step).collect()
    } else {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| UsageError(format!("range `{s}`: {e}")))?
    };
    if values.is_empty() {
        return usage(format!("range `{s}` is empty"));
    }
    Ok(values)
}

/// One solved (instance, method, tau) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub instance: String,
    /// Position of the instance in its sweep; the primary sort key.
    pub order: usize,
    pub seed: Option<u64>,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub method: Method,
    pub tau: String,
    /// The tau that produced the reported assignment.
    pub winning_tau: f64,
    pub assignment: Assignment,
    /// Recomputed from `assignment` when the record is built.
    pub cost: f64,
    pub relative_error: Option<RelativeError>,
    pub wall_time: f64,
    pub peak_memory_proxy: usize,
    pub w_prob: Option<f64>,
}

pub const CSV_HEADER: &str = "instance,seed,n,d,k,method,tau,winning_tau,cost,relative_error,\
relative_error_absolute,wall_time_s,peak_memory_proxy,w_prob,assignment";

/// Columns that vary between identical runs.
pub const TIMING_COLUMNS: &[&str] = &["wall_time_s"];

impl BenchRecord {
    pub fn new(
        p: &Problem,
        instance: &str,
        order: usize,
        seed: Option<u64>,
        k: usize,
        method: Method,
        tau: &TauChoice,
        run: &Run,
    ) -> Result<Self> {
        let s = &run.solution;
        Ok(BenchRecord {
            instance: instance.to_string(),
            order,
            seed,
            n: p.n(),
            d: p.d(),
            k,
            method,
            tau: tau.to_string(),
            winning_tau: s.tau,
            cost: p.evaluate_cost(&s.assignment)?,
            assignment: s.assignment.clone(),
            relative_error: None,
            wall_time: run.wall_time,
            peak_memory_proxy: s.tensors_held,
            w_prob: s.waterfall.map(|w| w.w_prob),
        })
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let assignment: Vec<String> = self
            .assignment
            .values()
            .iter()
            .map(|v| v.to_string())
            .collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.n,
            self.d,
            self.k,
            self.method,
            self.tau,
            self.winning_tau,
            self.cost,
            opt(self.relative_error.map(|e| e.value)),
            self.relative_error
                .map(|e| e.absolute.to_string())
                .unwrap_or_default(),
            self.wall_time,
            self.peak_memory_proxy,
            opt(self.w_prob),
            assignment.join(" "),
        )
    }
}

/// Sorts by (instance order, method, tau) and renders with a header.
pub fn records_csv(records: &mut [BenchRecord]) -> String {
    records.sort_by(|a, b| {
        (a.order, a.method)
            .cmp(&(b.order, b.method))
            .then(a.tau.cmp(&b.tau))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records.iter() {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Drops the timing columns from CSV text.
pub fn strip_timing(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let keep: Vec<bool> = header
        .split(',')
        .map(|c| !TIMING_COLUMNS.contains(&c))
        .collect();
    let filter = |line: &str| {
        line.split(',')
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(c, _)| c)
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = filter(header);
    for line in lines {
        out.push('\n');
        out.push_str(&filter(line));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Run {
    pub solution: Solution,
    /// Seconds spent inside the solver calls.
    pub wall_time: f64,
    pub grid_faults: usize,
}

/// Solves once at a fixed tau or keeps the best point of a grid.
pub fn run_method(
    p: &Problem,
    method: Method,
    base: &SolverConfig,
    tau: &TauChoice,
    opts: &SolveOptions,
) -> Result<Run> {
    let start = Instant::now();
    let run = match tau {
        TauChoice::Fixed(t) => {
            let solution = solve(p, method, &base.at_tau(*t), opts)?;
            Run {
                solution,
                wall_time: 0.0,
                grid_faults: 0,
            }
        }
        TauChoice::Grid(g) => {
            let mut cfg = base.clone();
            cfg.tau_grid = Some(*g);
            let out = solve_best_of_grid(p, method, &cfg, opts)?;
            Run {
                solution: out.best,
                wall_time: 0.0,
                grid_faults: out.faults,
            }
        }
    };
    Ok(Run {
        wall_time: start.elapsed().as_secs_f64(),
        ..run
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSpec {
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub lin: bool,
}

/// Instance file text; identical for identical specs.
pub fn cmd_generate(spec: &GenerateSpec) -> Result<String> {
    if spec.n == 0 {
        return usage("n must be at least 1");
    }
    if spec.kind == ProblemKind::Qubo && spec.d != 2 {
        return usage(format!("qubo instances are binary, got d = {}", spec.d));
    }
    if spec.lin && spec.kind != ProblemKind::Qudo {
        return usage("linear terms are only generated for qudo");
    }
    if spec.n == 1 {
        let mut b = Problem::builder(spec.kind, 1, spec.d);
        b = match spec.kind {
            ProblemKind::Tqudo => b,
            _ => b.quad(0, 0, 0.0),
        };
        return Ok(b.build()?.to_json());
    }
    Ok(Problem::random(spec.kind, spec.n, spec.d, spec.k, spec.seed, spec.lin)?.to_json())
}

pub fn solve_report(p: &Problem, method: Method, tau: &TauChoice, run: &Run) -> Result<String> {
    let s = &run.solution;
    let mut out = String::new();
    writeln!(out, "method: {method}")?;
    writeln!(out, "n: {}", p.n())?;
    writeln!(out, "d: {}", p.d())?;
    writeln!(out, "assignment: {}", s.assignment)?;
    writeln!(out, "cost: {}", p.evaluate_cost(&s.assignment)?)?;
    writeln!(out, "tau: {tau}")?;
    if let TauChoice::Grid(_) = tau {
        writeln!(out, "winning_tau: {}", s.tau)?;
        writeln!(out, "grid_faults: {}", run.grid_faults)?;
    }
    writeln!(out, "tensors_held: {}", s.tensors_held)?;
    if let Some(w) = s.waterfall {
        writeln!(out, "uniform_events: {}", w.uniform_events)?;
        writeln!(out, "w_prob: {}", w.w_prob)?;
        writeln!(out, "peak_tables_held: {}", w.peak_tables_held)?;
        writeln!(out, "restarts: {}", w.restarts)?;
    }
    writeln!(out, "wall_time_s: {}", run.wall_time)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Brute,
    /// Lowest cost among the compared methods.
    BestOf,
}

impl FromStr for Reference {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "brute" => Ok(Reference::Brute),
            "best-of" => Ok(Reference::BestOf),
            _ => Err(format!(
                "unknown reference `{s}`, expected brute or best-of"
            )),
        }
    }
}

/// One record per method with the relative error against `reference`.
pub fn cmd_compare(
    p: &Problem,
    instance: &str,
    methods: &[Method],
    base: &SolverConfig,
    tau: &TauChoice,
    reference: Reference,
    opts: &SolveOptions,
) -> Result<Vec<BenchRecord>> {
    if methods.is_empty() {
        return usage("no methods to compare");
    }
    let k = qudo_core::chain_width(p, opts.k);
    let mut records = Vec::with_capacity(methods.len());
    for &m in methods {
        let run = run_method(p, m, base, tau, opts)?;
        records.push(BenchRecord::new(p, instance, 0, None, k, m, tau, &run)?);
    }
    let c_ref = match reference {
        Reference::Brute => {
            let r = qudo_core::brute_force(p, base.caps.brute_states)?;
            p.evaluate_cost(&r.best)?
        }
        Reference::BestOf => records.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min),
    };
    for r in &mut records {
        r.relative_error = Some(relative_error(r.cost, c_ref));
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    N,
    D,
    K,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "n" => Ok(Axis::N),
            "d" => Ok(Axis::D),
            "k" => Ok(Axis::K),
            _ => Err(format!("unknown axis `{s}`, expected n, d or k")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSpec {
    pub axis: Axis,
    pub values: Vec<usize>,
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub tau: TauChoice,
    pub seed: u64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Median wall time per (axis value, method) over seeded instances.
pub fn cmd_bench_scaling(
    spec: &ScalingSpec,
    base: &SolverConfig,
    opts: &SolveOptions,
) -> Result<Vec<BenchRecord>> {
    if spec.values.is_empty() {
        return usage("empty sweep range");
    }
    if spec.repeats == 0 {
        return usage("repeats must be at least 1");
    }
    if spec.methods.is_empty() {
        return usage("no methods to benchmark");
    }
    let mut records = Vec::new();
    for (order, &v) in spec.values.iter().enumerate() {
        let (n, d, k) = match spec.axis {
            Axis::N => (v, spec.d, spec.k),
            Axis::D => (spec.n, v, spec.k),
            Axis::K => (spec.n, spec.d, v),
        };
        let seed = spec.seed + order as u64;
        let p = Problem::random(spec.kind, n, d, k, seed, false)?;
        let opts = SolveOptions {
            k: Some(k),
            ..*opts
        };
        let instance = format!("{}{v}", axis_name(spec.axis));
        for &m in &spec.methods {
            // untimed warm-up
            let mut last = run_method(&p, m, base, &spec.tau, &opts)?;
            let mut times = Vec::with_capacity(spec.repeats);
            for _ in 0..spec.repeats {
                last = run_method(&p, m, base, &spec.tau, &opts)?;
                times.push(last.wall_time);
            }
            last.wall_time = median(times);
            records.push(BenchRecord::new(
                &p,
                &instance,
                order,
                Some(seed),
                k,
                m,
                &spec.tau,
                &last,
            )?);
        }
    }
    Ok(records)
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::N => "n",
        Axis::D => "d",
        Axis::K => "k",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfallProbSpec {
    pub d_values: Vec<usize>,
    pub n: usize,
    pub instances: usize,
    pub tau: TauChoice,
    pub seed: u64,
    /// Replace the random instances by ones with no couplings.
    pub decoupled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfallProbRow {
    pub d: usize,
    pub n: usize,
    pub instances: usize,
    pub mean_w_prob: f64,
    pub std_error: f64,
    pub mean_cost: f64,
}

pub const WATERFALL_HEADER: &str = "d,n,instances,mean_w_prob,std_error,mean_cost";

impl WaterfallProbRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.d, self.n, self.instances, self.mean_w_prob, self.std_error, self.mean_cost
        )
    }
}

pub fn waterfall_csv(rows: &[WaterfallProbRow]) -> String {
    let mut out = String::from(WATERFALL_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn waterfall_instance(d: usize, n: usize, seed: u64, decoupled: bool) -> Result<Problem> {
    if decoupled {
        let mut b = Problem::qudo(n, d);
        for i in 0..n {
            b = b.quad(i, i, if i % 2 == 0 { 1.0 } else { -1.0 });
        }
        return Ok(b.build()?);
    }
    Ok(Problem::random(ProblemKind::Qudo, n, d, 1, seed, false)?)
}

/// Mean waterfall probability per `d` over seeded nearest-neighbor instances,
/// keeping the best solution of each instance. Instances run on all cores;
/// results are gathered by index.
pub fn cmd_waterfall_prob(
    spec: &WaterfallProbSpec,
    base: &SolverConfig,
    opts: &SolveOptions,
) -> Result<Vec<WaterfallProbRow>> {
    if spec.instances == 0 {
        return usage("instances must be at least 1");
    }
    if spec.d_values.is_empty() {
        return usage("empty d range");
    }
    if spec.n < 2 {
        return usage("n must be at least 2");
    }
    let opts = SolveOptions {
        k: Some(1),
        ..*opts
    };
    let mut rows = Vec::with_capacity(spec.d_values.len());
    for &d in &spec.d_values {
        let cell = |i: usize| -> Result<(f64, f64)> {
            let seed = spec.seed + i as u64;
            let p = waterfall_instance(d, spec.n, seed, spec.decoupled)?;
            let run = run_method(&p, Method::Waterfall, base, &spec.tau, &opts)?;
            let w = run.solution.waterfall.expect("waterfall stats");
            Ok((w.w_prob, p.evaluate_cost(&run.solution.assignment)?))
        };
        let results = parallel_map(spec.instances, cell)?;
        let count = results.len() as f64;
        let mean = results.iter().map(|r| r.0).sum::<f64>() / count;
        let var = if results.len() > 1 {
            results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (count - 1.0)
        } else {
            0.0
        };
        rows.push(WaterfallProbRow {
            d,
            n: spec.n,
            instances: spec.instances,
            mean_w_prob: mean,
            std_error: (var / count).sqrt(),
            mean_cost: results.iter().map(|r| r.1).sum::<f64>() / count,
        });
    }
    Ok(rows)
}

fn parallel_map<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(count);
    let chunk = count.div_ceil(workers);
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || (w * chunk..((w + 1) * chunk).min(count)).map(f).collect())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
