//! Acceptance suite. Runs every criterion in sequence and prints one
//! PASS/FAIL line each; exits nonzero if any fails.

use std::collections::HashMap;
use std::process::Command;
use std::time::{Duration, Instant};

use qudo_cli::{
    cmd_bench_scaling, cmd_waterfall_prob, Axis, ScalingSpec, TauChoice, WaterfallProbSpec,
};
use qudo_core::{
    brute_force, contract_marginal, direct_marginal, solve, solve_best_of_grid, solve_matrix,
    solve_tensor, solve_waterfall, Method, NodeKind, Problem, ProblemKind, SolveOptions,
    SolverConfig, StairNetwork, TauGrid, TransferOperator,
};

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().copied().fold(0.0, f64::max);
    let mb = b.iter().copied().fold(0.0, f64::max);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / ma - y / mb).abs())
        .fold(0.0, f64::max)
}

fn kind_for(i: u64, d: usize) -> ProblemKind {
    match i % 3 {
        0 if d == 2 => ProblemKind::Qubo,
        1 => ProblemKind::Tqudo,
        _ => ProblemKind::Qudo,
    }
}

fn random(kind: ProblemKind, n: usize, d: usize, k: usize, seed: u64) -> Problem {
    Problem::random(
        kind,
        n,
        d,
        k,
        seed,
        kind == ProblemKind::Qudo && seed.is_multiple_of(2),
    )
    .unwrap()
}

fn marginal_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..200u64 {
        let n = 2 + (seed % 9) as usize;
        let d = 2 + ((seed / 9) % 2) as usize;
        let tau = [0.5, 1.0, 2.0][(seed % 3) as usize];
        let p = random(kind_for(seed / 3, d), n, d, n - 1, seed);
        let cfg = SolverConfig::with_tau(tau);
        for i in 0..n {
            let fixed: Vec<usize> = (0..i).map(|j| (seed as usize * 31 + j * 7) % d).collect();
            let got = contract_marginal(&p, &cfg, i, &fixed).unwrap();
            let want = direct_marginal(&p, i, &fixed, tau, 1 << 24).unwrap();
            worst = worst.max(max_rel_dev(&got.entries, &want.entries));
            checked += 1;
        }
    }
    outcome(
        worst <= 1e-10,
        format!("{checked} marginals, max relative deviation {worst:.2e}"),
    )
}

fn cross_method_equality() -> Outcome {
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    let mut solves = 0;
    for seed in 0..200u64 {
        let n = 5 + ((seed * 37) % 196) as usize;
        let d = 2 + (seed % 3) as usize;
        let k = 1 + ((seed / 3) % 3) as usize;
        let p = random(kind_for(seed / 9, d), n, d, k, seed);
        let chain = p.chain_view(k).unwrap();
        for tau in [1.0, 10.0, 50.0] {
            let cfg = SolverConfig::with_tau(tau);
            let (a, b, c) = match (
                solve_matrix(&chain, &cfg),
                solve_tensor(&chain, &cfg),
                solve_waterfall(&chain, &cfg),
            ) {
                (Ok(a), Ok(b), Ok(c)) => (a, b, c),
                _ => {
                    mismatches += 1;
                    continue;
                }
            };
            solves += 1;
            if a.assignment != b.assignment || a.assignment != c.assignment {
                mismatches += 1;
            }
            for (x, y) in a.marginals.iter().zip(&b.marginals) {
                worst = worst.max(max_rel_dev(&x.entries, &y.entries));
            }
        }
    }
    outcome(
        mismatches == 0 && worst <= 1e-9,
        format!("{solves} instance/tau cells, {mismatches} mismatches, max marginal deviation {worst:.2e}"),
    )
}

fn optimality_rate() -> Outcome {
    let mut hits = 0;
    let mut below = 0;
    let cfg = SolverConfig {
        tau_grid: Some(TauGrid::default()),
        ..SolverConfig::default()
    };
    for seed in 0..200u64 {
        let n = 4 + (seed % 9) as usize;
        let d = 2 + ((seed / 9) % 2) as usize;
        let k = 1 + (seed % 3) as usize;
        let p = random(kind_for(seed / 2, d), n, d, k, seed);
        let best = brute_force(&p, 1 << 24).unwrap().best_cost;
        let opts = SolveOptions {
            k: Some(k),
            ..Default::default()
        };
        let got = solve_best_of_grid(&p, Method::Matrix, &cfg, &opts)
            .unwrap()
            .best
            .cost;
        if got == best {
            hits += 1;
        }
        if got < best {
            below += 1;
        }
    }
    let rate = hits as f64 / 200.0;
    outcome(
        rate >= 0.95 && below == 0,
        format!(
            "optimum reached in {hits}/200 ({:.1}%), {below} below optimum",
            100.0 * rate
        ),
    )
}

fn linear_scaling() -> Outcome {
    let spec = ScalingSpec {
        axis: Axis::N,
        values: vec![1000, 2000],
        kind: ProblemKind::Qudo,
        n: 0,
        d: 2,
        k: 2,
        methods: vec![Method::Matrix],
        repeats: 5,
        tau: TauChoice::Fixed(50.0),
        seed: 0,
    };
    let recs =
        cmd_bench_scaling(&spec, &SolverConfig::default(), &SolveOptions::default()).unwrap();
    let ratio = recs[1].wall_time / recs[0].wall_time;
    outcome(
        (1.5..=3.0).contains(&ratio),
        format!(
            "median {:.3} ms at n=1000, {:.3} ms at n=2000, ratio {ratio:.2}",
            1e3 * recs[0].wall_time,
            1e3 * recs[1].wall_time
        ),
    )
}

fn sparsity_structure() -> Outcome {
    let mut failures = Vec::new();
    for d in 2..=5usize {
        for k in 1..=3usize {
            let n = k + 3;
            let p = Problem::random(ProblemKind::Qudo, n, d, k, (d * 10 + k) as u64, true).unwrap();
            let chain = p.chain_view(k).unwrap();
            for m in 0..n - k {
                let op = TransferOperator::new(&chain, m, 0.5).unwrap();
                let counted = op
                    .to_dense()
                    .iter()
                    .flatten()
                    .filter(|v| **v != 0.0)
                    .count();
                if op.structural_nonzeros() != d.pow(k as u32 + 1) || counted != d.pow(k as u32 + 1)
                {
                    failures.push(format!("operator d={d} k={k} row {m}: {counted}"));
                }
            }
            let net = StairNetwork::with_band(&p, k, 0.5);
            for placed in net.nodes() {
                let node = &placed.node;
                let want = match node.kind() {
                    NodeKind::SelfInteraction
                    | NodeKind::Copy
                    | NodeKind::Plus
                    | NodeKind::PlusTrace => d,
                    NodeKind::CrossInteraction | NodeKind::CrossLastRow => d * d,
                };
                if node.nonzeros() != want || node.structural_nonzeros() != want {
                    failures.push(format!(
                        "{:?} d={d} k={k}: {}",
                        node.kind(),
                        node.nonzeros()
                    ));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "operators d^(k+1); nodes d, d^2, d^2 for all d <= 5, k <= 3".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn waterfall_trend() -> Outcome {
    let spec = WaterfallProbSpec {
        d_values: vec![2, 3, 4, 5, 6],
        n: 200,
        instances: 50,
        tau: TauChoice::Grid(TauGrid::default()),
        seed: 0,
        decoupled: false,
    };
    let cfg = SolverConfig::default();
    let rows = cmd_waterfall_prob(&spec, &cfg, &SolveOptions::default()).unwrap();
    let trend = rows.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].mean_w_prob <= w[0].mean_w_prob + se
    });
    let decoupled = cmd_waterfall_prob(
        &WaterfallProbSpec {
            decoupled: true,
            instances: 5,
            ..spec.clone()
        },
        &cfg,
        &SolveOptions::default(),
    )
    .unwrap();
    let ones = decoupled.iter().all(|r| r.mean_w_prob == 1.0);
    let means: Vec<String> = rows
        .iter()
        .map(|r| format!("d={}:{:.3}+-{:.3}", r.d, r.mean_w_prob, r.std_error))
        .collect();
    outcome(
        trend && ones,
        format!("{}; decoupled all 1: {ones}", means.join(" ")),
    )
}

fn waterfall_memory() -> Outcome {
    let mut failures = Vec::new();
    let mut peaks = Vec::new();
    for (seed, n, k) in [
        (1u64, 100usize, 1usize),
        (2, 60, 1),
        (3, 80, 2),
        (4, 41, 2),
        (5, 120, 3),
    ] {
        let src = Problem::random(ProblemKind::Qudo, n, 3, k, seed, true).unwrap();
        let cut = n / 2;
        let mut b = Problem::qudo(n, 3);
        for (&(i, j), &v) in src.quad() {
            if !(i < cut && j >= cut) {
                b = b.quad(i, j, v);
            }
        }
        for (&i, &v) in src.lin() {
            b = b.lin(i, v);
        }
        let p = b.build().unwrap();
        let chain = p.chain_view(k).unwrap();
        let cfg = SolverConfig::with_tau(50.0);
        let w = solve_waterfall(&chain, &cfg).unwrap().waterfall.unwrap();
        let held = solve_matrix(&chain, &cfg).unwrap().tensors_held;
        peaks.push(format!("n={n} k={k}: {} vs {held}", w.peak_tables_held));
        if w.peak_tables_held > cut + k || held != n - 1 {
            failures.push(n);
        }
    }
    outcome(
        failures.is_empty(),
        format!("peak tables vs retained messages: {}", peaks.join(", ")),
    )
}

fn tqudo_correctness() -> Outcome {
    let mut hits = 0;
    let mut below = 0;
    let cfg = SolverConfig {
        tau_grid: Some(TauGrid::default()),
        ..SolverConfig::default()
    };
    for seed in 0..100u64 {
        let n = 3 + (seed % 8) as usize;
        let d = 2 + ((seed / 8) % 2) as usize;
        let k = 1 + (seed % 2) as usize;
        let p = Problem::random(ProblemKind::Tqudo, n, d, k, seed, false).unwrap();
        let best = brute_force(&p, 1 << 24).unwrap().best_cost;
        let opts = SolveOptions {
            k: Some(k),
            ..Default::default()
        };
        let got = solve_best_of_grid(&p, Method::Matrix, &cfg, &opts)
            .unwrap()
            .best
            .cost;
        hits += usize::from(got == best);
        below += usize::from(got < best);
    }
    let mut differ = 0;
    let mut compared = 0;
    for seed in 0..60u64 {
        let (kind, d) = if seed % 2 == 0 {
            (ProblemKind::Qubo, 2)
        } else {
            (ProblemKind::Qudo, 3)
        };
        let k = 1 + (seed % 3) as usize;
        let n = 6 + (seed % 20) as usize;
        let p = random(kind, n, d, k, seed);
        let e = p.to_tqudo();
        let opts = SolveOptions {
            k: Some(k),
            ..Default::default()
        };
        for m in [
            Method::Matrix,
            Method::Tensor,
            Method::Waterfall,
            Method::Dense,
        ] {
            if m == Method::Dense && d.pow(n as u32) > 1 << 15 {
                continue;
            }
            for tau in [1.0, 10.0, 50.0] {
                let cfg = SolverConfig::with_tau(tau);
                let a = solve(&p, m, &cfg, &opts).unwrap();
                let b = solve(&e, m, &cfg, &opts).unwrap();
                compared += 1;
                differ += usize::from(a.assignment != b.assignment);
            }
        }
    }
    outcome(
        hits >= 95 && below == 0 && differ == 0,
        format!(
            "optimum in {hits}/100, {below} below; embedding differs in {differ}/{compared} solves"
        ),
    )
}

fn qudo(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qudo"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn without_timing(text: &str) -> String {
    if text.starts_with("instance,") {
        qudo_cli::strip_timing(text)
    } else {
        text.lines()
            .filter(|l| !l.starts_with("wall_time_s:"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut failures = Vec::new();
    let mut runs: HashMap<&str, Vec<String>> = HashMap::new();
    for round in 0..2 {
        let inst = path(&format!("inst{round}.json"));
        let (ok, _, err) = qudo(&[
            "generate", "--kind", "qudo", "--n", "40", "--d", "3", "--k", "2", "--seed", "7",
            "--lin", "--output", &inst,
        ]);
        if !ok {
            failures.push(format!("generate: {err}"));
            continue;
        }
        runs.entry("generate")
            .or_default()
            .push(std::fs::read_to_string(&inst).unwrap());
        let small = path(&format!("small{round}.json"));
        qudo(&[
            "generate", "--kind", "tqudo", "--n", "9", "--d", "3", "--k", "2", "--seed", "3",
            "--output", &small,
        ]);
        let cases: Vec<(&str, Vec<&str>)> = vec![
            (
                "solve-matrix",
                vec![
                    "solve", "--input", &inst, "--method", "matrix", "--tau", "50",
                ],
            ),
            (
                "solve-tensor",
                vec![
                    "solve", "--input", &inst, "--method", "tensor", "--tau", "10",
                ],
            ),
            (
                "solve-waterfall",
                vec![
                    "solve",
                    "--input",
                    &inst,
                    "--method",
                    "waterfall",
                    "--tau-grid",
                    "0.1,500,20",
                    "--restart-factor",
                    "2",
                ],
            ),
            (
                "solve-dense",
                vec![
                    "solve", "--input", &small, "--method", "dense", "--tau", "5",
                ],
            ),
            (
                "compare",
                vec![
                    "compare",
                    "--input",
                    &small,
                    "--method",
                    "dense,matrix,tensor,waterfall,brute",
                    "--tau-grid",
                    "0.1,500,10",
                ],
            ),
            (
                "bench-scaling",
                vec![
                    "bench-scaling",
                    "--axis",
                    "k",
                    "--range",
                    "1:3",
                    "--n",
                    "60",
                    "--repeats",
                    "2",
                ],
            ),
            (
                "waterfall-prob",
                vec![
                    "waterfall-prob",
                    "--d-range",
                    "2:4",
                    "--n",
                    "50",
                    "--instances",
                    "6",
                    "--tau-grid",
                    "0.1,500,10",
                ],
            ),
        ];
        for (name, args) in cases {
            let (ok, out, err) = qudo(&args);
            if !ok {
                failures.push(format!("{name}: {err}"));
            }
            // the input path differs between rounds
            runs.entry(name).or_default().push(
                without_timing(&out)
                    .replace(&format!("inst{round}"), "inst")
                    .replace(&format!("small{round}"), "small"),
            );
        }
    }
    for (name, outs) in &runs {
        if outs.len() != 2 || outs[0] != outs[1] || outs[0].is_empty() {
            failures.push(format!("{name} differs"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} commands byte-identical across two runs (timing removed)",
                runs.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "1 marginal-oracle equivalence",
            marginal_oracle,
            Some(Duration::from_secs(120)),
        ),
        (
            "2 cross-method equality",
            cross_method_equality,
            Some(Duration::from_secs(300)),
        ),
        ("3 optimality rate", optimality_rate, None),
        (
            "4 linear-in-n scaling",
            linear_scaling,
            Some(Duration::from_secs(180)),
        ),
        ("5 sparsity structure", sparsity_structure, None),
        (
            "6 waterfall probability trend",
            waterfall_trend,
            Some(Duration::from_secs(600)),
        ),
        ("7 waterfall memory", waterfall_memory, None),
        ("8 tensor-QUDO correctness", tqudo_correctness, None),
        ("9 determinism", determinism, None),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut o = run();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > b {
                o.pass = false;
                o.detail
                    .push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
