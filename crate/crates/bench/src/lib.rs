//! Benchmark fixtures.

use qudo_core::{Problem, ProblemKind};

/// Seeded nearest-`k` QUDO instance with linear terms.
pub fn chain_instance(n: usize, d: usize, k: usize, seed: u64) -> Problem {
    Problem::random(ProblemKind::Qudo, n, d, k, seed, true).expect("valid fixture parameters")
}

/// Fully connected instance small enough for the dense network.
pub fn dense_instance(n: usize, d: usize, seed: u64) -> Problem {
    Problem::random(ProblemKind::Tqudo, n, d, n - 1, seed, false).expect("valid fixture parameters")
}
