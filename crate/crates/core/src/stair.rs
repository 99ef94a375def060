//! Layout of the stair tensor network and a fully dense reference contraction.
//!
//! Row `r` carries `x_r` horizontally. Its nodes, left to right, are the
//! superposition, the self-interaction `S^r`, a copy node that sends `x_r`
//! down its column (absent on the last row), then one cross node `S^{r,m}`
//! for each earlier variable `m` in the band, nearest first. A column line
//! ends at the last row that needs it, where the 3-index cross variant sits.
//! The row closes with a partial-trace superposition, or stays open for the
//! variable being determined.
//!
//! The dense engine here materializes every node as a full array and sums
//! over all index tuples, zeros included. It is exponential in `n` and exists
//! as an independent reference for the sparse solvers.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::tn::{normalize_in_place, MarginalVector, NodeKind, SolverConfig, TensorNode};

/// A bond of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leg {
    /// Horizontal segment `pos` of row `row`.
    H { row: usize, pos: usize },
    /// Column line of variable `col` just below row `row`.
    V { col: usize, row: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedNode {
    pub node: TensorNode,
    /// One leg per node index, in the node's index order.
    pub legs: Vec<Leg>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StairNetwork {
    n: usize,
    d: usize,
    band: usize,
    tau: f64,
    /// Nodes of each row, left to right, without the closing trace node.
    rows: Vec<Vec<PlacedNode>>,
}

impl StairNetwork {
    /// Full network for a dense instance: every pair couples.
    pub fn build(p: &Problem, cfg: &SolverConfig) -> Result<Self> {
        check_dense_cap(p, cfg)?;
        Ok(Self::with_band(p, p.n().saturating_sub(1).max(1), cfg.tau))
    }

    /// Banded network: row `r` carries cross nodes only for `r - m <= band`.
    pub fn with_band(p: &Problem, band: usize, tau: f64) -> Self {
        let (n, d) = (p.n(), p.d());
        let last_row_of = |m: usize| (m + band).min(n - 1);
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let mut row = Vec::new();
            row.push(PlacedNode {
                node: TensorNode::Plus { d },
                legs: vec![Leg::H { row: r, pos: 0 }],
            });
            row.push(PlacedNode {
                node: TensorNode::self_interaction(p, r, tau),
                legs: vec![Leg::H { row: r, pos: 0 }, Leg::H { row: r, pos: 1 }],
            });
            let mut pos = 1;
            if last_row_of(r) > r {
                row.push(PlacedNode {
                    node: TensorNode::Copy { d },
                    legs: vec![
                        Leg::H { row: r, pos },
                        Leg::H {
                            row: r,
                            pos: pos + 1,
                        },
                        Leg::V { col: r, row: r },
                    ],
                });
                pos += 1;
            }
            for m in (r.saturating_sub(band)..r).rev() {
                let terminating = last_row_of(m) == r;
                let mut legs = vec![
                    Leg::H { row: r, pos },
                    Leg::H {
                        row: r,
                        pos: pos + 1,
                    },
                    Leg::V { col: m, row: r - 1 },
                ];
                if !terminating {
                    legs.push(Leg::V { col: m, row: r });
                }
                row.push(PlacedNode {
                    node: TensorNode::cross(p, r, m, tau, terminating),
                    legs,
                });
                pos += 1;
            }
            rows.push(row);
        }
        StairNetwork {
            n,
            d,
            band,
            tau,
            rows,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn row(&self, r: usize) -> &[PlacedNode] {
        &self.rows[r]
    }

    /// The horizontal leg leaving the right end of row `r`.
    pub fn row_output(&self, r: usize) -> Leg {
        *self.rows[r]
            .last()
            .expect("rows are never empty")
            .legs
            .get(1)
            .unwrap_or(&Leg::H { row: r, pos: 0 })
    }

    /// Number of cross nodes (both variants) in each row.
    pub fn cross_nodes_per_row(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|p| {
                        matches!(
                            p.node.kind(),
                            NodeKind::CrossInteraction | NodeKind::CrossLastRow
                        )
                    })
                    .count()
            })
            .collect()
    }

    /// Count of each node kind over the whole network, including one closing
    /// trace node per row.
    pub fn node_census(&self) -> HashMap<NodeKind, usize> {
        let mut census = HashMap::new();
        for row in &self.rows {
            for p in row {
                *census.entry(p.node.kind()).or_insert(0) += 1;
            }
        }
        *census.entry(NodeKind::PlusTrace).or_insert(0) += self.n;
        census
    }

    /// Every placed node, row by row.
    pub fn nodes(&self) -> impl Iterator<Item = &PlacedNode> {
        self.rows.iter().flatten()
    }

    /// Marginal of variable `i` given `fixed` values of `x_0 .. x_{i-1}`,
    /// contracting fully materialized nodes bottom row first, each row right
    /// to left. Fixed rows start from a one-hot selector instead of the
    /// superposition.
    pub fn contract_dense(
        &self,
        i: usize,
        fixed: &[usize],
        normalize: bool,
    ) -> Result<MarginalVector> {
        if i >= self.n || fixed.len() != i {
            return Err(Error::InvalidAssignment(format!(
                "dense contraction of variable {i} needs exactly {i} fixed values, got {}",
                fixed.len()
            )));
        }
        let d = self.d;
        let mut running = DenseTensor::scalar(1.0);
        let mut scale_dropped = false;
        for r in (0..self.n).rev() {
            let row = &self.rows[r];
            let out = self.row_output(r);
            if r != i {
                running = running.contract(&DenseTensor::ones(out, d));
            }
            for placed in row.iter().rev() {
                let t = if placed.node.kind() == NodeKind::Plus && r < i {
                    DenseTensor::one_hot(placed.legs[0], d, fixed[r])
                } else {
                    DenseTensor::from_node(placed)
                };
                running = running.contract(&t);
            }
            if normalize {
                normalize_in_place(&mut running.data, || {
                    format!("dense contraction of row {r}")
                })?;
                scale_dropped = true;
            }
        }
        debug_assert_eq!(running.legs.len(), 1);
        Ok(MarginalVector {
            entries: running.data,
            scale_dropped,
        })
    }
}

pub(crate) fn check_dense_cap(p: &Problem, cfg: &SolverConfig) -> Result<()> {
    let needed = (p.d() as u128).saturating_pow(p.n().saturating_sub(1) as u32);
    if needed > cfg.caps.dense_states {
        return Err(Error::Capacity {
            what: "dense stair network",
            needed,
            cap: cfg.caps.dense_states,
        });
    }
    Ok(())
}

/// A dense array with one labeled leg of size `d` per index, last leg fastest.
#[derive(Debug, Clone, PartialEq)]
struct DenseTensor {
    legs: Vec<Leg>,
    d: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    fn scalar(v: f64) -> Self {
        DenseTensor {
            legs: Vec::new(),
            d: 1,
            data: vec![v],
        }
    }

    fn ones(leg: Leg, d: usize) -> Self {
        DenseTensor {
            legs: vec![leg],
            d,
            data: vec![1.0; d],
        }
    }

    fn one_hot(leg: Leg, d: usize, value: usize) -> Self {
        let mut data = vec![0.0; d];
        data[value] = 1.0;
        DenseTensor {
            legs: vec![leg],
            d,
            data,
        }
    }

    fn from_node(placed: &PlacedNode) -> Self {
        DenseTensor {
            legs: placed.legs.clone(),
            d: placed.node.d(),
            data: placed
                .node
                .index_tuples()
                .map(|idx| placed.node.element(&idx))
                .collect(),
        }
    }

    /// Sums over every leg the two tensors share.
    fn contract(&self, other: &DenseTensor) -> DenseTensor {
        let d = self.d.max(other.d);
        let shared: Vec<Leg> = self
            .legs
            .iter()
            .filter(|l| other.legs.contains(l))
            .copied()
            .collect();
        let mut out_legs: Vec<Leg> = self
            .legs
            .iter()
            .filter(|l| !shared.contains(l))
            .copied()
            .collect();
        out_legs.extend(other.legs.iter().filter(|l| !shared.contains(l)).copied());

        let all: Vec<Leg> = out_legs.iter().chain(shared.iter()).copied().collect();
        let position = |legs: &[Leg]| -> Vec<usize> {
            legs.iter()
                .map(|l| all.iter().position(|a| a == l).unwrap())
                .collect()
        };
        let self_pos = position(&self.legs);
        let other_pos = position(&other.legs);

        let out_size = d.pow(out_legs.len() as u32);
        let shared_size = d.pow(shared.len() as u32);
        let mut digits = vec![0usize; all.len()];
        let mut data = vec![0.0; out_size];
        for (o, slot) in data.iter_mut().enumerate() {
            fill_digits(&mut digits[..out_legs.len()], o, d);
            let mut acc = 0.0;
            for s in 0..shared_size {
                fill_digits(&mut digits[out_legs.len()..], s, d);
                let a = self.data[flat(&self_pos, &digits, d)];
                if a == 0.0 {
                    continue;
                }
                acc += a * other.data[flat(&other_pos, &digits, d)];
            }
            *slot = acc;
        }
        DenseTensor {
            legs: out_legs,
            d,
            data,
        }
    }
}

fn fill_digits(digits: &mut [usize], mut value: usize, d: usize) {
    for slot in digits.iter_mut().rev() {
        *slot = value % d;
        value /= d;
    }
}

fn flat(pos: &[usize], digits: &[usize], d: usize) -> usize {
    pos.iter().fold(0, |acc, &p| acc * d + digits[p])
}
