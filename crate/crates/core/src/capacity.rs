//! From link counters to throughput capacity.
//!
//! `p_ij` is the empirical per-attempt success ratio, `t_ij = 1/p_ij` the expected number of
//! transmissions over the direct link, and `m_ij` the least expected number of transmissions
//! over any relay path, i.e. the least solution of `m_ij = min_k (m_ik + t_kj)`, `m_ii = 0`.
//! The throughput capacity is then
//!
//! ```text
//! zeta = N (N - 1) * sum_i Omega_i / sum_ij m_ij
//! ```
//!
//! and collapses to zero when some pair cannot be joined at all.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::simulator::{activity_rate, LinkStats};

/// Dense row-major square matrix of extended reals (`+inf` allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn filled(n: usize, value: f64) -> Self {
        Matrix {
            n,
            data: vec![value; n * n],
        }
    }

    /// Builds from row-major data. Panics if `data.len() != n * n`.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data is not {n}x{n}");
        Matrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Row-major flat array; infinities become `null`.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.data.len()))?;
        for &v in &self.data {
            seq.serialize_element(&finite_or_none(v))?;
        }
        seq.end()
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn serialize_extended<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    finite_or_none(*v).serialize(s)
}

/// `successes / attempts` per ordered pair; never-attempted pairs count as unusable (`0`).
pub fn success_probabilities(stats: &LinkStats) -> Matrix {
    let n = stats.len();
    let mut p = Matrix::filled(n, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = stats.attempts(i, j);
            if i != j && a > 0 {
                p.set(i, j, stats.successes(i, j) as f64 / a as f64);
            }
        }
    }
    p
}

/// Elementwise `1 / p` with `1 / 0 = inf`. The diagonal is zero.
pub fn expected_transmissions(p: &Matrix) -> Matrix {
    let n = p.len();
    let mut t = Matrix::filled(n, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p.get(i, j);
                t.set(i, j, if pij > 0.0 { 1.0 / pij } else { f64::INFINITY });
            }
        }
    }
    t
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Least expected transmission counts over any path: all-pairs shortest paths on the
/// directed graph with edge weights `t_kj`, one Dijkstra per source. Infinite weights are
/// missing edges. Path costs accumulate source-first, `m_ik + t_kj`.
pub fn min_transmissions(t: &Matrix) -> Matrix {
    let n = t.len();
    // compressed adjacency
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for k in 0..n {
        for (j, &w) in t.row(k).iter().enumerate() {
            if j != k && w.is_finite() {
                targets.push(j);
                weights.push(w);
            }
        }
        offsets.push(targets.len());
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|src| {
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            let mut heap = BinaryHeap::new();
            dist[src] = 0.0;
            heap.push(Frontier {
                cost: 0.0,
                node: src,
            });
            while let Some(Frontier { cost, node }) = heap.pop() {
                if done[node] {
                    continue;
                }
                done[node] = true;
                for e in offsets[node]..offsets[node + 1] {
                    let j = targets[e];
                    let c = cost + weights[e];
                    if c < dist[j] {
                        dist[j] = c;
                        heap.push(Frontier { cost: c, node: j });
                    }
                }
            }
            dist
        })
        .collect();

    Matrix::from_rows(n, rows.concat())
}

/// Throughput capacity from the min-transmission matrix and per-node activity rates.
///
/// Returns `(0, false)` if any off-diagonal `m_ij` is infinite.
pub fn throughput(m: &Matrix, omega: &[f64]) -> (f64, bool) {
    let n = m.len();
    assert_eq!(omega.len(), n, "activity vector length must equal N");
    let mut sum_m = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = m.get(i, j);
            if !v.is_finite() {
                return (0.0, false);
            }
            sum_m += v;
        }
    }
    let sum_omega: f64 = omega.iter().sum();
    let pairs = (n as f64) * (n as f64 - 1.0);
    (pairs * sum_omega / sum_m, true)
}

/// Everything derived from one run's link counters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub zeta: f64,
    pub connected: bool,
    pub omega: Vec<f64>,
    pub p_matrix: Matrix,
    pub t_matrix: Matrix,
    pub m_matrix: Matrix,
}

/// Matrix-free view of a [`CapacityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitySummary {
    pub zeta: f64,
    pub connected: bool,
    pub sum_omega: f64,
    /// `sum_ij m_ij`; `null` in JSON when disconnected.
    #[serde(serialize_with = "serialize_extended")]
    pub sum_m: f64,
}

impl CapacityReport {
    pub fn from_stats(stats: &LinkStats) -> Self {
        let p_matrix = success_probabilities(stats);
        let t_matrix = expected_transmissions(&p_matrix);
        let m_matrix = min_transmissions(&t_matrix);
        let omega = activity_rate(stats);
        let (zeta, connected) = throughput(&m_matrix, &omega);
        CapacityReport {
            zeta,
            connected,
            omega,
            p_matrix,
            t_matrix,
            m_matrix,
        }
    }

    pub fn summary(&self) -> CapacitySummary {
        CapacitySummary {
            zeta: self.zeta,
            connected: self.connected,
            sum_omega: self.omega.iter().sum(),
            sum_m: self.m_matrix.as_slice().iter().sum(),
        }
    }
}
