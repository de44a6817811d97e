//! Exact optimal transport between two uniform empirical measures on the torus.
//!
//! With equal uniform weights the Kantorovich problem has an optimal plan
//! that is a permutation, so it reduces to a linear assignment problem over
//! the squared periodic distance matrix. The assignment is solved with a
//! shortest-augmenting-path method with dual potentials (Jonker-Volgenant
//! family), `O(N^3)` worst case.

use crate::dynamics::ParticleState;
use crate::forces::{Displacement, Vec2};
use crate::par;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("cost matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("cost matrix rows have unequal lengths")]
    Ragged,
    #[error("cost matrix is empty")]
    Empty,
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("particle counts differ: {source_len} vs {target_len}")]
    SizeMismatch { source_len: usize, target_len: usize },
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundCost {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GroundCost {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, TransportError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(TransportError::Ragged);
        }
        Ok(Self { rows: n, cols: m, data: rows.into_iter().flatten().collect() })
    }

    /// Squared minimum-image distances between every source and target point.
    pub fn periodic(source: &ParticleState, target: &ParticleState) -> Self {
        let (xs, ys) = (source.positions(), target.positions());
        let cols = ys.len();
        let mut data = vec![0.0; xs.len() * cols];
        par::for_each_row(&mut data, cols, |i, row| {
            for (c, y) in row.iter_mut().zip(ys) {
                *c = periodic_sq_distance(xs[i], *y);
            }
        });
        Self { rows: xs.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Optimal assignment `sigma` with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `assignment[i]` is the target index matched to source `i`.
    pub assignment: Vec<usize>,
    /// `sum_i M[i, sigma(i)]`.
    pub total_cost: f64,
    /// `total_cost / N`, the squared 2-Wasserstein distance.
    pub w2_squared: f64,
}

impl TransportPlan {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Per-row costs `M[i, sigma(i)]`.
    pub fn row_costs(&self, cost: &GroundCost) -> Vec<f64> {
        self.assignment.iter().enumerate().map(|(i, &j)| cost.get(i, j)).collect()
    }
}

pub fn periodic_sq_distance(x: Vec2, y: Vec2) -> f64 {
    Displacement::wrap_unchecked(x - y).vector().norm_squared()
}

/// Exact minimum-cost perfect matching.
///
/// Rows are inserted in ascending order; each augmentation takes the first
/// column reaching the minimal reduced distance, which makes the result
/// deterministic when several matchings are optimal.
pub fn solve_assignment(cost: &GroundCost) -> Result<TransportPlan, TransportError> {
    let n = cost.rows;
    if n != cost.cols {
        return Err(TransportError::NotSquare { rows: cost.rows, cols: cost.cols });
    }
    if n == 0 {
        return Err(TransportError::Empty);
    }
    if let Some(k) = cost.data.iter().position(|c| !c.is_finite()) {
        return Err(TransportError::NonFinite { row: k / n, col: k % n });
    }

    // 1-based columns; column 0 is the virtual root of each augmenting tree.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        min_slack.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = cost.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    let total_cost: f64 = assignment.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok(TransportPlan { assignment, total_cost, w2_squared: total_cost / n as f64 })
}

/// Optimal plan between two equally sized point clouds under the periodic cost.
pub fn optimal_plan(source: &ParticleState, target: &ParticleState) -> Result<TransportPlan, TransportError> {
    if source.len() != target.len() {
        return Err(TransportError::SizeMismatch { source_len: source.len(), target_len: target.len() });
    }
    solve_assignment(&GroundCost::periodic(source, target))
}

pub fn w2_squared(source: &ParticleState, target: &ParticleState) -> Result<f64, TransportError> {
    optimal_plan(source, target).map(|p| p.w2_squared)
}

/// Minimum-image connectors `t(x_i) - x_i` from each source point to its
/// assigned target point.
pub fn transport_displacements(source: &ParticleState, target: &ParticleState, plan: &TransportPlan) -> Vec<Vec2> {
    let (xs, ys) = (source.positions(), target.positions());
    plan.assignment.iter().zip(xs).map(|(&j, x)| Displacement::wrap_unchecked(ys[j] - x).vector()).collect()
}

/// Writes `i,sigma_i,cost_i` rows.
pub fn write_plan_csv<W: std::io::Write>(out: W, plan: &TransportPlan, cost: &GroundCost) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "sigma_i", "cost_i"])?;
    for (i, (&j, c)) in plan.assignment.iter().zip(plan.row_costs(cost)).enumerate() {
        w.write_record([i.to_string(), j.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
