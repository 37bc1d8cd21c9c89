//! Maximum-similarity one-to-one assignment (rectangular Hungarian method)
//! with a deterministic tie rule.

use super::keypoints::KeypointSet;
use super::CompositionError;
use crate::vector::cosine;

/// Assignments whose totals differ by at most this much count as tied.
pub const ASSIGNMENT_TIE_TOLERANCE: f64 = 1e-10;

/// Reduced-cost slack below which an edge may belong to another optimum.
const TIGHT_EDGE: f64 = 2.0 * ASSIGNMENT_TIE_TOLERANCE;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, column)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of matched similarities, accumulated in pair order.
    pub total_similarity: f64,
}

#[derive(Clone)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.at(r, c));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                data.push(self.at(r, c));
            }
        }
        Matrix {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }
}

struct Solved {
    /// Column of each row.
    row_to_col: Vec<usize>,
    /// Whether another matching may tie with this one.
    has_tight_alternative: bool,
}

/// Shortest-augmenting-path Hungarian method minimising `cost`, for
/// `rows <= cols`. Every row is assigned.
fn hungarian_min(cost: &Matrix) -> Solved {
    let (n, m) = (cost.rows, cost.cols);
    debug_assert!(n <= m);
    // 1-based potentials and matching; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut col_owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if col_owner[j] != 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    let has_tight_alternative = alternative_exists(cost, &u, &v, &row_to_col, &col_owner);
    Solved {
        row_to_col,
        has_tight_alternative,
    }
}

/// Whether another matching could reach the same cost under the final duals.
///
/// Swapping along tight edges changes the cost by the sum of their reduced
/// costs, so an alternative optimum needs either an alternating cycle of
/// tight edges, or an alternating path that ends in a free column and starts
/// by freeing a column whose potential is zero. Every edge is tested with a
/// tolerance, so the check errs towards reporting ambiguity.
fn alternative_exists(cost: &Matrix, u: &[f64], v: &[f64], row_to_col: &[usize], col_owner: &[usize]) -> bool {
    let (n, m) = (cost.rows, cost.cols);
    let mut next: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut reaches_free = vec![false; n];
    for i in 0..n {
        for j in 0..m {
            if j == row_to_col[i] || cost.at(i, j) - u[i + 1] - v[j + 1] > TIGHT_EDGE {
                continue;
            }
            match col_owner[j + 1] {
                0 => reaches_free[i] = true,
                owner => next[i].push(owner - 1),
            }
        }
    }
    // Cycle search by iterative three-colour depth-first traversal.
    let mut colour = vec![0u8; n];
    for root in 0..n {
        if colour[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = 1;
        while let Some(&mut (i, ref mut k)) = stack.last_mut() {
            if let Some(&j) = next[i].get(*k) {
                *k += 1;
                match colour[j] {
                    0 => {
                        colour[j] = 1;
                        stack.push((j, 0));
                    }
                    1 => return true,
                    _ => {}
                }
            } else {
                colour[i] = 2;
                stack.pop();
            }
        }
    }
    if !reaches_free.iter().any(|&r| r) {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| v[row_to_col[i] + 1] >= -TIGHT_EDGE).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(i) = queue.pop() {
        if reaches_free[i] {
            return true;
        }
        for &k in &next[i] {
            if !seen[k] {
                seen[k] = true;
                queue.push(k);
            }
        }
    }
    false
}

/// An optimal max-similarity matching as sorted `(row, col)` pairs.
fn optimal_pairs(sim: &Matrix) -> (Vec<(usize, usize)>, bool) {
    let transposed = sim.rows > sim.cols;
    let oriented = if transposed { sim.transpose() } else { sim.clone() };
    let cost = Matrix {
        data: oriented.data.iter().map(|s| -s).collect(),
        ..oriented
    };
    let solved = hungarian_min(&cost);
    let mut pairs: Vec<(usize, usize)> = solved
        .row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| if transposed { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    (pairs, solved.has_tight_alternative)
}

fn total(sim: &Matrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| sim.at(r, c)).sum()
}

/// Optimal value over the given rows and columns, matching
/// `min(rows, cols)` pairs. Empty index sets have value 0.
fn optimal_value(sim: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let sub = sim.submatrix(rows, cols);
    let (pairs, _) = optimal_pairs(&sub);
    total(&sub, &pairs)
}

/// Among assignments within tolerance of the optimum, the lexicographically
/// smallest sorted pair list, built greedily with feasibility checks.
fn lexicographic_refinement(sim: &Matrix, best: f64) -> Vec<(usize, usize)> {
    let size = sim.rows.min(sim.cols);
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(size);
    let mut used_cols = vec![false; sim.cols];
    let mut chosen_sum = 0.0;
    for step in 0..size {
        let first_row = chosen.last().map_or(0, |&(r, _)| r + 1);
        let needed = size - step - 1;
        let mut accepted = None;
        'search: for r in first_row..sim.rows {
            let rest_rows: Vec<usize> = (r + 1..sim.rows).collect();
            if rest_rows.len() < needed {
                break;
            }
            for c in 0..sim.cols {
                if used_cols[c] {
                    continue;
                }
                let rest_cols: Vec<usize> = (0..sim.cols).filter(|&j| j != c && !used_cols[j]).collect();
                if rest_rows.len().min(rest_cols.len()) != needed {
                    continue;
                }
                let value = chosen_sum + sim.at(r, c) + optimal_value(sim, &rest_rows, &rest_cols);
                if value >= best - ASSIGNMENT_TIE_TOLERANCE {
                    accepted = Some((r, c));
                    break 'search;
                }
            }
        }
        let (r, c) = accepted.expect("an optimal completion always exists");
        chosen.push((r, c));
        used_cols[c] = true;
        chosen_sum += sim.at(r, c);
    }
    chosen
}

/// Maximum-similarity one-to-one assignment for a `rows x cols` matrix
/// given as a slice of rows. Exactly `min(rows, cols)` pairs are matched.
/// Among assignments whose totals lie within [`ASSIGNMENT_TIE_TOLERANCE`] of
/// the optimum, the lexicographically smallest sorted pair list is returned.
pub fn solve_assignment<R: AsRef<[f64]>>(similarity: &[R]) -> Result<Assignment, CompositionError> {
    let rows = similarity.len();
    let cols = similarity.first().map_or(0, |r| r.as_ref().len());
    if rows == 0 || cols == 0 {
        return Err(CompositionError::EmptySet);
    }
    let mut data = Vec::with_capacity(rows * cols);
    for row in similarity {
        let row = row.as_ref();
        if row.len() != cols {
            return Err(CompositionError::InvalidParameter("ragged similarity matrix".into()));
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(CompositionError::NonFinite(format!("similarity {bad}")));
        }
        data.extend_from_slice(row);
    }
    let sim = Matrix { rows, cols, data };
    let (mut pairs, ambiguous) = optimal_pairs(&sim);
    if ambiguous {
        let best = total(&sim, &pairs);
        pairs = lexicographic_refinement(&sim, best);
    }
    let total_similarity = total(&sim, &pairs);
    Ok(Assignment {
        pairs,
        total_similarity,
    })
}

/// Optimal matching of two keypoint sets by feature cosine similarity.
pub fn match_keypoints(a: &KeypointSet, b: &KeypointSet) -> Result<Assignment, CompositionError> {
    if a.items.is_empty() || b.items.is_empty() {
        return Err(CompositionError::EmptySet);
    }
    let sim: Vec<Vec<f64>> = a
        .items
        .iter()
        .map(|x| b.items.iter().map(|y| cosine(&x.feature, &y.feature)).collect())
        .collect();
    solve_assignment(&sim)
}
