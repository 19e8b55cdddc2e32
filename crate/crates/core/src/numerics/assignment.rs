//! Minimum-cost perfect assignment (Hungarian method with potentials).

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T> {
    /// `permutation[row] = col`.
    pub permutation: Vec<usize>,
    pub total: T,
}

struct Solved<T> {
    row_to_col: Vec<usize>,
    row_pot: Vec<T>,
    col_pot: Vec<T>,
}

/// Minimum-cost assignment of rows to columns of a square cost matrix.
///
/// Among all optimal assignments the lexicographically smallest permutation is
/// returned, so equal-cost ties resolve the same way on every run.
pub fn hungarian<T: Scalar>(cost: &Matrix<T>) -> Result<Assignment<T>> {
    let n = check_square(cost)?;
    let solved = solve(cost);
    let row_to_col = lexicographic_minimum(cost, solved);
    Ok(finish(cost, row_to_col, n))
}

/// Optimal assignment without the lexicographic tie-break; used where only
/// the optimal value matters and inputs may carry large tie sets.
pub(crate) fn min_cost_assignment<T: Scalar>(cost: &Matrix<T>) -> Result<Assignment<T>> {
    let n = check_square(cost)?;
    let solved = solve(cost);
    Ok(finish(cost, solved.row_to_col, n))
}

fn check_square<T: Scalar>(cost: &Matrix<T>) -> Result<usize> {
    if cost.rows() != cost.cols() {
        return Err(Error::shape(format!(
            "assignment needs a square cost matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    Ok(cost.rows())
}

fn finish<T: Scalar>(cost: &Matrix<T>, row_to_col: Vec<usize>, n: usize) -> Assignment<T> {
    let total = (0..n).map(|i| cost[(i, row_to_col[i])]).sum();
    Assignment {
        permutation: row_to_col,
        total,
    }
}

fn solve<T: Scalar>(cost: &Matrix<T>) -> Solved<T> {
    let n = cost.rows();
    // 1-based rows/columns; index 0 is the virtual source
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![T::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = T::infinity();
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    Solved {
        row_to_col,
        row_pot: u[1..].to_vec(),
        col_pot: v[1..].to_vec(),
    }
}

/// Every optimal assignment uses only edges that are tight under an optimal
/// dual; walk rows in order and take the smallest tight column that still
/// admits a perfect matching on the remaining rows.
fn lexicographic_minimum<T: Scalar>(cost: &Matrix<T>, solved: Solved<T>) -> Vec<usize> {
    let n = cost.rows();
    let Solved {
        mut row_to_col,
        row_pot,
        col_pot,
    } = solved;
    let scale = cost.max_abs().max(T::one());
    let tol = scale * T::epsilon() * T::of_usize(n.max(1)) * T::lit(64.0);
    let tight = |i: usize, j: usize| (cost[(i, j)] - row_pot[i] - col_pot[j]).abs() <= tol;

    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }

    for i in 0..n {
        let freed = row_to_col[i];
        for j in 0..freed {
            if !tight(i, j) {
                continue;
            }
            let displaced = col_to_row[j];
            if displaced < i {
                continue;
            }
            // alternating path from `displaced` to the freed column, using
            // rows after `i` only
            let mut prev_col: Vec<Option<usize>> = vec![None; n];
            let mut seen_col = vec![false; n];
            seen_col[j] = true;
            let mut queue = VecDeque::from([displaced]);
            let mut found = false;
            'bfs: while let Some(r) = queue.pop_front() {
                for c in 0..n {
                    if seen_col[c] || !tight(r, c) {
                        continue;
                    }
                    if c == freed {
                        prev_col[c] = Some(r);
                        found = true;
                        break 'bfs;
                    }
                    let owner = col_to_row[c];
                    if owner <= i {
                        continue;
                    }
                    seen_col[c] = true;
                    prev_col[c] = Some(r);
                    queue.push_back(owner);
                }
            }
            if !found {
                continue;
            }
            // flip the path back from the freed column
            let mut c = freed;
            loop {
                let r = prev_col[c].expect("path recorded");
                let next = row_to_col[r];
                row_to_col[r] = c;
                col_to_row[c] = r;
                if r == displaced {
                    break;
                }
                c = next;
            }
            row_to_col[i] = j;
            col_to_row[j] = i;
            break;
        }
    }
    row_to_col
}
