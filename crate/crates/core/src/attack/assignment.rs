//! Exact linear sum assignment.
//!
//! [`solve_assignment`] is the classic O(n²m) shortest-augmenting-path Hungarian
//! method with row and column potentials. [`solve_transport`] runs the same
//! method on columns that accept several rows, which is what the attack needs
//! when many location slots share a cell.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-to-column matching and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub total: f64,
}

fn check_finite(cost: &[Vec<f64>], cols: usize) -> Result<()> {
    for (r, row) in cost.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::DimensionMismatch { expected: cols, found: row.len() });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCost { row: r, col: c });
        }
    }
    Ok(())
}

fn total_cost(cost: &[Vec<f64>], row_to_col: &[usize]) -> f64 {
    row_to_col.iter().enumerate().map(|(r, &c)| cost[r][c]).sum()
}

/// Minimum-cost perfect matching of a square matrix.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    if let Some(row) = cost.iter().find(|row| row.len() != n) {
        return Err(Error::NotSquare { rows: n, cols: row.len() });
    }
    solve_rectangular(cost)
}

/// Minimum-cost matching that assigns every row of an `n × m` matrix, `n <= m`,
/// to a distinct column. With `n > m` every column is matched instead and the
/// surplus rows map to `usize::MAX`.
pub fn solve_rectangular(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    if n == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), total: 0.0 });
    }
    let m = cost[0].len();
    check_finite(cost, m)?;
    if n <= m {
        let row_to_col = hungarian(n, m, |r, c| cost[r][c]);
        let total = total_cost(cost, &row_to_col);
        return Ok(Assignment { row_to_col, total });
    }
    let col_to_row = hungarian(m, n, |c, r| cost[r][c]);
    let mut row_to_col = vec![usize::MAX; n];
    let mut total = 0.0;
    for (c, &r) in col_to_row.iter().enumerate() {
        row_to_col[r] = c;
        total += cost[r][c];
    }
    Ok(Assignment { row_to_col, total })
}

/// Hungarian method for `n <= m`; returns the column of each row.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) matched to column j; column 0 is virtual
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Minimum-cost assignment of every row to a column where column `j` accepts at
/// most `capacity[j]` rows.
///
/// Equivalent to [`solve_rectangular`] on the matrix with column `j` repeated
/// `capacity[j]` times, but each augmenting search runs over distinct columns.
pub fn solve_transport(cost: &[Vec<f64>], capacity: &[usize]) -> Result<Assignment> {
    let n = cost.len();
    let m = capacity.len();
    check_finite(cost, m)?;
    let total_capacity: usize = capacity.iter().sum();
    if total_capacity < n {
        return Err(Error::InsufficientCapacity { rows: n, capacity: total_capacity });
    }
    if n == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), total: 0.0 });
    }

    let inf = f64::INFINITY;
    // rows and columns are 1-based below; column 0 is the virtual source column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut via = vec![0usize; m + 1];
    let mut visited_rows = Vec::new();
    let mut used_cols = Vec::new();

    for i in 1..=n {
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        for j in 1..=m {
            if capacity[j - 1] == 0 {
                used[j] = true;
            }
        }
        visited_rows.clear();
        used_cols.clear();
        used[0] = true;
        used_cols.push(0);
        let mut j0 = 0usize;
        loop {
            let scan: &[usize] = if j0 == 0 { core::slice::from_ref(&i) } else { &members[j0] };
            for &r in scan {
                visited_rows.push(r);
                let row = &cost[r - 1];
                for j in 1..=m {
                    if used[j] {
                        continue;
                    }
                    let cur = row[j - 1] - u[r] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                        via[j] = r;
                    }
                }
            }
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] && minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != 0, "capacity check guarantees a reachable free column");
            for &r in &visited_rows {
                u[r] += delta;
            }
            for &j in &used_cols {
                v[j] -= delta;
            }
            for j in 1..=m {
                if !used[j] {
                    minv[j] -= delta;
                }
            }
            used[j1] = true;
            used_cols.push(j1);
            j0 = j1;
            if members[j0].len() < capacity[j0 - 1] {
                break;
            }
        }
        // shift rows back along the alternating path
        let mut j = j0;
        loop {
            let r = via[j];
            let previous = way[j];
            if previous != 0 {
                let slot = members[previous].iter().position(|&x| x == r).expect("row sits in its column");
                members[previous].swap_remove(slot);
            }
            members[j].push(r);
            if previous == 0 {
                break;
            }
            j = previous;
        }
    }

    let mut row_to_col = vec![0usize; n];
    for (j, rows) in members.iter().enumerate().skip(1) {
        for &r in rows {
            row_to_col[r - 1] = j - 1;
        }
    }
    let total = total_cost(cost, &row_to_col);
    Ok(Assignment { row_to_col, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let a = solve_assignment(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a.row_to_col, vec![0, 1]);
        assert_eq!(a.total, 2.0);
    }

    #[test]
    fn ties_only_fix_the_total() {
        let cost = vec![vec![3.0; 4]; 4];
        let a = solve_assignment(&cost).unwrap();
        assert_eq!(a.total, 12.0);
        let mut cols = a.row_to_col.clone();
        cols.sort_unstable();
        assert_eq!(cols, vec![0, 1, 2, 3]);
    }

    #[test]
    fn errors() {
        assert!(matches!(solve_assignment(&[vec![1.0, 2.0]]), Err(Error::NotSquare { .. })));
        assert!(matches!(
            solve_assignment(&[vec![1.0, f64::NAN], vec![0.0, 0.0]]),
            Err(Error::NonFiniteCost { row: 0, col: 1 })
        ));
        assert!(matches!(solve_transport(&[vec![1.0], vec![1.0]], &[1]), Err(Error::InsufficientCapacity { .. })));
    }

    #[test]
    fn more_rows_than_columns() {
        let a = solve_rectangular(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(a.row_to_col, vec![usize::MAX, 0, usize::MAX]);
        assert_eq!(a.total, 1.0);
    }

    #[test]
    fn transport_respects_capacity() {
        // three rows all prefer column 0, which holds two
        let cost = vec![vec![0.0, 5.0], vec![0.0, 1.0], vec![0.0, 9.0]];
        let a = solve_transport(&cost, &[2, 5]).unwrap();
        assert_eq!(a.row_to_col, vec![0, 1, 0]);
        assert_eq!(a.total, 1.0);
    }
}
