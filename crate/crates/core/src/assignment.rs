//! Exact linear assignment on dense square cost matrices.
//!
//! Shortest augmenting path Hungarian method with row/column potentials,
//! `O(n^3)`. Used for the signed-permutation metric, label matching and the
//! ground-truth column assignment in diagnostics.

use crate::{Error, Result};

/// Optimal assignment: `row_to_col[i]` is the column chosen for row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

/// Minimizes `sum_i cost[i][row_to_col[i]]` over all permutations.
pub fn solve(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    if let Some(row) = cost.iter().find(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} columns"),
            actual: format!("{} columns", row.len()),
        });
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(
            "assignment costs must be finite".into(),
        ));
    }
    if n == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            cost: 0.0,
        });
    }

    // 1-based bookkeeping with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum();
    Ok(Assignment {
        row_to_col,
        cost: total,
    })
}

/// Optimal assignment whose permutation is lexicographically smallest among
/// all optimal ones. Costs are compared with an absolute slack of `tie_tol`.
pub fn solve_lexicographic(cost: &[Vec<f64>], tie_tol: f64) -> Result<Assignment> {
    let best = solve(cost)?;
    let n = cost.len();
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let mut chosen = None;
        for col in 0..n {
            if fixed.contains(&col) {
                continue;
            }
            let rest_cost = remaining_cost(cost, &fixed, row, col)?;
            if fixed_cost + cost[row][col] + rest_cost <= best.cost + tie_tol {
                chosen = Some(col);
                break;
            }
        }
        // The optimal completion always exists, so `chosen` is set.
        let col = chosen.unwrap_or(best.row_to_col[row]);
        fixed_cost += cost[row][col];
        fixed.push(col);
    }
    Ok(Assignment {
        cost: fixed_cost,
        row_to_col: fixed,
    })
}

// Optimal cost of rows `row+1..n` once rows `0..=row` use `fixed` and `col`.
fn remaining_cost(cost: &[Vec<f64>], fixed: &[usize], row: usize, col: usize) -> Result<f64> {
    let n = cost.len();
    let free_cols: Vec<usize> = (0..n)
        .filter(|c| *c != col && !fixed.contains(c))
        .collect();
    let sub: Vec<Vec<f64>> = ((row + 1)..n)
        .map(|i| free_cols.iter().map(|&j| cost[i][j]).collect())
        .collect();
    Ok(solve(&sub)?.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + rec(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.len()])
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(solve(&[]).unwrap().cost, 0.0);
        let a = solve(&[vec![4.5]]).unwrap();
        assert_eq!(a.row_to_col, vec![0]);
        assert_eq!(a.cost, 4.5);
    }

    #[test]
    fn known_instance() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = solve(&cost).unwrap();
        assert_eq!(a.cost, 5.0);
        assert_eq!(a.row_to_col, vec![1, 0, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::seed::rng(11);
        for n in 1..=6 {
            for _ in 0..30 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect();
                let a = solve(&cost).unwrap();
                assert!((a.cost - brute_force(&cost)).abs() < 1e-10);
                let mut cols = a.row_to_col.clone();
                cols.sort_unstable();
                assert_eq!(cols, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn lexicographic_tie_break() {
        // Every permutation has cost 0.
        let cost = vec![vec![0.0; 3]; 3];
        assert_eq!(
            solve_lexicographic(&cost, 0.0).unwrap().row_to_col,
            vec![0, 1, 2]
        );
        let cost = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            solve_lexicographic(&cost, 0.0).unwrap().row_to_col,
            vec![1, 0]
        );
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(solve(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(solve(&[vec![f64::NAN]]).is_err());
    }
}
