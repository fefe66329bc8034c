//! Shortest augmenting path solver (Kuhn-Munkres with potentials) for
//! rectangular cost matrices with forbidden entries.

use super::{Assignment, CostMatrix};

/// Solves a dense square problem; returns `row -> column`.
fn solve_square(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Minimum-cost assignment. Among matchings of the smaller side, the solver
/// first maximizes the number of allowed pairs, then minimizes their total
/// cost. Forbidden pairs are never returned.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows == 0 || cols == 0 {
        return Assignment {
            matches: Vec::new(),
            unmatched_tracks: (0..rows).collect(),
            unmatched_detections: (0..cols).collect(),
        };
    }
    let n = rows.max(cols);
    let max_abs = cost
        .values()
        .iter()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |m, c| m.max(c.abs()));
    // padding sits just above every real cost; forbidden entries outweigh any
    // combination of allowed ones
    let pad = max_abs.max(1.0) * (1.0 + 1e-6);
    let forbidden = (max_abs + pad + 1.0) * (2 * n + 2) as f64;
    let mut square = vec![pad; n * n];
    for r in 0..rows {
        for c in 0..cols {
            let v = cost.get(r, c);
            square[r * n + c] = if v.is_finite() { v } else { forbidden };
        }
    }
    let row_to_col = solve_square(&square, n);

    let mut matches = Vec::new();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for (r, &c) in row_to_col.iter().enumerate().take(rows) {
        if c < cols && cost.get(r, c).is_finite() {
            matches.push((r, c));
            row_used[r] = true;
            col_used[c] = true;
        }
    }
    Assignment {
        matches,
        unmatched_tracks: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_detections: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}
