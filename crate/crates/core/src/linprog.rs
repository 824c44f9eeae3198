//! A small dense simplex solver for the allocation linear programs.
//!
//! Solves `max c·x  s.t.  A x ≤ b, x ≥ 0` with `b ≥ 0`, so the slack basis
//! is feasible and no phase-1 search is needed. Bland's rule keeps the
//! pivoting cycle-free; problems here are tiny (tens of variables, at most
//! a few thousand constraints).

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Unbounded,
}

const EPS: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-11;

/// Maximizes `c·x` subject to `a·x ≤ b`, `x ≥ 0`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpOutcome> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension(format!(
            "LP needs {}x{} constraint matrix and {} bounds",
            m, n, m
        )));
    }
    if let Some((i, &bi)) = b.iter().enumerate().find(|(_, &bi)| bi < -EPS) {
        return Err(Error::Internal(format!(
            "LP right-hand side {} is negative ({}); origin must be feasible",
            i, bi
        )));
    }

    // Tableau: rows = constraints, columns = n structural + m slack + rhs.
    let cols = n + m + 1;
    let mut t = vec![vec![0.0; cols]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][cols - 1] = b[i].max(0.0);
    }
    // Objective row holds the negated reduced costs.
    let mut obj = vec![0.0; cols];
    obj[..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 2000 * (n + m + 1);
    for _ in 0..max_pivots {
        // Bland: entering column = lowest index with positive reduced cost.
        let Some(enter) = (0..n + m).find(|&j| obj[j] > EPS) else {
            let mut x = vec![0.0; n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = t[i][cols - 1];
                }
            }
            let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
            return Ok(LpOutcome::Optimal { value, x });
        };
        // Ratio test; Bland tie-break on the smallest basis index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > PIVOT_EPS {
                let ratio = t[i][cols - 1] / t[i][enter];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_EPS
                            || (ratio < lr + PIVOT_EPS && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((leave, _)) = leave else {
            return Ok(LpOutcome::Unbounded);
        };

        // Pivot.
        let pivot = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= pivot;
        }
        for i in 0..m {
            if i != leave && t[i][enter].abs() > 0.0 {
                let f = t[i][enter];
                for j in 0..cols {
                    t[i][j] -= f * t[leave][j];
                }
            }
        }
        let f = obj[enter];
        if f.abs() > 0.0 {
            for j in 0..cols {
                obj[j] -= f * t[leave][j];
            }
        }
        basis[leave] = enter;
    }
    Err(Error::Internal("simplex did not terminate".into()))
}

/// Tests whether `point` lies in the downward closure of the convex hull of
/// `vertices` (all nonnegative, origin included).
///
/// Solves `max θ  s.t.  θ·p ≤ Σ μ_i v_i, Σ μ_i ≤ 1, μ ≥ 0`; the point is a
/// member exactly when the optimum reaches 1.
pub fn in_downward_hull(vertices: &[Vec<f64>], point: &[f64], tol: f64) -> Result<bool> {
    let d = point.len();
    if point.iter().all(|&p| p <= tol) {
        return Ok(true);
    }
    if vertices.is_empty() {
        return Ok(false);
    }
    let k = vertices.len();
    // Variables: μ_1..μ_k, θ.
    let mut c = vec![0.0; k + 1];
    c[k] = 1.0;
    let mut a = Vec::with_capacity(d + 1);
    let mut b = Vec::with_capacity(d + 1);
    for dim in 0..d {
        let mut row = vec![0.0; k + 1];
        for (i, v) in vertices.iter().enumerate() {
            row[i] = -v[dim];
        }
        row[k] = point[dim];
        a.push(row);
        b.push(0.0);
    }
    let mut row = vec![1.0; k + 1];
    row[k] = 0.0;
    a.push(row);
    b.push(1.0);
    // θ is also bounded above to keep the LP finite when a coordinate is 0.
    let mut theta_cap = vec![0.0; k + 1];
    theta_cap[k] = 1.0;
    a.push(theta_cap);
    b.push(2.0);
    match maximize(&c, &a, &b)? {
        LpOutcome::Optimal { value, .. } => Ok(value >= 1.0 - tol),
        LpOutcome::Unbounded => Ok(true),
    }
}
