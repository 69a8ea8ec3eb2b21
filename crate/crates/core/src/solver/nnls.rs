//! Lawson-Hanson active-set solver for `min ‖A x - b‖` subject to `x ≥ 0`,
//! optionally with some components left unconstrained.

use nalgebra::{DMatrix, DVector};

use super::lsqr::dense_least_squares;
use crate::error::{Error, Result};

fn subproblem(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Result<DVector<f64>> {
    let sub = a.select_columns(passive);
    dense_least_squares(&sub, b)
}

pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    nnls_partial(a, b, &vec![false; a.ncols()])
}

/// [`nnls`] where components with `free[j]` set may take any sign. Free
/// components stay in the passive set throughout.
pub fn nnls_partial(a: &DMatrix<f64>, b: &DVector<f64>, free: &[bool]) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::dim("nnls right-hand side", m, b.len()));
    }
    if free.len() != n {
        return Err(Error::dim("nnls free mask", n, free.len()));
    }
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(x);
    }
    let anorm = a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * anorm * m.max(n) as f64 * b.norm().max(1.0);
    let mut passive = free.to_vec();
    let free_idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
    if !free_idx.is_empty() {
        let sp = subproblem(a, b, &free_idx)?;
        for (k, &j) in free_idx.iter().enumerate() {
            x[j] = sp[k];
        }
    }
    // Variables whose trial value came out non-positive right after entering;
    // they stay out until x changes.
    let mut blocked = vec![false; n];
    let max_outer = 3 * n + 10;

    let mut outer = 0;
    loop {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(t) = candidate else { break };
        outer += 1;
        if outer > max_outer {
            return Err(Error::NoConvergence {
                iterations: outer,
                residual: (a * &x - b).norm(),
            });
        }
        passive[t] = true;

        let mut first = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sp = subproblem(a, b, &idx)?;
            if first {
                first = false;
                let kt = idx.iter().position(|&j| j == t).unwrap_or(0);
                if sp[kt] <= tol {
                    passive[t] = false;
                    blocked[t] = true;
                    break;
                }
                blocked.fill(false);
            }
            let feasible = idx.iter().zip(sp.iter()).all(|(&j, &v)| free[j] || v > tol);
            if feasible {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = sp[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if !free[j] && sp[k] <= tol {
                    let denom = x[j] - sp[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sp[k] - x[j]);
                if !free[j] && x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !(0..n).any(|j| passive[j] && !free[j]) {
                break;
            }
        }
    }
    Ok(x)
}
