//! Bounded-variable least squares via a primal active-set method on the
//! normal equations.
//!
//! Minimizes `0.5 x'Gx - h'x` subject to `lo <= x <= hi`, where `G = A'A` and
//! `h = A'b`. With `G` positive definite the minimizer is unique and the
//! method terminates finitely.

use crate::error::{Error, Result};

/// Gram matrix `A'A` of a row-major `rows x cols` matrix, with the ridge
/// `1e-8 * trace / cols` added to the diagonal when it is singular.
#[derive(Clone, Debug)]
pub struct Normal {
    pub gram: Vec<f64>,
    pub cols: usize,
    pub ridge: f64,
}

impl Normal {
    pub fn from_rows(a: &[f64], cols: usize) -> Self {
        let mut gram = vec![0.0; cols * cols];
        for row in a.chunks(cols) {
            for i in 0..cols {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    gram[i * cols + j] += row[i] * row[j];
                }
            }
        }
        Normal::from_gram(gram, cols)
    }

    pub fn from_gram(mut gram: Vec<f64>, cols: usize) -> Self {
        let mut ridge = 0.0;
        if cholesky(&gram, cols).is_none() {
            let trace: f64 = (0..cols).map(|i| gram[i * cols + i]).sum();
            ridge = 1e-8 * trace / cols as f64;
            if ridge <= 0.0 {
                ridge = 1e-12;
            }
            for i in 0..cols {
                gram[i * cols + i] += ridge;
            }
        }
        Normal { gram, cols, ridge }
    }

    /// `A'b` for the same row-major `A`.
    pub fn rhs(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.cols];
        for (row, &bi) in a.chunks(self.cols).zip(b) {
            for (hj, &aij) in h.iter_mut().zip(row) {
                *hj += aij * bi;
            }
        }
        h
    }
}

/// Cholesky factor (lower, row-major) or `None` when not numerically positive definite.
fn cholesky(g: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| g[i * n + i].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= tol {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Solves the box-constrained quadratic program for one right-hand side.
pub fn solve_box(normal: &Normal, h: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let n = normal.cols;
    let g = &normal.gram;
    let max_iter = 50 + 20 * n;
    let hscale = 1.0 + h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let gscale = 1.0 + g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-13 * hscale.max(gscale);

    let mut x = vec![lo; n];
    let mut state = vec![Bound::Lower; n];

    for _ in 0..max_iter {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let mut z = x.clone();
        if !free.is_empty() {
            let nf = free.len();
            let mut sub = vec![0.0; nf * nf];
            let mut rhs = vec![0.0; nf];
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = h[i];
                for j in 0..n {
                    if state[j] != Bound::Free {
                        rhs[a] -= g[i * n + j] * x[j];
                    }
                }
                for (b, &j) in free.iter().enumerate() {
                    sub[a * nf + b] = g[i * n + j];
                }
            }
            let l = cholesky(&sub, nf).ok_or(Error::SolverNonConvergence { iterations: 0 })?;
            cholesky_solve(&l, nf, &mut rhs);
            for (a, &i) in free.iter().enumerate() {
                z[i] = rhs[a];
            }
        }

        let feasible = free.iter().all(|&i| z[i] >= lo && z[i] <= hi);
        if feasible {
            x = z;
            // multipliers of the bound constraints from the gradient Gx - h
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let grad: f64 = (0..n).map(|j| g[i * n + j] * x[j]).sum::<f64>() - h[i];
                let lambda = match state[i] {
                    Bound::Free => continue,
                    Bound::Lower => grad,
                    Bound::Upper => -grad,
                };
                if lambda < -tol && worst.is_none_or(|(_, w)| lambda < w) {
                    worst = Some((i, lambda));
                }
            }
            match worst {
                None => return Ok(x),
                Some((i, _)) => state[i] = Bound::Free,
            }
        } else {
            // walk toward z until the first free variable hits a bound
            let steps: Vec<(usize, f64, Bound)> = free
                .iter()
                .filter_map(|&i| {
                    let d = z[i] - x[i];
                    if z[i] < lo {
                        Some((i, ((lo - x[i]) / d).max(0.0), Bound::Lower))
                    } else if z[i] > hi {
                        Some((i, ((hi - x[i]) / d).max(0.0), Bound::Upper))
                    } else {
                        None
                    }
                })
                .collect();
            let alpha = steps.iter().map(|s| s.1).fold(1.0f64, f64::min);
            for &i in &free {
                x[i] += alpha * (z[i] - x[i]);
            }
            for &(i, step, bound) in &steps {
                if step <= alpha {
                    x[i] = if bound == Bound::Lower { lo } else { hi };
                    state[i] = bound;
                }
            }
        }
    }
    Err(Error::SolverNonConvergence {
        iterations: max_iter,
    })
}

/// `min ||Ax - b||^2` subject to `lo <= x <= hi` for row-major `A`.
pub fn bounded_least_squares(
    a: &[f64],
    b: &[f64],
    cols: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>> {
    let normal = Normal::from_rows(a, cols);
    let h = normal.rhs(a, b);
    solve_box(&normal, &h, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual_norm(a: &[f64], b: &[f64], x: &[f64]) -> f64 {
        a.chunks(x.len())
            .zip(b)
            .map(|(row, bi)| {
                let r: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - bi;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn interior_solution_is_unconstrained_lsq() {
        // A = I (2x2) stacked twice, b averages to (0.3, 0.6)
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let b = [0.2, 0.5, 0.4, 0.7];
        let x = bounded_least_squares(&a, &b, 2, 0.0, 1.0).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn active_bounds() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let x = bounded_least_squares(&a, &[-0.5, 1.7], 2, 0.0, 1.0).unwrap();
        assert_eq!(x, vec![0.0, 1.0]);
    }

    #[test]
    fn singular_system_gets_ridge() {
        // duplicated column
        let a = [0.5, 0.5, 0.5, 0.5, 1.0, 1.0];
        let normal = Normal::from_rows(&a, 2);
        assert!(normal.ridge > 0.0);
        let x = bounded_least_squares(&a, &[0.3, 0.3, 0.6], 2, 0.0, 1.0).unwrap();
        assert!(residual_norm(&a, &[0.3, 0.3, 0.6], &x) < 1e-6);
    }

    proptest! {
        #[test]
        fn never_worse_than_zero_or_clamped_unconstrained(
            a in proptest::collection::vec(0.0f64..1.0, 24),
            b in proptest::collection::vec(-0.5f64..1.5, 8),
        ) {
            let x = bounded_least_squares(&a, &b, 3, 0.0, 1.0).unwrap();
            prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
            let r = residual_norm(&a, &b, &x);
            prop_assert!(r <= residual_norm(&a, &b, &[0.0; 3]) + 1e-9);
            let normal = Normal::from_rows(&a, 3);
            let h = normal.rhs(&a, &b);
            if normal.ridge == 0.0 {
                let l = cholesky(&normal.gram, 3).unwrap();
                let mut unc = h.clone();
                cholesky_solve(&l, 3, &mut unc);
                let clamped: Vec<f64> = unc.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                prop_assert!(r <= residual_norm(&a, &b, &clamped) + 1e-9);
            }
        }
    }
}
