//! Iterative-shrinkage solver for the sparse recovery step.
//!
//! Solves `min ||d||_1 subject to ||y - Phi d||_2 <= epsilon` by FISTA on
//! the LASSO relaxation with geometric continuation in the shrinkage
//! weight, followed by a debiasing least-squares on the detected support.
//! For the exactly sparse, integer-valued instances reconciliation
//! produces, the debiased solution hits the constraint exactly once the
//! support is found.

use thiserror::Error;

use super::SensingMatrix;

/// Iteration budget across all continuation stages.
const MAX_TOTAL_ITERATIONS: usize = 2000;
/// FISTA iterations per continuation stage.
const STAGE_ITERATIONS: usize = 150;
/// Shrinkage-weight decay between stages.
const LAMBDA_DECAY: f64 = 0.5;
/// Support detection threshold, relative to the largest entry.
const SUPPORT_FRACTION: f64 = 0.3;
/// Continuation stages; with decay 0.5 this spans nine decades.
const MAX_STAGES: usize = 40;

/// The solver could not reach the residual constraint.
#[derive(Debug, Clone, Error)]
#[error("l1 solver did not converge: residual {residual:.3e} after {iterations} iterations")]
pub struct SolverFailure {
    pub residual: f64,
    pub iterations: usize,
    /// The best (smallest-residual) iterate found; an eavesdropper's view
    /// of an under-determined system, kept so callers can inspect it.
    pub best_estimate: Vec<f64>,
}

struct Dense {
    m: usize,
    n: usize,
    a: Vec<f64>, // row-major
}

impl Dense {
    fn from_matrix(matrix: &SensingMatrix) -> Self {
        Dense {
            m: matrix.rows,
            n: matrix.cols,
            a: matrix.entries().iter().map(|&e| e as f64).collect(),
        }
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.a[r * self.n..(r + 1) * self.n];
            *slot = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn rmatvec(&self, r: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (ri, &rv) in r.iter().enumerate() {
            if rv == 0.0 {
                continue;
            }
            let row = &self.a[ri * self.n..(ri + 1) * self.n];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * rv;
            }
        }
    }

    /// Largest eigenvalue of A^T A by power iteration.
    fn lipschitz(&self) -> f64 {
        let mut v = vec![1.0 / (self.n as f64).sqrt(); self.n];
        let mut av = vec![0.0; self.m];
        let mut w = vec![0.0; self.n];
        let mut lambda = 1.0;
        for _ in 0..30 {
            self.matvec(&v, &mut av);
            self.rmatvec(&av, &mut w);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 1.0;
            }
            lambda = norm;
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
        }
        lambda
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Least squares of `y` on the chosen columns via normal equations.
/// Returns the coefficient vector and the residual norm.
#[allow(clippy::needless_range_loop)]
fn debias(dense: &Dense, y: &[f64], support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let k = support.len();
    if k == 0 {
        return None;
    }
    let mut gram = vec![vec![0.0_f64; k]; k];
    let mut rhs = vec![0.0_f64; k];
    for (r, &yr) in y.iter().enumerate() {
        let row = &dense.a[r * dense.n..(r + 1) * dense.n];
        for (i, &ci) in support.iter().enumerate() {
            let ai = row[ci];
            rhs[i] += ai * yr;
            for (j, &cj) in support.iter().enumerate().skip(i) {
                gram[i][j] += ai * row[cj];
            }
        }
    }
    for i in 0..k {
        gram[i][i] += 1e-10; // guards against coincident columns
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }
    let coef = solve_symmetric(&mut gram, &mut rhs)?;

    let mut fit = vec![0.0_f64; dense.m];
    for (r, f) in fit.iter_mut().enumerate() {
        let row = &dense.a[r * dense.n..(r + 1) * dense.n];
        *f = support.iter().zip(&coef).map(|(&c, &x)| row[c] * x).sum();
    }
    let residual = norm2(&y.iter().zip(&fit).map(|(a, b)| a - b).collect::<Vec<f64>>());
    Some((coef, residual))
}

#[allow(clippy::needless_range_loop)]
fn solve_symmetric(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Approximately minimize `||d||_1` subject to `||y - Phi d||_2 <= epsilon`.
///
/// On success the returned vector's residual is at most `epsilon + 1e-6`.
pub fn solve_l1(
    delta_y: &[i32],
    matrix: &SensingMatrix,
    epsilon: f64,
) -> Result<Vec<f64>, SolverFailure> {
    assert_eq!(delta_y.len(), matrix.rows, "measurement length mismatch");
    let dense = Dense::from_matrix(matrix);
    let y: Vec<f64> = delta_y.iter().map(|&v| v as f64).collect();
    let n = dense.n;

    if norm2(&y) <= epsilon {
        return Ok(vec![0.0; n]);
    }

    let lip = dense.lipschitz() * 1.02;
    let mut corr = vec![0.0_f64; n];
    dense.rmatvec(&y, &mut corr);
    let mut lambda = 0.5 * corr.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));

    let mut d = vec![0.0_f64; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0usize;

    let mut av = vec![0.0_f64; dense.m];
    let mut grad = vec![0.0_f64; n];
    let mut residual_vec = vec![0.0_f64; dense.m];

    for _stage in 0..MAX_STAGES {
        // FISTA at the current shrinkage weight, warm-started
        let mut z = d.clone();
        let mut t = 1.0_f64;
        for _ in 0..STAGE_ITERATIONS {
            iterations += 1;
            dense.matvec(&z, &mut av);
            for ((res, &a), &yy) in residual_vec.iter_mut().zip(&av).zip(&y) {
                *res = a - yy;
            }
            dense.rmatvec(&residual_vec, &mut grad);

            let mut max_abs = 0.0_f64;
            let mut max_step = 0.0_f64;
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_new;
            for i in 0..n {
                let raw = z[i] - grad[i] / lip;
                let mag = raw.abs() - lambda / lip;
                let d_new = if mag > 0.0 { raw.signum() * mag } else { 0.0 };
                let step = (d_new - d[i]).abs();
                z[i] = d_new + momentum * (d_new - d[i]);
                d[i] = d_new;
                max_abs = max_abs.max(d_new.abs());
                max_step = max_step.max(step);
            }
            t = t_new;
            if max_step < 1e-5 * max_abs.max(1.0) || iterations >= MAX_TOTAL_ITERATIONS {
                break;
            }
        }

        // support detection and debias
        let max_abs = d.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        if max_abs > 0.0 {
            let threshold = SUPPORT_FRACTION * max_abs;
            let mut support: Vec<usize> = (0..n).filter(|&i| d[i].abs() > threshold).collect();
            if support.len() > dense.m {
                support.sort_by(|&a, &b| d[b].abs().partial_cmp(&d[a].abs()).unwrap());
                support.truncate(dense.m);
                support.sort_unstable();
            }
            if let Some((coef, residual)) = debias(&dense, &y, &support) {
                if residual <= epsilon + 1e-6 {
                    let mut out = vec![0.0_f64; n];
                    for (&c, &x) in support.iter().zip(&coef) {
                        out[c] = x;
                    }
                    return Ok(out);
                }
                if best.as_ref().is_none_or(|(r, _)| residual < *r) {
                    let mut out = vec![0.0_f64; n];
                    for (&c, &x) in support.iter().zip(&coef) {
                        out[c] = x;
                    }
                    best = Some((residual, out));
                }
            }
        }

        lambda *= LAMBDA_DECAY;
        if iterations >= MAX_TOTAL_ITERATIONS || lambda < 1e-12 {
            break;
        }
    }

    let (residual, best_estimate) = best.unwrap_or_else(|| (norm2(&y), vec![0.0; n]));
    Err(SolverFailure {
        residual,
        iterations,
        best_estimate,
    })
}
