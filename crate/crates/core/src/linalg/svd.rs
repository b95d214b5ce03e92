//! One-sided (Hestenes) Jacobi SVD for square matrices.
//!
//! Pairs of columns of a working copy of the input are rotated until all are
//! mutually orthogonal. The column norms are then the singular values, the
//! normalized columns form `U`, and the accumulated rotations form `V`.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 64;
pub const MAX_DIM: usize = 4096;

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.s.len();
        let mut us = self.u.clone();
        for i in 0..n {
            for (j, &sj) in self.s.iter().enumerate() {
                us[(i, j)] *= sj;
            }
        }
        us.matmul_t(&self.v).expect("square factors")
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::invalid(format!("svd requires a square matrix, got {rows}x{cols}")));
    }
    if rows > MAX_DIM {
        return Err(Error::invalid(format!("svd dimension {rows} exceeds {MAX_DIM}")));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let n = rows;
    // Row k of `a` holds column k of the working matrix; likewise for `v`.
    let mut a = m.transpose();
    let mut v = Matrix::identity(n);

    let tol = f64::EPSILON * n as f64;
    // columns this small are round-off from a rank-deficient input
    let negligible = (tol * m.frobenius_norm()).powi(2);
    let mut converged = n < 2;
    let mut residual = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(a.row(p), a.row(p));
                let beta = dot(a.row(q), a.row(q));
                let gamma = dot(a.row(p), a.row(q));
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let norms: Vec<f64> = (0..n).map(|k| dot(a.row(k), a.row(k)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let zero_cut = scale * f64::EPSILON * n as f64;

    let mut s = Vec::with_capacity(n);
    // rows of ut / vt are the singular vectors
    let mut ut: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vt = Matrix::zeros(n, n);
    let mut missing = Vec::new();
    for (k, &src) in order.iter().enumerate() {
        vt.row_mut(k).copy_from_slice(v.row(src));
        let sigma = norms[src];
        if sigma > zero_cut && sigma > 0.0 {
            s.push(sigma);
            ut.push(a.row(src).iter().map(|x| x / sigma).collect());
        } else {
            s.push(0.0);
            ut.push(Vec::new());
            missing.push(k);
        }
    }
    if !missing.is_empty() {
        complete_basis(&mut ut, &missing, n);
    }

    let mut u = Matrix::zeros(n, n);
    for (j, col) in ut.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            u[(i, j)] = x;
        }
    }
    Ok(SvdResult {
        u,
        s,
        v: vt.transpose(),
    })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the `missing` slots with unit vectors orthogonal to all others,
/// drawn from the standard basis by Gram-Schmidt.
fn complete_basis(vecs: &mut [Vec<f64>], missing: &[usize], n: usize) {
    let mut candidate = 0;
    for &slot in missing {
        loop {
            assert!(candidate < n, "basis completion exhausted");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _pass in 0..2 {
                for other in vecs.iter().filter(|o| !o.is_empty()) {
                    let p = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= p * o;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= norm);
                vecs[slot] = e;
                break;
            }
        }
    }
}
