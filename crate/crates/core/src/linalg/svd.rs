use crate::error::{Error, Result};
use crate::rng::{gaussian_matrix, seeded};

use super::qr::{orthonormal_basis, qr_thin};
use super::Matrix;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `a ≈ u·diag(s)·vt`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `n×r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub s: Vec<f64>,
    /// `r×m`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, &s) in self.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factor shapes")
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(mut self, k: usize) -> Self {
        let k = k.min(self.s.len());
        self.u = self.u.slice_cols(0..k);
        self.s.truncate(k);
        self.vt = self.vt.slice_rows(0..k);
        self
    }
}

/// Full thin SVD by QR preconditioning followed by one-sided Jacobi.
pub fn svd_exact(a: &Matrix) -> Result<SvdResult> {
    if !a.all_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (m, n) = a.shape();
    if m < n {
        let t = svd_exact(&a.transpose())?;
        return Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    if n == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(m, 0),
            s: Vec::new(),
            vt: Matrix::zeros(0, 0),
        });
    }
    let (q, r) = qr_thin(a)?;
    let (ur, s, v) = jacobi_square(&r)?;
    Ok(SvdResult {
        u: q.matmul(&ur)?,
        s,
        vt: v.transpose(),
    })
}

/// One-sided Jacobi on a square matrix. Returns `(u, s, v)` with
/// `a = u·diag(s)·vᵀ`, singular values sorted non-increasing.
fn jacobi_square(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let n = a.rows();
    // Rows of `w` are the columns of the working matrix.
    let mut w = a.transpose();
    let mut v = Matrix::identity(n);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (x, y) in w.row(p).iter().zip(w.row(q)) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            routine: "jacobi svd",
            iterations: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| w.row(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let tiny = smax * (n as f64) * f64::EPSILON;

    let mut u = Matrix::zeros(n, n);
    let mut vs = Matrix::zeros(n, n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > tiny && norms[j] > 0.0 {
            for i in 0..n {
                u[(i, k)] = w[(j, i)] / norms[j];
            }
        } else {
            missing.push(k);
        }
        // rows of `v` hold the accumulated right vectors
        for i in 0..n {
            vs[(i, k)] = v[(j, i)];
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok((u, s, vs))
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills columns listed in `missing` with unit vectors orthogonal to all
/// other columns (modified Gram-Schmidt, two passes).
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let n = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !missing.contains(c)).collect();
    let mut candidate = 0;
    for &col in missing {
        loop {
            let mut e = vec![0.0; n];
            e[candidate % n] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let dot: f64 = (0..n).map(|i| u[(i, f)] * e[i]).sum();
                    for (i, ei) in e.iter_mut().enumerate() {
                        *ei -= dot * u[(i, f)];
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, ei) in e.iter().enumerate() {
                    u[(i, col)] = ei / norm;
                }
                filled.push(col);
                break;
            }
        }
    }
}

/// Randomized truncated SVD with a Gaussian sketch of width
/// `rank + oversample` and `power_iters` rounds of re-orthonormalized
/// subspace iteration.
pub fn svd_randomized(
    a: &Matrix,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let width = rank + oversample;
    if rank == 0 || width > m.min(n) {
        return Err(Error::InvalidRank {
            rank,
            reason: format!(
                "rank + oversample = {width} must be in 1..={} for a {m}x{n} matrix",
                m.min(n)
            ),
        });
    }
    let mut rng = seeded(seed);
    let omega = gaussian_matrix(&mut rng, n, width);
    let mut q = orthonormal_basis(&a.matmul(&omega)?)?;
    for _ in 0..power_iters {
        let z = orthonormal_basis(&a.t_matmul(&q)?)?;
        q = orthonormal_basis(&a.matmul(&z)?)?;
    }
    let b = q.t_matmul(a)?;
    let small = svd_exact(&b)?;
    Ok(SvdResult {
        u: q.matmul(&small.u)?,
        s: small.s,
        vt: small.vt,
    }
    .truncate(rank))
}
