use crate::error::{Error, Result};

use super::Matrix;

/// Householder reflectors of a factorization, stored column by column.
struct Reflectors {
    /// `vs[k]` acts on rows `k..m`; unit norm or all-zero (identity).
    vs: Vec<Vec<f64>>,
}

impl Reflectors {
    /// Applies `H_{n-1} ... H_0` (that is, `Qᵀ`) to `b` in place.
    fn apply_qt(&self, b: &mut Matrix) {
        for (k, v) in self.vs.iter().enumerate() {
            reflect(b, k, v, 0);
        }
    }

    /// Applies `H_0 ... H_{n-1}` (that is, `Q`) to `b` in place.
    fn apply_q(&self, b: &mut Matrix) {
        for (k, v) in self.vs.iter().enumerate().rev() {
            reflect(b, k, v, 0);
        }
    }
}

/// `b[k.., col0..] -= 2 v (vᵀ b[k.., col0..])`.
fn reflect(b: &mut Matrix, k: usize, v: &[f64], col0: usize) {
    if v.iter().all(|&x| x == 0.0) {
        return;
    }
    let cols = b.cols();
    let mut w = vec![0.0; cols - col0];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &b.row(k + i)[col0..];
        for (wj, &bij) in w.iter_mut().zip(row) {
            *wj += vi * bij;
        }
    }
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &mut b.row_mut(k + i)[col0..];
        for (bij, &wj) in row.iter_mut().zip(&w) {
            *bij -= 2.0 * vi * wj;
        }
    }
}

/// Householder vector zeroing `x[1..]`; returns (v, alpha) with `H x = alpha e1`.
fn householder(x: &[f64]) -> (Vec<f64>, f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (vec![0.0; x.len()], 0.0);
    }
    let alpha = if x[0] > 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    if vn == 0.0 {
        return (vec![0.0; x.len()], x[0]);
    }
    for t in &mut v {
        *t /= vn;
    }
    (v, alpha)
}

fn factor_in_place(a: &mut Matrix, pivot: bool) -> (Reflectors, Vec<usize>) {
    let (m, n) = a.shape();
    let steps = n.min(m);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut vs = Vec::with_capacity(steps);
    for k in 0..steps {
        if pivot {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let s: f64 = (k..m).map(|i| a[(i, j)] * a[(i, j)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    let t = a[(i, k)];
                    a[(i, k)] = a[(i, best)];
                    a[(i, best)] = t;
                }
                perm.swap(k, best);
            }
        }
        let x: Vec<f64> = (k..m).map(|i| a[(i, k)]).collect();
        let (v, _) = householder(&x);
        reflect(a, k, &v, k);
        for i in k + 1..m {
            a[(i, k)] = 0.0;
        }
        vs.push(v);
    }
    (Reflectors { vs }, perm)
}

/// Orthonormal basis for the column space of `a` (`m×n`, `m ≥ n`): the thin
/// `Q` of a Householder QR. Always orthonormal, also for rank-deficient input.
pub fn orthonormal_basis(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::shape(format!("orthonormal_basis needs rows >= cols, got {m}x{n}")));
    }
    let mut work = a.clone();
    let (refl, _) = factor_in_place(&mut work, false);
    let mut q = Matrix::zeros(m, n);
    for i in 0..n {
        q[(i, i)] = 1.0;
    }
    refl.apply_q(&mut q);
    Ok(q)
}

/// Thin QR factorization `a = q·r` with `q` m×n and `r` n×n upper triangular.
pub fn qr_thin(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::shape(format!("qr_thin needs rows >= cols, got {m}x{n}")));
    }
    let mut work = a.clone();
    let (refl, _) = factor_in_place(&mut work, false);
    let r = work.slice_rows(0..n);
    let mut q = Matrix::zeros(m, n);
    for i in 0..n {
        q[(i, i)] = 1.0;
    }
    refl.apply_q(&mut q);
    Ok((q, r))
}

/// Least-squares solution `argmin_C ‖design·C − targets‖_F` via
/// column-pivoted Householder QR.
///
/// Fails with [`Error::RankDeficient`] when the numerical rank (relative
/// threshold `max(m, p)·ε` on the pivoted diagonal of `R`) is below `p`.
pub fn qr_solve_least_squares(design: &Matrix, targets: &Matrix) -> Result<Matrix> {
    let (m, p) = design.shape();
    if targets.rows() != m {
        return Err(Error::shape(format!(
            "least squares: design has {m} rows, targets {}",
            targets.rows()
        )));
    }
    if m < p {
        return Err(Error::RankDeficient { rank: m, cols: p });
    }
    if p == 0 {
        return Ok(Matrix::zeros(0, targets.cols()));
    }
    let mut r = design.clone();
    let (refl, perm) = factor_in_place(&mut r, true);

    let tol = (m.max(p) as f64) * f64::EPSILON * r[(0, 0)].abs();
    let rank = (0..p).take_while(|&k| r[(k, k)].abs() > tol).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, cols: p });
    }

    let mut qty = targets.clone();
    refl.apply_qt(&mut qty);

    let q = targets.cols();
    let mut sol = Matrix::zeros(p, q);
    for c in 0..q {
        for k in (0..p).rev() {
            let mut acc = qty[(k, c)];
            for j in k + 1..p {
                acc -= r[(k, j)] * sol[(j, c)];
            }
            sol[(k, c)] = acc / r[(k, k)];
        }
    }
    let mut out = Matrix::zeros(p, q);
    for (k, &orig) in perm.iter().enumerate() {
        out.row_mut(orig).copy_from_slice(sol.row(k));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};

    fn normal_equations(b: &Matrix, y: &Matrix) -> Matrix {
        // Gauss-Jordan on (BᵀB) | (BᵀY)
        let mut g = b.t_matmul(b).unwrap();
        let mut rhs = b.t_matmul(y).unwrap();
        let n = g.rows();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| g[(i, k)].abs().total_cmp(&g[(j, k)].abs()))
                .unwrap();
            for j in 0..n {
                let t = g[(k, j)];
                g[(k, j)] = g[(piv, j)];
                g[(piv, j)] = t;
            }
            for j in 0..rhs.cols() {
                let t = rhs[(k, j)];
                rhs[(k, j)] = rhs[(piv, j)];
                rhs[(piv, j)] = t;
            }
            let d = g[(k, k)];
            for i in 0..n {
                if i == k {
                    continue;
                }
                let f = g[(i, k)] / d;
                for j in 0..n {
                    g[(i, j)] -= f * g[(k, j)];
                }
                for j in 0..rhs.cols() {
                    rhs[(i, j)] -= f * rhs[(k, j)];
                }
            }
        }
        Matrix::from_fn(n, rhs.cols(), |i, j| rhs[(i, j)] / g[(i, i)])
    }

    #[test]
    fn identity_design_returns_targets() {
        let y = Matrix::from_fn(3, 2, |i, j| (i as f64) - 2.0 * j as f64 + 0.5);
        let c = qr_solve_least_squares(&Matrix::identity(3), &y).unwrap();
        assert!(c.sub(&y).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn exact_consistent_system() {
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let c = qr_solve_least_squares(&b, &y).unwrap();
        assert!((c[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = seeded(11);
        let b = gaussian_matrix(&mut rng, 50, 5);
        let y = gaussian_matrix(&mut rng, 50, 3);
        let c = qr_solve_least_squares(&b, &y).unwrap();
        let oracle = normal_equations(&b, &y);
        let rel = c.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm();
        assert!(rel < 1e-8, "rel {rel}");
    }

    #[test]
    fn residual_orthogonal_to_column_space() {
        let mut rng = seeded(12);
        for _ in 0..10 {
            let b = gaussian_matrix(&mut rng, 40, 6);
            let y = gaussian_matrix(&mut rng, 40, 2);
            let c = qr_solve_least_squares(&b, &y).unwrap();
            let resid = y.sub(&b.matmul(&c).unwrap()).unwrap();
            let proj = b.t_matmul(&resid).unwrap();
            assert!(proj.max_abs() < 1e-8 * y.frobenius_norm());
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        // third column = 2 × first column
        let b = Matrix::from_fn(10, 3, |i, j| match j {
            0 => i as f64,
            1 => (i * i) as f64 + 1.0,
            _ => 2.0 * i as f64,
        });
        let y = Matrix::zeros(10, 1);
        match qr_solve_least_squares(&b, &y) {
            Err(Error::RankDeficient { rank, cols }) => {
                assert_eq!(rank, 2);
                assert_eq!(cols, 3);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn thin_qr_reconstructs_and_is_orthonormal() {
        let mut rng = seeded(13);
        let a = gaussian_matrix(&mut rng, 12, 5);
        let (q, r) = qr_thin(&a).unwrap();
        assert!(q.matmul(&r).unwrap().sub(&a).unwrap().max_abs() < 1e-12);
        let qtq = q.t_matmul(&q).unwrap();
        assert!(qtq.sub(&Matrix::identity(5)).unwrap().max_abs() < 1e-13);
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn basis_of_rank_deficient_input_is_orthonormal() {
        let x = Matrix::from_fn(8, 1, |i, _| i as f64 + 1.0);
        let a = Matrix::hstack(&[&x, &x, &x.scale(2.0)]).unwrap();
        let q = orthonormal_basis(&a).unwrap();
        let qtq = q.t_matmul(&q).unwrap();
        assert!(qtq.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-13);
    }
}
