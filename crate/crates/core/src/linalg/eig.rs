use num_complex::Complex64;

use crate::error::{Error, Result};

use super::Matrix;

/// Largest matrix accepted by the dense eigenvalue routines. They only ever
/// run on latent operators.
pub const EIG_SIZE_CAP: usize = 512;

const MAX_QR_ITERS: usize = 60;

fn check_square(a: &Matrix) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::shape(format!("eigenvalues need a square matrix, got {:?}", a.shape())));
    }
    if a.rows() > EIG_SIZE_CAP {
        return Err(Error::shape(format!(
            "matrix of order {} exceeds eigenvalue cap {EIG_SIZE_CAP}",
            a.rows()
        )));
    }
    if !a.all_finite() {
        return Err(Error::NonFinite("eigenvalue input".into()));
    }
    Ok(a.rows())
}

/// Householder reduction to upper Hessenberg form (similarity transform).
fn hessenberg(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        for t in &mut v {
            *t /= vn;
        }
        // H ← P H, P = I − 2vvᵀ acting on rows k+1..n
        for j in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * h[(k + 1 + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, j)] -= 2.0 * vi * dot;
            }
        }
        // H ← H P on columns k+1..n
        for i in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(j, vj)| vj * h[(i, k + 1 + j)]).sum();
            for (j, vj) in v.iter().enumerate() {
                h[(i, k + 1 + j)] -= 2.0 * vj * dot;
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    h
}

/// All eigenvalues of a real square matrix (Hessenberg reduction followed by
/// Francis double-shift QR). Complex eigenvalues come in conjugate pairs.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = hessenberg(a);
    // 1-based working copy; keeps the index arithmetic of the classic
    // formulation readable.
    let mut m = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            m[i + 1][j + 1] = h[(i, j)];
        }
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    francis_qr(&mut m, n, &mut wr, &mut wi)?;
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

#[allow(clippy::many_single_char_names)]
fn francis_qr(a: &mut [Vec<f64>], n: usize, wr: &mut [f64], wi: &mut [f64]) -> Result<()> {
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                y = a[nn - 1][nn - 1];
                w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_QR_ITERS {
                        return Err(Error::ConvergenceFailure {
                            routine: "hessenberg qr",
                            iterations: its,
                        });
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a[i][i] -= x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nn {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nn - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn == 0 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok(())
}

/// Moduli of all eigenvalues, sorted non-increasing. A complex pair
/// contributes two equal magnitudes.
pub fn eig_magnitudes(a: &Matrix) -> Result<Vec<f64>> {
    let mut mags: Vec<f64> = eigenvalues(a)?
        .into_iter()
        .map(|l| l.re.hypot(l.im))
        .collect();
    mags.sort_by(|x, y| y.total_cmp(x));
    Ok(mags)
}

/// Largest eigenvalue magnitude; 0 for an empty matrix.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eig_magnitudes(a)?.first().copied().unwrap_or(0.0))
}

/// Eigenvector for a known eigenvalue by complex inverse iteration.
///
/// With `left = true` returns `y` such that `yᵀ A = λ yᵀ` (the transpose
/// problem `Aᵀ y = λ y`, no conjugation).
pub fn eigenvector(a: &Matrix, lambda: Complex64, left: bool) -> Result<Vec<Complex64>> {
    let n = check_square(a)?;
    let scale = a.max_abs().max(1.0);
    let mut lu: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v = if left { a[(j, i)] } else { a[(i, j)] };
                    let mut c = Complex64::new(v, 0.0);
                    if i == j {
                        c -= lambda;
                    }
                    c
                })
                .collect()
        })
        .collect();
    let tiny = f64::EPSILON * scale;
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| lu[i][k].norm().total_cmp(&lu[j][k].norm()))
            .unwrap_or(k);
        lu.swap(k, piv);
        perm.swap(k, piv);
        if lu[k][k].norm() < tiny {
            lu[k][k] = Complex64::new(tiny, 0.0);
        }
        for i in k + 1..n {
            let f = lu[i][k] / lu[k][k];
            lu[i][k] = f;
            for j in k + 1..n {
                let t = lu[k][j];
                lu[i][j] -= f * t;
            }
        }
    }
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.1 * (i as f64).sin(), 0.05 * (i as f64).cos()))
        .collect();
    for _ in 0..3 {
        let b: Vec<Complex64> = perm.iter().map(|&p| x[p]).collect();
        let mut yv = b;
        for i in 0..n {
            for j in 0..i {
                let t = lu[i][j] * yv[j];
                yv[i] -= t;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let t = lu[i][j] * yv[j];
                yv[i] -= t;
            }
            yv[i] /= lu[i][i];
        }
        let norm = yv.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::ConvergenceFailure {
                routine: "inverse iteration",
                iterations: 3,
            });
        }
        x = yv.into_iter().map(|c| c / norm).collect();
    }
    Ok(x)
}
