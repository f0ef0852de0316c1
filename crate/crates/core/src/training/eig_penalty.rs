//! Penalty `Σ max(0, |λ_i| − 1)` on the inner latent dynamics and its
//! gradient with respect to the matrix entries.

use log::warn;
use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{eigenvalues, eigenvector, Matrix};

/// Step of the central differences used for the degenerate fallback.
const FD_STEP: f64 = 1e-6;
/// Eigenvalues closer than this (relative to the matrix scale) are
/// treated as colliding.
const COLLISION_TOL: f64 = 1e-6;

/// `Σ_i max(0, |λ_i| − 1)`; eigenvalues on the unit circle contribute 0.
pub fn eig_penalty(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| (l.re.hypot(l.im) - 1.0).max(0.0))
        .sum())
}

/// Gradient of [`eig_penalty`] with respect to every entry of `a`.
///
/// For a simple eigenvalue with right vector `x` and left vector `y`
/// (`Aᵀy = λy`), `∂λ/∂A_ij = y_i x_j / (yᵀx)` and
/// `∂|λ|/∂A_ij = Re(λ̄ ∂λ/∂A_ij) / |λ|`. If a penalized eigenvalue is
/// (nearly) repeated the derivative is ill-defined; a warning is logged and
/// central finite differences are returned instead.
pub fn eig_penalty_gradient(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let lambdas = eigenvalues(a)?;
    let mut grad = Matrix::zeros(n, n);
    let scale = a.max_abs().max(1.0);

    for (i, &lam) in lambdas.iter().enumerate() {
        let mag = lam.re.hypot(lam.im);
        if mag <= 1.0 {
            continue;
        }
        let collides = lambdas
            .iter()
            .enumerate()
            .any(|(j, &other)| j != i && (other - lam).norm() < COLLISION_TOL * scale);
        if collides {
            warn!("DegenerateSpectrum: penalized eigenvalue {lam} is repeated; using finite differences");
            return finite_difference_gradient(a);
        }
        let x = eigenvector(a, lam, false)?;
        let y = eigenvector(a, lam, true)?;
        let denom: Complex64 = y.iter().zip(&x).map(|(yi, xj)| yi * xj).sum();
        if denom.norm() < COLLISION_TOL {
            warn!("DegenerateSpectrum: eigenvalue {lam} is defective; using finite differences");
            return finite_difference_gradient(a);
        }
        let w = lam.conj() / (denom * mag);
        for r in 0..n {
            for c in 0..n {
                grad[(r, c)] += (w * y[r] * x[c]).re;
            }
        }
    }
    Ok(grad)
}

fn finite_difference_gradient(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut grad = Matrix::zeros(n, n);
    let mut work = a.clone();
    for r in 0..n {
        for c in 0..n {
            let orig = work[(r, c)];
            work[(r, c)] = orig + FD_STEP;
            let plus = eig_penalty(&work)?;
            work[(r, c)] = orig - FD_STEP;
            let minus = eig_penalty(&work)?;
            work[(r, c)] = orig;
            grad[(r, c)] = (plus - minus) / (2.0 * FD_STEP);
        }
    }
    Ok(grad)
}
