//! Dense real kernels: QR least squares, exact and randomized SVD, and
//! eigenvalues of small square matrices.

mod eig;
mod matrix;
mod qr;
mod svd;

pub use eig::{eig_magnitudes, eigenvalues, eigenvector, spectral_radius, EIG_SIZE_CAP};
pub use matrix::Matrix;
pub use qr::{orthonormal_basis, qr_solve_least_squares, qr_thin};
pub use svd::{svd_exact, svd_randomized, SvdResult};
