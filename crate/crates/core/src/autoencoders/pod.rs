use crate::error::{Error, Result};
use crate::linalg::{svd_randomized, Matrix};

const POD_OVERSAMPLE: usize = 10;
const POD_POWER_ITERS: usize = 2;

/// Truncated POD basis of a snapshot matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// `n_space × r`, orthonormal columns.
    pub modes: Matrix,
    /// Temporal mean per element; all zeros for an uncentered fit.
    pub mean: Vec<f64>,
    /// Fraction of the (centered) snapshot energy captured by each mode.
    pub energy: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub centered: bool,
}

/// Mean-centered POD of `x [n_space × n_time]` keeping `r` modes.
pub fn pod_fit(x: &Matrix, r: usize, seed: u64) -> Result<PodBasis> {
    pod_fit_with(x, r, seed, true)
}

/// POD with optional centering. The modes are the top-`r` left singular
/// vectors from a randomized SVD (oversampling 10, clipped to the matrix
/// size, and 2 power iterations).
pub fn pod_fit_with(x: &Matrix, r: usize, seed: u64, centered: bool) -> Result<PodBasis> {
    let min_dim = x.rows().min(x.cols());
    if r == 0 || r > min_dim {
        return Err(Error::InvalidRank {
            rank: r,
            reason: format!("POD rank must be in 1..={min_dim} for {:?} snapshots", x.shape()),
        });
    }
    let mean = if centered {
        x.row_means()
    } else {
        vec![0.0; x.rows()]
    };
    let mut xc = x.clone();
    if centered {
        for (i, m) in mean.iter().enumerate() {
            for v in xc.row_mut(i) {
                *v -= m;
            }
        }
    }
    let oversample = POD_OVERSAMPLE.min(min_dim - r);
    let svd = svd_randomized(&xc, r, oversample, POD_POWER_ITERS, seed)?;
    let total = xc.as_slice().iter().map(|v| v * v).sum::<f64>();
    let energy = svd
        .s
        .iter()
        .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
        .collect();
    Ok(PodBasis {
        modes: svd.u,
        mean,
        energy,
        singular_values: svd.s,
        centered,
    })
}

impl PodBasis {
    pub fn n_space(&self) -> usize {
        self.modes.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.modes.cols()
    }

    /// `modesᵀ (x − mean)` column by column.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.n_space() {
            return Err(Error::shape(format!(
                "POD encode expects {} rows, got {:?}",
                self.n_space(),
                x.shape()
            )));
        }
        let mut xc = x.clone();
        for (i, m) in self.mean.iter().enumerate() {
            for v in xc.row_mut(i) {
                *v -= m;
            }
        }
        self.modes.t_matmul(&xc)
    }

    /// `modes · z + mean`.
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        if z.rows() != self.latent_dim() {
            return Err(Error::shape(format!(
                "POD decode expects {} latent rows, got {:?}",
                self.latent_dim(),
                z.shape()
            )));
        }
        let mut x = self.modes.matmul(z)?;
        for (i, m) in self.mean.iter().enumerate() {
            for v in x.row_mut(i) {
                *v += m;
            }
        }
        Ok(x)
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decode(&self.encode(x)?)
    }
}

/// Relative reconstruction error `‖X − X̂_r‖_F / ‖X‖_F` of a centered POD
/// for each rank in `ranks`.
pub fn recon_error_curve(x: &Matrix, ranks: &[usize], seed: u64) -> Result<Vec<f64>> {
    let norm = x.frobenius_norm();
    ranks
        .iter()
        .map(|&r| {
            let basis = pod_fit(x, r, seed)?;
            let err = x.sub(&basis.reconstruct(x)?)?.frobenius_norm();
            Ok(if norm > 0.0 { err / norm } else { 0.0 })
        })
        .collect()
}
