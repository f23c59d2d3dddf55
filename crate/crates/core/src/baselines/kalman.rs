//! Covariance checks and the Joseph-form update shared by both filters.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};

/// Smallest eigenvalue (and largest asymmetry) tolerated in a covariance.
pub const PSD_TOLERANCE: f64 = 1e-9;

pub fn symmetrize<const N: usize>(p: &mut SMatrix<f64, N, N>) {
    *p = (*p + p.transpose()) * 0.5;
}

pub fn min_eigenvalue<const N: usize>(p: &SMatrix<f64, N, N>) -> f64 {
    let d = DMatrix::from_column_slice(N, N, p.as_slice());
    d.symmetric_eigenvalues().min()
}

pub fn asymmetry<const N: usize>(p: &SMatrix<f64, N, N>) -> f64 {
    (p - p.transpose()).amax()
}

pub fn check_covariance<const N: usize>(p: &SMatrix<f64, N, N>) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "covariance", row: 0 });
    }
    let min = min_eigenvalue(p);
    if min < -PSD_TOLERANCE || asymmetry(p) > PSD_TOLERANCE {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Returns the correction `K r` and the Joseph-form posterior
/// `(I − KH) P (I − KH)ᵀ + K R Kᵀ`.
pub fn joseph_update<const N: usize, const M: usize>(
    p: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
    innovation: &SVector<f64, M>,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let s = h * p * h.transpose() + r;
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    let gain = chol.solve(&(h * p)).transpose();
    let ikh = SMatrix::<f64, N, N>::identity() - gain * h;
    let mut post = ikh * p * ikh.transpose() + gain * r * gain.transpose();
    symmetrize(&mut post);
    Ok((gain * innovation, post))
}

/// Kalman gain `P Hᵀ (H P Hᵀ + R)⁻¹`.
pub fn kalman_gain<const N: usize, const M: usize>(
    p: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
) -> Result<SMatrix<f64, N, M>> {
    let s = h * p * h.transpose() + r;
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    Ok(chol.solve(&(h * p)).transpose())
}
