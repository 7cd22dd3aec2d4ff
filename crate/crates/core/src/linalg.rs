//! Small shared numerics: jittered Cholesky and Gaussian log-density from
//! sufficient statistics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Jitter added to a covariance diagonal after a first Cholesky failure.
pub(crate) const CHOLESKY_JITTER: f64 = 1e-9;

/// Cholesky with the one-shot jitter policy: retry once with
/// `CHOLESKY_JITTER * I`, fail hard on the second failure.
pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let jittered = m + DMatrix::identity(m.nrows(), m.ncols()) * CHOLESKY_JITTER;
    if let Some(chol) = Cholesky::new(jittered) {
        return Ok(chol);
    }
    Err(Error::Numerical(format!(
        "covariance is not positive definite after {CHOLESKY_JITTER:.0e} jitter \
         (condition number ~{:.3e})",
        condition_number(m)
    )))
}

/// Ratio of extreme eigenvalue magnitudes of a symmetric matrix.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eigenvalues = m.clone().symmetric_eigen().eigenvalues;
    let max = eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// log det of the factored matrix.
pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Gaussian log-likelihood of `n` samples with the given first and second
/// raw moment sums (`sx = Σ xᵢ`, `sxx = Σ xᵢxᵢᵀ`).
pub(crate) fn mvn_loglik_suff(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: f64,
    sx: &DVector<f64>,
    sxx: &DMatrix<f64>,
) -> Result<f64> {
    let p = mean.len() as f64;
    let chol = cholesky_with_jitter(cov)?;
    let logdet = log_det(&chol);
    let centered = centered_scatter(mean, n, sx, sxx);
    let quad = chol.solve(&centered).trace();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(-0.5 * (n * (p * ln_2pi + logdet) + quad))
}

/// `Σ (xᵢ − m)(xᵢ − m)ᵀ` from raw moment sums.
pub(crate) fn centered_scatter(
    mean: &DVector<f64>,
    n: f64,
    sx: &DVector<f64>,
    sxx: &DMatrix<f64>,
) -> DMatrix<f64> {
    sxx - sx * mean.transpose() - mean * sx.transpose() + mean * mean.transpose() * n
}
