//! Covariance spectrum and the minimum representative-sensor estimate.
//!
//! The estimate is the smallest number of principal directions whose
//! eigenvalues explain a configurable fraction of total variance
//! (default 0.95). Sensor counts stay in the hundreds, so a cyclic Jacobi
//! sweep is used for the full symmetric eigendecomposition; robustness
//! matters more than speed at this size.

use ndarray::{Array1, Array2, Axis};

use crate::dataset::SensorDataset;
use crate::error::{Error, Result};

/// Default explained-variance fraction for [`estimate_min_sensors`].
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) and matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Unbiased sample covariance across sensors (columns).
pub fn covariance_matrix(d: &SensorDataset) -> Result<Array2<f64>> {
    let n = d.n_samples();
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let x = d.values();
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean.insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    Ok(cov)
}

/// Full spectrum of a symmetric matrix via cyclic Jacobi rotations.
///
/// Input must be symmetric within 1e-10; fails with
/// [`Error::NoConvergence`] if the off-diagonal mass does not vanish
/// after 100 sweeps.
pub fn eigendecompose_sym(m: &Array2<f64>) -> Result<Spectrum> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(max_asym));
    }

    let mut a = m.clone();
    // work on the symmetrized copy so roundoff asymmetry cannot bias rotations
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = s;
            a[[j, i]] = s;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= stop {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        let new_kp = c * akp - s * akq;
                        let new_kq = s * akp + c * akq;
                        a[[k, p]] = new_kp;
                        a[[p, k]] = new_kp;
                        a[[k, q]] = new_kq;
                        a[[q, k]] = new_kq;
                    }
                }
                let c2 = c * c;
                let s2 = s * s;
                let cs = c * s;
                a[[p, p]] = c2 * app - 2.0 * cs * apq + s2 * aqq;
                a[[q, q]] = s2 * app + 2.0 * cs * apq + c2 * aqq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;

                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // final check: the last sweep may have finished the job
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off > stop {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).expect("finite eigenvalues"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors
            .column_mut(dst)
            .assign(&v.column(src));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest `M` whose top-`M` eigenvalues explain at least
/// `variance_fraction` of the covariance trace.
pub fn estimate_min_sensors(d: &SensorDataset, variance_fraction: f64) -> Result<usize> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "variance_fraction {variance_fraction} not in (0, 1]"
        )));
    }
    let spectrum = eigendecompose_sym(&covariance_matrix(d)?)?;
    min_sensors_from_eigenvalues(&spectrum.eigenvalues, variance_fraction)
}

/// The threshold rule applied to an already-computed spectrum.
pub fn min_sensors_from_eigenvalues(
    eigenvalues: &[f64],
    variance_fraction: f64,
) -> Result<usize> {
    // covariance eigenvalues are nonnegative up to roundoff; clamp the noise
    let clamped: Array1<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clamped.sum();
    if total <= 0.0 {
        return Err(Error::ZeroCovariance);
    }
    let mut acc = 0.0;
    for (i, l) in clamped.iter().enumerate() {
        acc += l;
        if acc / total >= variance_fraction {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}
