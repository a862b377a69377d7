//! Small dense linear-algebra kernels shared by `synthgen` and `regress`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Returns the lower-triangular `L` with `L·Lᵀ = a`. Fails with
/// [`Error::NotPositiveDefinite`] when a pivot is not strictly positive.
pub(crate) fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::NotPositiveDefinite(i));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `a·x = b` for symmetric positive-definite `a` via Cholesky,
/// with one right-hand-side column per column of `b`.
pub(crate) fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd: a is {}x{} but b has {} rows",
            n,
            a.ncols(),
            b.nrows()
        )));
    }
    let l = cholesky(a)?;
    let k = b.ncols();
    let mut x = b.clone();
    // forward substitution L·y = b
    for col in 0..k {
        for i in 0..n {
            let mut sum = x[[i, col]];
            for j in 0..i {
                sum -= l[[i, j]] * x[[j, col]];
            }
            x[[i, col]] = sum / l[[i, i]];
        }
    }
    // back substitution Lᵀ·x = y
    for col in 0..k {
        for i in (0..n).rev() {
            let mut sum = x[[i, col]];
            for j in (i + 1)..n {
                sum -= l[[j, i]] * x[[j, col]];
            }
            x[[i, col]] = sum / l[[i, i]];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_recomposes() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in a.iter().zip(back.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]]; // eigenvalues 3, -1
        assert!(matches!(
            cholesky(&a),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn solve_spd_matches_known_solution() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let x_true = array![[1.0, -2.0], [0.5, 3.0]];
        let b = a.dot(&x_true);
        let x = solve_spd(&a, &b).unwrap();
        for (u, v) in x.iter().zip(x_true.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
