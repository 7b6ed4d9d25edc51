//! Small dense complex least squares via the normal equations.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative pivot threshold below which `D^H D` is treated as singular.
const RCOND_MIN: f64 = 1e-10;

/// Ridge added to the diagonal of a near-singular Gram matrix, relative to
/// its mean diagonal entry.
pub const RIDGE_SCALE: f64 = 1e-6;

/// Outcome of a least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub x: Vec<Complex64>,
    /// Diagonal loading applied, zero when the plain normal equations were used.
    pub ridge: f64,
}

/// In-place Cholesky of a Hermitian positive definite matrix stored
/// row-major. Returns `None` when a pivot is not comfortably positive.
fn cholesky(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let max_diag = (0..n).map(|i| a[i * n + i].re).fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > RCOND_MIN * max_diag) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Complex64], n: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[i * n + k] * z[k];
            z[i] -= t;
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[k * n + i].conj() * z[k];
            z[i] -= t;
        }
        z[i] /= l[i * n + i];
    }
    z
}

/// Solves `min ||y - D x||` for `D` given as columns.
///
/// With `allow_ridge`, a near-singular Gram matrix is loaded with
/// `RIDGE_SCALE * trace(D^H D) / K` on the diagonal; otherwise
/// [`Error::Singular`] is returned.
pub fn least_squares(
    cols: &[Vec<Complex64>],
    y: &[Complex64],
    allow_ridge: bool,
) -> Result<LsSolution> {
    let k = cols.len();
    if k == 0 {
        return Ok(LsSolution {
            x: Vec::new(),
            ridge: 0.0,
        });
    }
    let mut gram = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in i..k {
            let s: Complex64 = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            gram[i * k + j] = s;
            gram[j * k + i] = s.conj();
        }
    }
    let rhs: Vec<Complex64> = cols
        .iter()
        .map(|c| c.iter().zip(y).map(|(a, b)| a.conj() * b).sum())
        .collect();
    if let Some(l) = cholesky(&gram, k) {
        return Ok(LsSolution {
            x: cholesky_solve(&l, k, &rhs),
            ridge: 0.0,
        });
    }
    if !allow_ridge {
        return Err(Error::Singular);
    }
    let trace: f64 = (0..k).map(|i| gram[i * k + i].re).sum();
    let ridge = RIDGE_SCALE * trace / k as f64;
    if !(ridge > 0.0) {
        return Err(Error::Singular);
    }
    for i in 0..k {
        gram[i * k + i] += ridge;
    }
    let l = cholesky(&gram, k).ok_or(Error::Singular)?;
    Ok(LsSolution {
        x: cholesky_solve(&l, k, &rhs),
        ridge,
    })
}
