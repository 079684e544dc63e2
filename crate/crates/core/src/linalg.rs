//! Small dense complex linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn det(m: &CMatrix) -> C64 {
    m.clone().lu().determinant()
}

/// Pivoted LU solve of a square system.
pub fn solve(m: &CMatrix, rhs: &CVector) -> Result<CVector> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::numerical("singular linear system"))
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("singular matrix"))
}

/// Least-squares solution of an overdetermined system via Householder QR.
pub fn lstsq(m: &CMatrix, rhs: &CVector) -> Result<CVector> {
    let cols = m.ncols();
    if m.nrows() < cols {
        return Err(Error::numerical("underdetermined least-squares system"));
    }
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.adjoint() * rhs;
    let scale = r.diagonal().iter().map(|d| d.norm()).fold(0.0, f64::max);
    let mut x = CVector::zeros(cols);
    for i in (0..cols).rev() {
        let mut acc = qtb[i];
        for j in i + 1..cols {
            acc -= r[(i, j)] * x[j];
        }
        let d = r[(i, i)];
        if d.norm() <= 1e-300 || d.norm() < 1e-14 * scale {
            return Err(Error::numerical("rank-deficient least-squares system"));
        }
        x[i] = acc / d;
    }
    Ok(x)
}

/// Vector l1 norm.
pub fn norm1(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// Entrywise l1 norm of a matrix; bounds the operator norm induced by l1.
pub fn entry_norm1(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).sum()
}

/// Operator norm induced by the l1 vector norm (max column sum).
pub fn op_norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a general complex matrix via complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let schur = m
        .clone()
        .try_schur(1e-15, 10_000)
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Null vector of `m - mu I` (right singular vector of the smallest singular value).
pub fn eigenvector(m: &CMatrix, mu: C64) -> Result<CVector> {
    let n = m.nrows();
    let shifted = m - CMatrix::identity(n, n) * mu;
    let svd = shifted
        .try_svd(true, true, 1e-15, 10_000)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let vt = svd.v_t.ok_or_else(|| Error::numerical("SVD missing V"))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    Ok(vt.row(imin).adjoint())
}

/// Modulus-safe `exp` of a complex log-value; returns `None` on overflow.
pub fn exp_checked(z: C64) -> Option<C64> {
    if z.re > 700.0 {
        None
    } else {
        Some(z.exp())
    }
}
