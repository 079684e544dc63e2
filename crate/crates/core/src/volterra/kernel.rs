//! The kernel G_m(x, t) = Phi^{(m)}(x) Phi^{(m)}(t)^{-1} in three bases, and
//! the free terms T0_k, F0_k.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::tensor_algebra::{masks, merge_sign, MultiVector};
use crate::unperturbed::UnperturbedBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelForm {
    /// Frobenius basis c, coefficients sigma_alpha.
    C,
    /// Weyl-type basis psi_0, coefficients chi_alpha.
    Psi0,
    /// Asymptotic basis e = c L, coefficients chi_alpha.
    E,
}

fn basis_matrix(basis: &UnperturbedBasis, form: KernelForm, z: C64) -> Result<CMatrix> {
    Ok(match form {
        KernelForm::C => basis.c_matrix(z),
        KernelForm::E => basis.e_matrix(z),
        KernelForm::Psi0 => basis.sample_ray(z.arg(), &[z.norm()])?.remove(0).psi0(),
    })
}

/// G_m(x, t, rho) f for f of degree m.
pub fn apply_kernel(basis: &UnperturbedBasis, form: KernelForm, f: &MultiVector, x: f64, t: f64, rho: C64) -> Result<MultiVector> {
    let n = basis.n();
    let m = f.degree();
    if m == 0 || m > n || f.n() != n {
        return Err(Error::domain("kernel argument must have degree 1..=n"));
    }
    if rho.norm() == 0.0 || !(x > 0.0) || !(t > 0.0) {
        return Err(Error::domain("kernel needs x, t > 0 and rho != 0"));
    }
    let px = basis_matrix(basis, form, rho * x)?;
    let pt = basis_matrix(basis, form, rho * t)?;
    let full = (1u32 << n) - 1;
    let det_f = basis.ctx.perm_sign();
    let mut out = MultiVector::zeros(n, m);
    for &alpha in masks(n, m) {
        let ac = full & !alpha;
        let cols = |mask: u32| -> Vec<usize> { (0..n).filter(|j| mask & (1 << j) != 0).collect() };
        let coef = match form {
            KernelForm::C => merge_sign(alpha, ac),
            KernelForm::Psi0 | KernelForm::E => merge_sign(alpha, ac) * det_f,
        };
        let wt = MultiVector::from_columns(&pt, &cols(ac));
        let pair = if m == n { f.coeffs()[0] } else { f.pair(&wt) };
        let wx = MultiVector::from_columns(&px, &cols(alpha));
        out.axpy(pair * coef, &wx);
    }
    Ok(out)
}

/// Unnormalized free terms at z = rho x (moderate |z|).
#[derive(Debug, Clone)]
pub struct FreeTerms {
    /// T0_k = C_k ^ .. ^ C_n.
    pub t: MultiVector,
    /// F0_k = Psi0_1 ^ .. ^ Psi0_k.
    pub f: MultiVector,
    /// F0_k = E_1 ^ .. ^ E_k.
    pub f_from_e: MultiVector,
}

pub fn free_terms(basis: &UnperturbedBasis, k: usize, x: f64, rho: C64) -> Result<FreeTerms> {
    let n = basis.n();
    if k == 0 || k > n {
        return Err(Error::domain(format!("k = {k} outside 1..={n}")));
    }
    let z = rho * x;
    let cm = basis.c_matrix(z);
    let em = basis.e_matrix(z);
    let psi = basis.sample_ray(z.arg(), &[z.norm()])?.remove(0).psi0();
    let upper: Vec<usize> = (k - 1..n).collect();
    let lower: Vec<usize> = (0..k).collect();
    Ok(FreeTerms {
        t: MultiVector::from_columns(&cm, &upper),
        f: MultiVector::from_columns(&psi, &lower),
        f_from_e: MultiVector::from_columns(&em, &lower),
    })
}
