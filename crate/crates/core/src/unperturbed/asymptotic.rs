//! Formal solutions e_k(z) = exp(R_k z)(f_k + g_1/z + ...) at infinity.

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector, C64};

use super::context::SpectralContext;

/// Optimal-truncation error required at the validity radius.
pub const ASYM_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct AsymptoticBasis {
    /// coeffs[k][s] = g_s for the k-th column (0-based).
    pub coeffs: Vec<Vec<CVector>>,
    pub order: usize,
    /// Radius beyond which optimal truncation meets `ASYM_TOL`.
    pub r_min: f64,
}

fn coefficients(ctx: &SpectralContext, order: usize) -> Vec<Vec<CVector>> {
    let n = ctx.n;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let p = ctx.perm[k];
        let rk = ctx.r[k];
        let mut g = vec![CVector::from_fn(n, |i, _| if i == p { c(1.0, 0.0) } else { c(0.0, 0.0) })];
        for s in 0..order {
            let w = &ctx.a * &g[s] + &g[s] * c(s as f64, 0.0);
            let mut next = CVector::zeros(n);
            for j in 0..n {
                if j != p {
                    next[j] = -w[j] / (ctx.b[j] - rk);
                }
            }
            // solvability of the next step fixes the R_k component
            let mut acc = c(0.0, 0.0);
            for j in 0..n {
                if j != p {
                    acc += ctx.a[(p, j)] * next[j];
                }
            }
            next[p] = -acc / (s as f64 + 1.0);
            g.push(next);
        }
        out.push(g);
    }
    out
}

impl AsymptoticBasis {
    pub fn build(ctx: &SpectralContext, order: usize) -> Result<AsymptoticBasis> {
        let coeffs = coefficients(ctx, order);
        let mut basis = AsymptoticBasis { coeffs, order, r_min: f64::INFINITY };
        let mut r = 4.0;
        while r <= 400.0 {
            if (0..ctx.n).all(|k| basis.truncation_error(k, r) <= ASYM_TOL) {
                basis.r_min = r;
                return Ok(basis);
            }
            r += 1.0;
        }
        Err(Error::Numerical(format!("asymptotic series of order {order} does not reach {ASYM_TOL:e} for |z| <= 400")))
    }

    /// Smallest term |g_s| r^{-s} over s <= order, i.e. the optimal-truncation error.
    pub fn truncation_error(&self, k: usize, r: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut rp = 1.0;
        for g in &self.coeffs[k] {
            best = best.min(g.norm() * rp);
            rp /= r;
        }
        best
    }

    /// Normalized column etilde_k(z) = exp(-R_k z) e_k(z), optimally truncated,
    /// with its derivative and the size of the first omitted term.
    pub fn e_tilde(&self, k: usize, z: C64) -> (CVector, CVector, f64) {
        let g = &self.coeffs[k];
        let n = g[0].len();
        let zi = z.inv();
        let mut val = CVector::zeros(n);
        let mut der = CVector::zeros(n);
        let mut zp = c(1.0, 0.0);
        let mut prev = f64::INFINITY;
        let mut err = 0.0;
        for (s, gs) in g.iter().enumerate() {
            let term = gs * zp;
            let size = term.norm();
            if s > 1 && size > prev {
                err = prev;
                break;
            }
            val += &term;
            der -= &term * (zi * s as f64);
            prev = size;
            err = size;
            if s > 0 && size < 1e-17 * val.norm() {
                break;
            }
            zp *= zi;
        }
        (val, der, err)
    }

    /// Matrix of normalized columns at z and the worst truncation error.
    pub fn e_tilde_matrix(&self, z: C64) -> (CMatrix, f64) {
        let n = self.coeffs.len();
        let mut m = CMatrix::zeros(n, n);
        let mut err = 0.0f64;
        for k in 0..n {
            let (v, _, e) = self.e_tilde(k, z);
            m.set_column(k, &v);
            err = err.max(e);
        }
        (m, err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::unperturbed::context::SectorSpec;

    fn ctx2() -> SpectralContext {
        let a = CMatrix::from_row_slice(2, 2, &[ZERO, c(1.5, 0.0), c(0.375, 0.0), ZERO]);
        SpectralContext::from_parts(&a, &[c(1.0, 0.0), c(-1.0, 0.0)], SectorSpec { theta_min: -1.2, theta_max: 1.2 }).unwrap()
    }

    #[test]
    fn formal_recurrence_holds() {
        let ctx = ctx2();
        let asym = AsymptoticBasis::build(&ctx, 60).unwrap();
        let bm = ctx.matrix_b();
        for k in 0..2 {
            for s in 0..59 {
                let g = &asym.coeffs[k];
                let lhs = (&bm - CMatrix::identity(2, 2) * ctx.r[k]) * &g[s + 1];
                let rhs = -(&ctx.a * &g[s] + &g[s] * c(s as f64, 0.0));
                assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + g[s].norm() * (s as f64 + 1.0)));
            }
        }
    }

    #[test]
    fn residual_at_large_z() {
        let ctx = ctx2();
        let asym = AsymptoticBasis::build(&ctx, 60).unwrap();
        let z = C64::from_polar(asym.r_min, 0.3);
        for k in 0..2 {
            let (v, d, err) = asym.e_tilde(k, z);
            assert!(err <= ASYM_TOL * 10.0);
            let r = d - (&ctx.a * &v) / z - (ctx.matrix_b() * &v) + &v * ctx.r[k];
            assert!(r.norm() < 1e-12, "{}", r.norm());
        }
    }
}
