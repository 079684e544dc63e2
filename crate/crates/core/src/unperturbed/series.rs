//! Frobenius basis c_k(z) = z^{mu_k} chat_k(z) near the origin.

use crate::error::{Error, Result};
use crate::linalg::{c, solve, CMatrix, CVector, C64};

use super::context::SpectralContext;

/// Relative tail tolerance for the truncated series.
pub const SERIES_TAIL_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct SeriesBasis {
    /// coeffs[k][s] = a_s for chat_k (0-based k).
    pub coeffs: Vec<Vec<CVector>>,
    pub order: usize,
    pub r_max: f64,
    /// Tail bound relative to the largest term at r_max.
    pub tail_bound: f64,
}

fn coefficients(ctx: &SpectralContext, order: usize) -> Result<Vec<Vec<CVector>>> {
    let n = ctx.n;
    let bm = ctx.matrix_b();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut a = vec![ctx.h.column(k).clone_owned()];
        for s in 1..=order {
            let m = &ctx.a - CMatrix::identity(n, n) * (ctx.mu[k] + c(s as f64, 0.0));
            let rhs = -(&bm * &a[s - 1]);
            a.push(solve(&m, &rhs)?);
        }
        out.push(a);
    }
    Ok(out)
}

/// Largest term and estimated tail of sum_s |a_s| r^s.
fn tail_estimate(coeffs: &[Vec<CVector>], r: f64) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for a in coeffs {
        let terms: Vec<f64> = a.iter().enumerate().map(|(s, v)| v.norm() * r.powi(s as i32)).collect();
        let max = terms.iter().cloned().fold(0.0, f64::max);
        let last = terms.len() - 1;
        let ratio = if terms[last - 1] > 0.0 { terms[last] / terms[last - 1] } else { 0.0 };
        let tail = if ratio < 0.9 { terms[last] * ratio / (1.0 - ratio) + terms[last] } else { f64::INFINITY };
        worst = worst.max(tail / max.max(1e-300));
        peak = peak.max(max);
    }
    (peak, worst)
}

impl SeriesBasis {
    pub fn build(ctx: &SpectralContext, order: usize, r_max: f64) -> Result<SeriesBasis> {
        if order < 2 {
            return Err(Error::input("series order must be at least 2"));
        }
        let coeffs = coefficients(ctx, order)?;
        let (_, tail) = tail_estimate(&coeffs, r_max);
        if tail > SERIES_TAIL_TOL {
            let mut suggest = order;
            while suggest < 2000 {
                suggest += 10;
                let (_, t) = tail_estimate(&coefficients(ctx, suggest)?, r_max);
                if t <= SERIES_TAIL_TOL {
                    break;
                }
            }
            return Err(Error::Numerical(format!(
                "series tail {tail:e} at r_max = {r_max} exceeds {SERIES_TAIL_TOL:e}; use series_order >= {suggest}"
            )));
        }
        Ok(SeriesBasis { coeffs, order, r_max, tail_bound: tail })
    }

    /// chat_k(z) (0-based k), Horner evaluation.
    pub fn chat(&self, k: usize, z: C64) -> CVector {
        let a = &self.coeffs[k];
        let mut acc = a[self.order].clone();
        for s in (0..self.order).rev() {
            acc = acc * z + &a[s];
        }
        acc
    }

    /// Derivative of chat_k.
    pub fn chat_prime(&self, k: usize, z: C64) -> CVector {
        let a = &self.coeffs[k];
        let mut acc = &a[self.order] * c(self.order as f64, 0.0);
        for s in (1..self.order).rev() {
            acc = acc * z + &a[s] * c(s as f64, 0.0);
        }
        acc
    }

    /// c(z) as a matrix (columns c_k).
    pub fn c_matrix(&self, ctx: &SpectralContext, z: C64) -> CMatrix {
        let mut m = CMatrix::zeros(ctx.n, ctx.n);
        for k in 0..ctx.n {
            let col = self.chat(k, z) * ctx.pow(z, ctx.mu[k]);
            m.set_column(k, &col);
        }
        m
    }

    /// Columns chat_k(z) z^{mu_k} / e^{w_k}, with w_k supplied as logs (avoids overflow).
    pub fn c_scaled(&self, ctx: &SpectralContext, z: C64, log_scale: &[C64]) -> CMatrix {
        let mut m = CMatrix::zeros(ctx.n, ctx.n);
        let lz = ctx.log(z);
        for k in 0..ctx.n {
            let col = self.chat(k, z) * (ctx.mu[k] * lz - log_scale[k]).exp();
            m.set_column(k, &col);
        }
        m
    }

    /// Residual |c' - (A/z + B) c| relative to |c|.
    pub fn residual(&self, ctx: &SpectralContext, z: C64) -> f64 {
        let lz = ctx.log(z);
        let bm = ctx.matrix_b();
        let mut worst = 0.0f64;
        for k in 0..ctx.n {
            let p = (ctx.mu[k] * lz).exp();
            let y = self.chat(k, z) * p;
            let dy = (self.chat_prime(k, z) + self.chat(k, z) * (ctx.mu[k] / z)) * p;
            let r = dy - (&ctx.a * &y) / z - &bm * &y;
            worst = worst.max(r.norm() / y.norm().max(1e-300));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{det, ZERO};
    use crate::unperturbed::context::SectorSpec;

    fn ctx2() -> SpectralContext {
        let a = CMatrix::from_row_slice(2, 2, &[ZERO, c(1.5, 0.0), c(0.375, 0.0), ZERO]);
        SpectralContext::from_parts(&a, &[c(1.0, 0.0), c(-1.0, 0.0)], SectorSpec { theta_min: -1.2, theta_max: 1.2 }).unwrap()
    }

    #[test]
    fn recurrence_and_first_coefficient() {
        let ctx = ctx2();
        let s = SeriesBasis::build(&ctx, 40, 2.0).unwrap();
        for k in 0..2 {
            let m = &ctx.a - CMatrix::identity(2, 2) * (ctx.mu[k] + 1.0);
            let a1 = -solve(&m, &(ctx.matrix_b() * ctx.h.column(k).clone_owned())).unwrap();
            assert!((&s.coeffs[k][1] - a1).norm() < 1e-14);
            for j in 1..=40 {
                let lhs = (&ctx.a - CMatrix::identity(2, 2) * (ctx.mu[k] + j as f64)) * &s.coeffs[k][j];
                let rhs = -(ctx.matrix_b() * &s.coeffs[k][j - 1]);
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn residual_and_determinant() {
        let ctx = ctx2();
        let s = SeriesBasis::build(&ctx, 40, 2.0).unwrap();
        let z = C64::from_polar(0.3, 0.4);
        assert!(s.residual(&ctx, z) < 1e-10);
        for r in [0.01, 0.5, 1.0, 2.0] {
            let d = det(&s.c_matrix(&ctx, C64::from_polar(r, -0.7)));
            assert!((d - c(1.0, 0.0)).norm() < 1e-9, "{d}");
        }
    }

    #[test]
    fn zero_b_gives_constant_chat() {
        let mut ctx = ctx2();
        ctx.b = vec![ZERO, ZERO];
        let s = SeriesBasis::build(&ctx, 10, 1.0).unwrap();
        for k in 0..2 {
            assert!((s.chat(k, c(0.7, 0.1)) - ctx.h.column(k)).norm() < 1e-15);
        }
    }

    #[test]
    fn too_small_order_suggests_more() {
        let ctx = ctx2();
        let err = SeriesBasis::build(&ctx, 5, 10.0).unwrap_err();
        assert!(err.to_string().contains("series_order"));
    }
}
