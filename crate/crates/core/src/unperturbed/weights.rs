//! Scalar weights W_0, W_k and their cumulative products.
//!
//! Everything is returned as a complex logarithm: at |rho x| in the
//! thousands the weights themselves overflow.

use crate::error::{Error, Result};
use crate::linalg::C64;

use super::context::SpectralContext;

/// W_0(xi) = (1 - |xi|) xi + |xi|^2 on the closed unit disc, 1/W_0(1/xi) outside.
pub fn weight_w0(xi: C64) -> C64 {
    let r = xi.norm();
    if r <= 1.0 {
        xi * (1.0 - r) + r * r
    } else {
        let inv = xi.inv();
        let ri = inv.norm();
        (inv * (1.0 - ri) + ri * ri).inv()
    }
}

/// log W_0(xi). Fails where W_0 vanishes (xi = -1/2 and its inverse -2).
pub fn log_w0(xi: C64) -> Result<C64> {
    let w = weight_w0(xi);
    if !(w.norm() > 1e-300) || !w.norm().is_finite() {
        return Err(Error::domain(format!("weight W_0 vanishes at xi = {xi}")));
    }
    Ok(w.ln())
}

/// log W_k(z), 1-based k.
pub fn log_weight(ctx: &SpectralContext, k: usize, z: C64) -> Result<C64> {
    if z.norm() == 0.0 {
        return Err(Error::domain("weight evaluated at 0"));
    }
    let lin = ctx.r[k - 1] * z;
    if z.norm() > 1.0 {
        Ok(lin)
    } else {
        Ok(log_w0(ctx.pow(z, ctx.mu[k - 1]))? + lin)
    }
}

/// W_k(z) itself; may overflow for large |z|.
pub fn weight_wk(ctx: &SpectralContext, k: usize, z: C64) -> Result<C64> {
    Ok(log_weight(ctx, k, z)?.exp())
}

/// All log W_1..log W_n at z.
pub fn log_weights(ctx: &SpectralContext, z: C64) -> Result<Vec<C64>> {
    (1..=ctx.n).map(|k| log_weight(ctx, k, z)).collect()
}

/// log of prod_{j<=k} W_j, from precomputed log weights (k = 0 gives 0).
pub fn log_forward(logs: &[C64], k: usize) -> C64 {
    logs[..k].iter().sum()
}

/// log of prod_{j>=k} W_j, from precomputed log weights (k = n + 1 gives 0).
pub fn log_backward(logs: &[C64], k: usize) -> C64 {
    logs[k - 1..].iter().sum()
}

pub fn forward_w(ctx: &SpectralContext, k: usize, z: C64) -> Result<C64> {
    Ok(log_forward(&log_weights(ctx, z)?, k).exp())
}

pub fn backward_w(ctx: &SpectralContext, k: usize, z: C64) -> Result<C64> {
    Ok(log_backward(&log_weights(ctx, z)?, k).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CMatrix, ZERO};
    use crate::unperturbed::context::SectorSpec;

    fn ctx2() -> SpectralContext {
        let a = CMatrix::from_row_slice(2, 2, &[ZERO, c(1.5, 0.0), c(0.375, 0.0), ZERO]);
        SpectralContext::from_parts(&a, &[c(1.0, 0.0), c(-1.0, 0.0)], SectorSpec { theta_min: -1.2, theta_max: 1.2 }).unwrap()
    }

    #[test]
    fn w0_values() {
        assert_eq!(weight_w0(c(1.0, 0.0)), c(1.0, 0.0));
        assert!((weight_w0(c(0.5, 0.0)) - c(0.5, 0.0)).norm() < 1e-15);
        assert!((weight_w0(c(2.0, 0.0)) - c(2.0, 0.0)).norm() < 1e-15);
        for t in 0..32 {
            let xi = C64::from_polar(1.0, t as f64 * 0.2);
            assert!((weight_w0(xi) - c(1.0, 0.0)).norm() < 1e-15);
            let inside = C64::from_polar(1.0 - 1e-12, t as f64 * 0.2);
            assert!((weight_w0(inside) - weight_w0(xi)).norm() < 1e-10);
        }
        assert!(log_w0(c(-0.5, 0.0)).is_err());
    }

    #[test]
    fn wk_outside_unit_disc_is_exponential() {
        let ctx = ctx2();
        let z = c(1.7, 0.4);
        for k in 1..=2 {
            assert!((log_weight(&ctx, k, z).unwrap() - ctx.r[k - 1] * z).norm() < 1e-15);
        }
        assert!((backward_w(&ctx, 1, z).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        assert!((forward_w(&ctx, 2, z).unwrap() - backward_w(&ctx, 1, z).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn wk_near_zero_tracks_power() {
        let ctx = ctx2();
        let z = c(1e-3, 0.0);
        let w1 = weight_wk(&ctx, 1, z).unwrap().norm();
        let expected = 1e-3f64.powf(-0.75);
        assert!((w1 / expected - 1.0).abs() < 0.05);
    }
}
