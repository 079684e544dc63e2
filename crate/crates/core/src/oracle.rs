//! Independent reference integration of y' = (A/x + q(x) + rho B) y and of
//! its exterior-power lifts, by adaptive Runge-Kutta split at breakpoints.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64, ZERO};
use crate::ode::{integrate, StepControl};
use crate::potential::Potential;
use crate::tensor_algebra::{lift_operator, MultiVector};
use crate::unperturbed::{SpectralContext, UnperturbedBasis};
use crate::unperturbed::weights::log_weights;
use crate::volterra::{RaySolution, TensorKind};
use crate::weyl::WeylSolutionSet;

use serde::Serialize;

pub fn oracle_control() -> StepControl {
    StepControl { rtol: 1e-11, atol: 1e-300, h_init: 1e-6, h_min: 1e-300, max_steps: 5_000_000 }
}

/// Lifted coefficient pieces for the m-th exterior power.
struct LiftedSystem {
    a: CMatrix,
    b: Vec<C64>,
    m: usize,
}

impl LiftedSystem {
    fn new(ctx: &SpectralContext, m: usize) -> Result<Self> {
        Ok(LiftedSystem {
            a: lift_operator(&ctx.a, m)?.matrix().clone(),
            b: lift_operator(&ctx.matrix_b(), m)?.matrix().diagonal().iter().copied().collect(),
            m,
        })
    }
}

/// Integrates Y' = (U^{(m)} - shift rho) Y from x0 to x1 (either direction),
/// i.e. the lifted system for Y exp(-shift rho x). Returns states at `outputs`.
pub fn integrate_lifted(
    ctx: &SpectralContext,
    q: &Potential,
    rho: C64,
    m: usize,
    shift: C64,
    y0: &MultiVector,
    x0: f64,
    x1: f64,
    outputs: &[f64],
) -> Result<Vec<MultiVector>> {
    let n = ctx.n;
    if y0.degree() != m || !(x0 > 0.0) || !(x1 > 0.0) {
        return Err(Error::domain("oracle needs a degree-m start value and x > 0"));
    }
    let sys = LiftedSystem::new(ctx, m)?;
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let mut cuts: Vec<f64> = q.breakpoints.iter().copied().filter(|&b| (b - x0) * dir > 0.0 && (x1 - b) * dir > 0.0).collect();
    if dir < 0.0 {
        cuts.reverse();
    }
    cuts.push(x1);
    let mut y: Vec<C64> = y0.coeffs().to_vec();
    let mut start = x0;
    let mut out = Vec::with_capacity(outputs.len());
    let mut oi = 0usize;
    let ctl = oracle_control();
    for &end in &cuts {
        let mid = 0.5 * (start + end);
        let qm = |x: f64| -> CMatrix {
            let right = x < mid;
            lift_operator(&q.value(x, right), sys.m).map(|l| l.matrix().clone()).unwrap_or_else(|_| CMatrix::zeros(1, 1))
        };
        let seg_out: Vec<f64> = outputs[oi..].iter().copied().take_while(|&o| (end - o) * dir >= 0.0).collect();
        let dim = y.len();
        let piece = q.pieces.iter().position(|pc| mid > pc.from && mid < pc.to);
        let rhs = |x: f64, v: &[C64], dv: &mut [C64]| {
            let lq = if piece.is_some() { Some(qm(x)) } else { None };
            for i in 0..dim {
                let mut acc = ZERO;
                for j in 0..dim {
                    let mut coef = sys.a[(i, j)] / x;
                    if let Some(l) = &lq {
                        coef += l[(i, j)];
                    }
                    acc += coef * v[j];
                }
                dv[i] = acc + (sys.b[i] - shift) * rho * v[i];
            }
        };
        let tr = integrate(rhs, start, &y, end, &seg_out, &ctl)?;
        for st in tr.y.iter().take(seg_out.len()) {
            out.push(MultiVector::from_coeffs(n, m, st.clone())?);
        }
        oi += seg_out.len();
        y = tr.y.last().unwrap().clone();
        start = end;
    }
    if out.len() != outputs.len() {
        return Err(Error::domain("oracle outputs must be monotone and inside the interval"));
    }
    Ok(out)
}

/// The plain system (m = 1), states scaled by exp(-shift rho x).
pub fn integrate_system(
    ctx: &SpectralContext,
    q: &Potential,
    rho: C64,
    shift: C64,
    y0: &CVector,
    x0: f64,
    x1: f64,
    outputs: &[f64],
) -> Result<Vec<CVector>> {
    let mv = MultiVector::from_vector(y0);
    Ok(integrate_lifted(ctx, q, rho, 1, shift, &mv, x0, x1, outputs)?.into_iter().map(|v| v.to_vector()).collect())
}

/// Normalized T_k or F_k at `xs` by direct integration of the lifted system
/// from `x_start`. T starts from c_k ^ ... ^ c_n near 0 (x_start below xs);
/// F starts from the Psi0 columns beyond the support of q (x_start above xs).
pub fn oracle_tensor(basis: &UnperturbedBasis, q: &Potential, kind: TensorKind, k: usize, rho: C64, xs: &[f64], x_start: f64) -> Result<Vec<MultiVector>> {
    let ctx = &basis.ctx;
    let n = ctx.n;
    let (m, shift) = match kind {
        TensorKind::T => (n - k + 1, ctx.r_backward(k)),
        TensorKind::F => (k, ctx.r_forward(k)),
    };
    let z0 = rho * x_start;
    let y0 = match kind {
        TensorKind::T => {
            let cols: Vec<usize> = (k - 1..n).collect();
            MultiVector::from_columns(&basis.c_matrix(z0), &cols).scale((-shift * z0).exp())
        }
        TensorKind::F => {
            let s = basis.sample_ray(z0.arg(), &[z0.norm()])?.remove(0);
            let cols: Vec<usize> = (0..k).collect();
            let lf: C64 = s.log_w[..k].iter().sum();
            MultiVector::from_columns(&s.tilde, &cols).scale((lf - shift * z0).exp())
        }
    };
    let outs: Vec<f64> = match kind {
        TensorKind::T => xs.to_vec(),
        TensorKind::F => xs.iter().rev().copied().collect(),
    };
    let end = *outs.last().ok_or_else(|| Error::domain("empty output grid"))?;
    let mut vals = integrate_lifted(ctx, q, rho, m, shift, &y0, x_start, end, &outs)?;
    if kind == TensorKind::F {
        vals.reverse();
    }
    vals.iter()
        .zip(xs)
        .map(|(v, &x)| {
            let lw = log_weights(ctx, rho * x)?;
            let lref: C64 = match kind {
                TensorKind::T => lw[k - 1..].iter().sum(),
                TensorKind::F => lw[..k].iter().sum(),
            };
            Ok(v.scale((shift * rho * x - lref).exp()))
        })
        .collect()
}

/// Outcome of checking one Weyl-type solution against Definition 1 by
/// direct integration.
#[derive(Debug, Clone, Serialize)]
pub struct ShootingVerdict {
    pub k: usize,
    /// Least-squares slope of log|Psi_k| against log x over the first two
    /// decades of the grid, and the expected Re mu_k.
    pub slope: Option<f64>,
    pub expected_slope: f64,
    pub slope_ok: bool,
    /// |Psi~_k - etilde_k| near half the grid end, against its bound.
    pub infinity: Option<InfinityCheck>,
    /// Worst ratio (propagation mismatch) / (allowed mismatch) over grid pairs.
    pub propagation_ratio: f64,
    pub propagation_pairs: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfinityCheck {
    pub x: f64,
    pub deviation: f64,
    pub bound: f64,
    pub ok: bool,
}

pub const SLOPE_TOL: f64 = 0.05;

/// Checks Psi_k from `set` at both ends and by propagating it between
/// neighbouring grid points with the reference integrator.
pub fn verify_weyl_by_shooting(basis: &UnperturbedBasis, q: &Potential, sol: &RaySolution, set: &WeylSolutionSet, k: usize) -> Result<ShootingVerdict> {
    let ctx = &basis.ctx;
    let n = ctx.n;
    if k == 0 || k > n {
        return Err(Error::domain(format!("Weyl index {k} outside 1..={n}")));
    }
    let rho = set.rho;
    let xs = &set.xs;
    let col = |i: usize| set.psi_tilde[i].column(k - 1).clone_owned();
    let err = set.diagnostics.error_bar + sol.basis_error + 1e-10;

    // near 0
    let expected_slope = ctx.mu[k - 1].re;
    let end = xs.iter().position(|&x| x >= 100.0 * xs[0] * (1.0 - 1e-12));
    let near: Vec<usize> = (0..=end.unwrap_or(0)).collect();
    let slope = if end.is_some() && near.len() >= 3 {
        let pts: Vec<(f64, f64)> = near.iter().map(|&i| (xs[i].ln(), set.log_w[i][k - 1].re + col(i).norm().ln())).collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(num / den)
    } else {
        None
    };
    let slope_ok = slope.is_some_and(|s| (s - expected_slope).abs() <= SLOPE_TOL);

    // infinity side
    let last = xs.len() - 1;
    let e_idx = (0..xs.len()).min_by(|&a, &b| (xs[a] - 0.5 * xs[last]).abs().partial_cmp(&(xs[b] - 0.5 * xs[last]).abs()).unwrap()).unwrap();
    let z_e = rho * xs[e_idx];
    let infinity = if z_e.norm() >= basis.asym.r_min {
        let z_l = rho * xs[last];
        let (el, _) = basis.asym.e_tilde_matrix(z_l);
        let (ee, trunc) = basis.asym.e_tilde_matrix(z_e);
        let coef = crate::linalg::solve(&el, &(col(last) - el.column(k - 1)))?;
        let mut remainder = 0.0;
        for j in 0..k - 1 {
            let decay = ((ctx.r[j] - ctx.r[k - 1]) * rho * (xs[e_idx] - xs[last])).exp().norm();
            remainder += coef[j].norm() * decay * ee.column(j).norm();
        }
        let kernel = sol.f.iter().map(|f| f.diagnostics.kernel_bound).fold(0.0, f64::max);
        let tail = kernel * q.l1_tail(xs[e_idx]) * (1.0 + col(e_idx).norm());
        let deviation = (col(e_idx) - ee.column(k - 1)).norm();
        let bound = 10.0 * (tail + err + remainder + trunc);
        Some(InfinityCheck { x: xs[e_idx], deviation, bound, ok: deviation <= bound })
    } else {
        None
    };

    // propagation between neighbours
    let shift = ctx.r[k - 1];
    let scaled = |i: usize| col(i) * (set.log_w[i][k - 1] - shift * rho * xs[i]).exp();
    let gap_exp = (0..n).map(|j| ((ctx.r[j] - shift) * rho).re).fold(0.0, f64::max);
    let gap_pow = (0..n).map(|j| (ctx.mu[j] - ctx.mu[k - 1]).re).fold(0.0, f64::max);
    let mut ratio = 0.0f64;
    let mut pairs = 0usize;
    for i in 0..last {
        let (xa, xb) = (xs[i], xs[i + 1]);
        if rho.norm() * (xb - xa) > 2.0 {
            continue;
        }
        let ya = scaled(i);
        let yb = scaled(i + 1);
        let got = integrate_system(ctx, q, rho, shift, &ya, xa, xb, &[xb])?;
        let amp = (gap_exp * (xb - xa)).exp() * (xb / xa).powf(gap_pow);
        let tol = 10.0 * amp * err;
        let diff = (&got[0] - &yb).norm() / yb.norm().max(1e-300);
        ratio = ratio.max(diff / tol);
        pairs += 1;
    }
    let propagation_ok = pairs > 0 && ratio <= 1.0;
    let pass = slope_ok && infinity.as_ref().is_none_or(|c| c.ok) && propagation_ok;
    Ok(ShootingVerdict { k, slope, expected_slope, slope_ok, infinity, propagation_ratio: ratio, propagation_pairs: pairs, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{basis2, basis3};
    use crate::linalg::c;
    use crate::volterra::SolverOptions;
    use crate::weyl::{weyl_at, WeylOptions};

    fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn shooting_accepts_weyl_solutions() {
        for (b, rho) in [(basis2(), c(2.0, 0.8)), (basis3(), c(3.0, -0.4))] {
            let n = b.n();
            for q in [Potential::zero(n), Potential::step(n, 1, 2, c(1.0, 0.0), 0.0, 1.0).unwrap()] {
                let xs = geometric(1e-6, 20.0, 90);
                let (sol, set) = weyl_at(&b, &q, rho, &xs, &SolverOptions::default(), &WeylOptions::default()).unwrap();
                for k in 1..=n {
                    let v = verify_weyl_by_shooting(&b, &q, &sol, &set, k).unwrap();
                    assert!(v.pass, "{v:?}");
                }
            }
        }
    }

    #[test]
    fn shooting_rejects_wrong_column() {
        let b = basis2();
        let q = Potential::zero(2);
        let rho = c(2.0, 0.8);
        let xs = geometric(1e-6, 20.0, 90);
        let (sol, mut set) = weyl_at(&b, &q, rho, &xs, &SolverOptions::default(), &WeylOptions::default()).unwrap();
        // Psi_1 replaced by Psi0_2, kept in the Psi~_1 normalization
        for i in 0..xs.len() {
            let f = (set.log_w[i][1] - set.log_w[i][0]).exp();
            let col = set.psi0_tilde[i].column(1) * f;
            set.psi_tilde[i].set_column(0, &col);
        }
        let v = verify_weyl_by_shooting(&b, &q, &sol, &set, 1).unwrap();
        assert!(!v.slope_ok && !v.pass, "{v:?}");
    }
}
