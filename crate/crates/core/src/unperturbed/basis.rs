//! The Weyl-type basis psi_0 of the unperturbed system and its evaluation
//! along rays.
//!
//! Near the origin psi_0 = c(z) l. At moderate |z| the columns are recovered
//! from the normalized tensors F0_k = psi_01 ^ .. ^ psi_0k and
//! T0_k = c_k ^ .. ^ c_n, each transported in its stable direction. Far out
//! the asymptotic columns are combined with ray-local constants.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, det, inverse, lstsq, solve, CMatrix, CVector, C64, ONE, ZERO};
use crate::ode::{integrate, StepControl};
use crate::tensor_algebra::{lift_operator, wedge_matrix, MultiVector};

use super::asymptotic::AsymptoticBasis;
use super::context::SpectralContext;
use super::series::SeriesBasis;
use super::weights::{log_backward, log_forward, log_weights};

/// Agreement required between the two near-field representations.
pub const OVERLAP_TOL: f64 = 1e-8;
/// Relative threshold for Condition I(S).
pub const CONDITION_I_TOL: f64 = 1e-8;
const SWITCH_CANDIDATES: [f64; 5] = [2.0, 1.5, 3.0, 1.0, 4.0];
const SERIES_RADIUS: f64 = 6.0;

pub(crate) fn transport_control() -> StepControl {
    StepControl { rtol: 1e-12, atol: 1e-15, h_init: 1e-2, ..Default::default() }
}

/// Diagnostics gathered while building the basis.
#[derive(Debug, Clone, Serialize)]
pub struct BasisDiagnostics {
    pub r_switch: f64,
    pub r_far: f64,
    /// |L(r_switch) - L(r_switch/2)| / |L|.
    pub connection_drift: f64,
    /// Relative mismatch of the near and mid representations at 1.5 r_switch.
    pub overlap_mismatch: f64,
    /// Largest strictly-upper entry of c^{-1} psi_0 before it is discarded.
    pub l_upper_residual: f64,
    /// |Delta0 from L minors - direct determinant| / |Delta0|.
    pub delta0_direct_mismatch: f64,
    /// Relative mismatch between l from tensor extraction and l from L.
    pub l_from_connection_mismatch: f64,
    pub series_tail: f64,
}

/// Psi0 (as Psi0-tilde = Psi0 W^{-1}) at one point.
#[derive(Debug, Clone)]
pub struct Psi0Sample {
    pub z: C64,
    pub tilde: CMatrix,
    /// log W_k(z), k = 1..n.
    pub log_w: Vec<C64>,
}

impl Psi0Sample {
    /// Psi0 itself; overflows to infinities for large |z|.
    pub fn psi0(&self) -> CMatrix {
        let mut m = self.tilde.clone();
        for (k, lw) in self.log_w.iter().enumerate() {
            let w = lw.exp();
            m.column_mut(k).iter_mut().for_each(|v| *v *= w);
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct UnperturbedBasis {
    pub ctx: SpectralContext,
    pub series: SeriesBasis,
    pub asym: AsymptoticBasis,
    /// psi_0 = c l, l lower triangular.
    pub l: CMatrix,
    /// e = c L.
    pub connection: CMatrix,
    /// Delta0_k for k = 1..n (Delta0_1 = 1).
    pub delta0: Vec<C64>,
    pub diagnostics: BasisDiagnostics,
    lift_a: Vec<CMatrix>,
    lift_b: Vec<Vec<C64>>,
}

/// Ray-local data needed beyond r_switch.
struct RayData {
    /// F-tilde_k, k = 1..n-1, at each requested mid radius.
    f_tilde: Vec<Vec<MultiVector>>,
    /// T-tilde_k, k = 2..n, at each requested mid radius.
    t_tilde: Vec<Vec<MultiVector>>,
}

impl UnperturbedBasis {
    pub fn build(ctx: &SpectralContext) -> Result<UnperturbedBasis> {
        let n = ctx.n;
        let series = SeriesBasis::build(ctx, ctx.series_order, SERIES_RADIUS)?;
        let asym = AsymptoticBasis::build(ctx, ctx.asym_order)?;
        let mut lift_a = vec![CMatrix::zeros(1, 1)];
        let mut lift_b = vec![vec![ZERO]];
        for m in 1..=n {
            lift_a.push(lift_operator(&ctx.a, m)?.matrix().clone());
            lift_b.push(lift_operator(&ctx.matrix_b(), m)?.matrix().diagonal().iter().copied().collect());
        }
        let mut basis = UnperturbedBasis {
            ctx: ctx.clone(),
            series,
            asym,
            l: CMatrix::identity(n, n),
            connection: CMatrix::identity(n, n),
            delta0: vec![ONE; n],
            diagnostics: BasisDiagnostics {
                r_switch: SWITCH_CANDIDATES[0],
                r_far: 0.0,
                connection_drift: 0.0,
                overlap_mismatch: 0.0,
                l_upper_residual: 0.0,
                delta0_direct_mismatch: 0.0,
                l_from_connection_mismatch: 0.0,
                series_tail: 0.0,
            },
            lift_a,
            lift_b,
        };
        basis.diagnostics.r_far = basis.asym.r_min;
        basis.diagnostics.series_tail = basis.series.tail_bound;
        basis.build_connection()?;
        basis.choose_switch()?;
        basis.check_l_against_connection()?;
        Ok(basis)
    }

    pub fn n(&self) -> usize {
        self.ctx.n
    }

    /// Relative accuracy of the sampled Psi0 columns.
    pub fn accuracy(&self) -> f64 {
        self.diagnostics.connection_drift.max(self.diagnostics.overlap_mismatch).max(1e-13)
    }

    pub fn r_switch(&self) -> f64 {
        self.diagnostics.r_switch
    }

    pub fn r_far(&self) -> f64 {
        self.diagnostics.r_far
    }

    /// Integrates a normalized lifted solution along the ray of angle `phi`:
    /// dY/dr = e^{i phi} ((A/z + B)^{(m)} - shift) Y.
    fn transport(&self, m: usize, shift: C64, phi: f64, y0: &[C64], r0: f64, r1: f64, outputs: &[f64]) -> Result<Vec<Vec<C64>>> {
        let dir = C64::from_polar(1.0, phi);
        let la = &self.lift_a[m];
        let lb = &self.lift_b[m];
        let dim = y0.len();
        let rhs = |r: f64, y: &[C64], dy: &mut [C64]| {
            let zi = (dir * r).inv();
            for i in 0..dim {
                let mut acc = ZERO;
                for j in 0..dim {
                    acc += la[(i, j)] * y[j];
                }
                dy[i] = dir * (acc * zi + (lb[i] - shift) * y[i]);
            }
        };
        let tr = integrate(rhs, r0, y0, r1, outputs, &transport_control())?;
        Ok(tr.y)
    }

    /// e = c L from transporting the asymptotic columns inward on the mid ray.
    fn build_connection(&mut self) -> Result<()> {
        let ctx = &self.ctx;
        let n = ctx.n;
        let phi = ctx.sector.mid();
        let dir = C64::from_polar(1.0, phi);
        let r_far = self.r_far();
        let r1 = self.diagnostics.r_switch;
        let r2 = 0.5 * r1;
        let z_far = dir * r_far;
        let mut e1 = CMatrix::zeros(n, n);
        let mut e2 = CMatrix::zeros(n, n);
        for k in 0..n {
            let (g, _, _) = self.asym.e_tilde(k, z_far);
            let y0: Vec<C64> = g.iter().copied().collect();
            let ys = self.transport(1, ctx.r[k], phi, &y0, r_far, r2, &[r1])?;
            let s1 = (ctx.r[k] * dir * r1).exp();
            let s2 = (ctx.r[k] * dir * r2).exp();
            e1.set_column(k, &(CVector::from_vec(ys[0].clone()) * s1));
            e2.set_column(k, &(CVector::from_vec(ys[1].clone()) * s2));
        }
        let c1 = self.series.c_matrix(ctx, dir * r1);
        let c2 = self.series.c_matrix(ctx, dir * r2);
        let l1 = solve_mat(&c1, &e1)?;
        let l2 = solve_mat(&c2, &e2)?;
        let mut drift = 0.0f64;
        for k in 0..n {
            let col = l1.column(k).norm().max(1e-300);
            drift = drift.max((l1.column(k) - l2.column(k)).norm() / col);
        }
        self.connection = l1;
        self.diagnostics.connection_drift = drift;

        let mut delta = vec![ONE; n];
        let mut direct_mis = 0.0f64;
        for k in 2..=n {
            let minor = self.connection.view((0, 0), (k - 1, k - 1)).clone_owned();
            let d = det(&minor);
            let scale: f64 = (0..k - 1).map(|j| self.connection.column(j).norm()).product();
            if !(d.norm() > CONDITION_I_TOL * scale) {
                return Err(Error::Condition {
                    condition: "Condition I(S)",
                    detail: format!("|Delta0_{k}| = {:e} below {:e} (ill-conditioned)", d.norm(), CONDITION_I_TOL * scale),
                });
            }
            // det(e_1..e_{k-1}, c_k..c_n) at the second radius
            let mut m = c2.clone();
            for j in 0..k - 1 {
                m.set_column(j, &e2.column(j).clone_owned());
            }
            let dd = det(&m);
            direct_mis = direct_mis.max((dd - d).norm() / d.norm());
            delta[k - 1] = d;
        }
        self.delta0 = delta;
        self.diagnostics.delta0_direct_mismatch = direct_mis;
        Ok(())
    }

    /// Normalized T0_k at z (|z| >= 1) from the series columns.
    fn t_tilde_from_series(&self, z: C64, k: usize, log_w: &[C64]) -> MultiVector {
        let cm = self.series.c_matrix(&self.ctx, z);
        let cols: Vec<usize> = (k - 1..self.n()).collect();
        MultiVector::from_columns(&cm, &cols).scale((-log_backward(log_w, k)).exp())
    }

    /// Transports F-tilde inward from r_far and T-tilde outward from r_switch,
    /// recording both at each radius of `radii` (ascending, inside [r_sw, r_far]).
    fn ray_data(&self, phi: f64, radii: &[f64]) -> Result<RayData> {
        let ctx = &self.ctx;
        let n = ctx.n;
        let dir = C64::from_polar(1.0, phi);
        let r_sw = self.r_switch();
        let r_far = self.r_far();
        let z_far = dir * r_far;
        let (et, _) = self.asym.e_tilde_matrix(z_far);
        let descending: Vec<f64> = radii.iter().rev().copied().collect();
        let mut f_tilde = vec![Vec::with_capacity(n - 1); radii.len()];
        for k in 1..n {
            let cols: Vec<usize> = (0..k).collect();
            let f0 = MultiVector::from_columns(&et, &cols);
            let shift = ctx.r_forward(k);
            let ys = if r_far > r_sw {
                self.transport(k, shift, phi, f0.coeffs(), r_far, r_sw, &descending)?
            } else {
                vec![f0.coeffs().to_vec(); radii.len() + 1]
            };
            for (i, y) in ys.into_iter().take(radii.len()).enumerate() {
                f_tilde[radii.len() - 1 - i].push(MultiVector::from_coeffs(n, k, y)?);
            }
        }
        let z_sw = dir * r_sw;
        let lw_sw = log_weights(ctx, z_sw)?;
        let mut t_tilde = vec![Vec::with_capacity(n - 1); radii.len()];
        for k in 2..=n {
            let t0 = self.t_tilde_from_series(z_sw, k, &lw_sw);
            let shift = ctx.r_backward(k);
            let m = n - k + 1;
            let ys = self.transport(m, shift, phi, t0.coeffs(), r_sw, r_far, radii)?;
            for (i, y) in ys.into_iter().take(radii.len()).enumerate() {
                t_tilde[i].push(MultiVector::from_coeffs(n, m, y)?);
            }
        }
        Ok(RayData { f_tilde, t_tilde })
    }

    /// Psi0-tilde from F-tilde_1..F-tilde_{n-1} and T-tilde_2..T-tilde_n at one point.
    fn extract(&self, f_tilde: &[MultiVector], t_tilde: &[MultiVector]) -> Result<CMatrix> {
        let n = self.n();
        let mut out = CMatrix::zeros(n, n);
        out.set_column(0, &f_tilde[0].to_vector());
        for k in 2..=n {
            let prev = &f_tilde[k - 2];
            let target = if k < n {
                f_tilde[k - 1].to_vector()
            } else {
                CVector::from_element(1, c(self.ctx.perm_sign(), 0.0))
            };
            let t = &t_tilde[k - 2];
            let tn = t.norm().max(1e-300);
            let mf = wedge_matrix(prev);
            // psi ^ T = (-1)^{deg T} T ^ psi; the sign is irrelevant for a zero right side
            let mt = wedge_matrix(t) / C64::from(tn);
            let rows = mf.nrows() + mt.nrows();
            let mut m = CMatrix::zeros(rows, n);
            m.view_mut((0, 0), (mf.nrows(), n)).copy_from(&mf);
            m.view_mut((mf.nrows(), 0), (mt.nrows(), n)).copy_from(&mt);
            let mut rhs = CVector::zeros(rows);
            rhs.rows_mut(0, mf.nrows()).copy_from(&target);
            out.set_column(k - 1, &lstsq(&m, &rhs)?);
        }
        Ok(out)
    }

    fn near(&self, z: C64, log_w: &[C64]) -> CMatrix {
        let ctx = &self.ctx;
        let n = ctx.n;
        let lz = ctx.log(z);
        let chats: Vec<CVector> = (0..n).map(|j| self.series.chat(j, z)).collect();
        let mut out = CMatrix::zeros(n, n);
        for k in 0..n {
            let mut col = CVector::zeros(n);
            for j in k..n {
                let f = self.l[(j, k)] * (ctx.mu[j] * lz - log_w[k]).exp();
                col += &chats[j] * f;
            }
            out.set_column(k, &col);
        }
        out
    }

    /// Fixes l (and r_switch) from tensor extraction on the mid ray.
    fn choose_switch(&mut self) -> Result<()> {
        let phi = self.ctx.sector.mid();
        let dir = C64::from_polar(1.0, phi);
        let mut best: Option<(f64, CMatrix, f64, f64)> = None;
        for &r_sw in SWITCH_CANDIDATES.iter() {
            if r_sw * 1.5 >= self.r_far() {
                continue;
            }
            self.diagnostics.r_switch = r_sw;
            let probe = 1.5 * r_sw;
            let data = self.ray_data(phi, &[r_sw, probe])?;
            let z = dir * r_sw;
            let lw = log_weights(&self.ctx, z)?;
            let tilde = self.extract(&data.f_tilde[0], &data.t_tilde[0])?;
            let mut psi = tilde;
            for (k, w) in lw.iter().enumerate() {
                psi.column_mut(k).iter_mut().for_each(|v| *v *= w.exp());
            }
            let raw = solve_mat(&self.series.c_matrix(&self.ctx, z), &psi)?;
            let mut upper = 0.0f64;
            let mut l = raw.clone();
            for k in 0..self.n() {
                let scale = raw.column(k).norm();
                for j in 0..k {
                    upper = upper.max(raw[(j, k)].norm() / scale);
                    l[(j, k)] = ZERO;
                }
            }
            self.l = l.clone();
            let zp = dir * probe;
            let lwp = log_weights(&self.ctx, zp)?;
            let near = self.near(zp, &lwp);
            let mid = self.extract(&data.f_tilde[1], &data.t_tilde[1])?;
            let mis = rel_col_diff(&near, &mid);
            if best.as_ref().is_none_or(|b| mis < b.2) {
                best = Some((r_sw, l, mis, upper));
            }
            if mis <= OVERLAP_TOL {
                break;
            }
        }
        let (r_sw, l, mis, upper) = best.ok_or_else(|| Error::numerical("no admissible switch radius below r_far"))?;
        self.diagnostics.r_switch = r_sw;
        self.diagnostics.overlap_mismatch = mis;
        self.diagnostics.l_upper_residual = upper;
        self.l = l;
        Ok(())
    }

    /// l from the connection matrix: psi_0k = e_k + sum_{j<k} gamma_jk e_j.
    fn check_l_against_connection(&mut self) -> Result<()> {
        let n = self.n();
        let lc = &self.connection;
        let mut mis = 0.0f64;
        for k in 1..n {
            let block = lc.view((0, 0), (k, k)).clone_owned();
            let rhs = -lc.view((0, k), (k, 1)).clone_owned().column(0).clone_owned();
            let gamma = solve(&block, &rhs)?;
            let mut col = lc.column(k).clone_owned();
            for j in 0..k {
                col += lc.column(j) * gamma[j];
            }
            let d = (&col - self.l.column(k)).norm() / self.l.column(k).norm();
            mis = mis.max(d);
        }
        mis = mis.max((lc.column(0) - self.l.column(0)).norm() / self.l.column(0).norm());
        self.diagnostics.l_from_connection_mismatch = mis;
        Ok(())
    }

    /// Psi0-tilde at each radius along the ray of angle `phi` (radii > 0, any order).
    pub fn sample_ray(&self, phi: f64, radii: &[f64]) -> Result<Vec<Psi0Sample>> {
        self.sample_ray_zoned(phi, radii, self.r_switch(), self.r_far())
    }

    /// As `sample_ray` with explicit zone limits, r_switch <= near_max and
    /// far_min <= r_far.
    pub(crate) fn sample_ray_zoned(&self, phi: f64, radii: &[f64], near_max: f64, far_min: f64) -> Result<Vec<Psi0Sample>> {
        let ctx = &self.ctx;
        if !ctx.sector.contains_closed(phi) {
            return Err(Error::domain(format!("direction {phi} outside the closed sector")));
        }
        let dir = C64::from_polar(1.0, phi);
        let r_far = self.r_far();
        let mut order: Vec<usize> = (0..radii.len()).collect();
        order.sort_by(|&a, &b| radii[a].partial_cmp(&radii[b]).unwrap());
        let mut out: Vec<Option<Psi0Sample>> = vec![None; radii.len()];
        let mut mid_idx = Vec::new();
        let mut far_idx = Vec::new();
        for &i in &order {
            let r = radii[i];
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::domain(format!("radius {r} must be positive")));
            }
            let z = dir * r;
            let log_w = log_weights(ctx, z)?;
            if r <= near_max {
                out[i] = Some(Psi0Sample { z, tilde: self.near(z, &log_w), log_w });
            } else if r < far_min {
                mid_idx.push(i);
            } else {
                far_idx.push(i);
            }
        }
        if mid_idx.is_empty() && far_idx.is_empty() {
            return Ok(out.into_iter().map(|s| s.unwrap()).collect());
        }
        let mut mid_r: Vec<f64> = mid_idx.iter().map(|&i| radii[i]).collect();
        let need_far = !far_idx.is_empty();
        if need_far {
            mid_r.push(r_far);
        }
        let data = self.ray_data(phi, &mid_r)?;
        for (slot, &i) in mid_idx.iter().enumerate() {
            let z = dir * radii[i];
            let tilde = self.extract(&data.f_tilde[slot], &data.t_tilde[slot])?;
            out[i] = Some(Psi0Sample { z, tilde, log_w: log_weights(ctx, z)? });
        }
        if need_far {
            let slot = mid_r.len() - 1;
            let z_far = dir * r_far;
            let at_far = self.extract(&data.f_tilde[slot], &data.t_tilde[slot])?;
            let (et, _) = self.asym.e_tilde_matrix(z_far);
            let mut gamma = solve_mat(&et, &at_far)?;
            let n = ctx.n;
            for k in 0..n {
                for j in k..n {
                    gamma[(j, k)] = if j == k { ONE } else { ZERO };
                }
            }
            for &i in &far_idx {
                let z = dir * radii[i];
                let (ez, _) = self.asym.e_tilde_matrix(z);
                let mut tilde = ez.clone();
                for k in 1..n {
                    for j in 0..k {
                        let f = gamma[(j, k)] * ((ctx.r[j] - ctx.r[k]) * (z - z_far)).exp();
                        let add = ez.column(j) * f;
                        let mut col = tilde.column_mut(k);
                        col += add;
                    }
                }
                out[i] = Some(Psi0Sample { z, tilde, log_w: log_weights(ctx, z)? });
            }
        }
        Ok(out.into_iter().map(|s| s.unwrap()).collect())
    }

    /// Psi0(x, rho) at a single point.
    pub fn psi0_scaled(&self, x: f64, rho: C64) -> Result<Psi0Sample> {
        if rho.norm() == 0.0 {
            return Err(Error::domain("rho = 0"));
        }
        Ok(self.sample_ray(rho.arg(), &[rho.norm() * x])?.remove(0))
    }

    /// c(z).
    pub fn c_matrix(&self, z: C64) -> CMatrix {
        self.series.c_matrix(&self.ctx, z)
    }

    /// e(z) = c(z) L; intended for moderate |z|.
    pub fn e_matrix(&self, z: C64) -> CMatrix {
        self.c_matrix(z) * &self.connection
    }

    /// Free term F0_k(z) normalized by the forward weight, at moderate |z|
    /// computed directly from psi_0.
    pub fn log_forward_weight(&self, z: C64, k: usize) -> Result<C64> {
        Ok(log_forward(&log_weights(&self.ctx, z)?, k))
    }
}

fn solve_mat(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    Ok(inverse(m)? * rhs)
}

fn rel_col_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|k| (a.column(k) - b.column(k)).norm() / a.column(k).norm().max(1e-300))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{basis2, basis3};

    #[test]
    fn builds_reference_bases() {
        for b in [basis2(), basis3()] {
            let d = &b.diagnostics;
            assert!(d.connection_drift < 1e-7);
            assert!(d.overlap_mismatch < OVERLAP_TOL);
            assert!(d.delta0_direct_mismatch < 1e-9);
            assert!(d.l_upper_residual < 1e-8);
        }
    }

    #[test]
    fn zones_agree_and_wronskian_constant() {
        for b in [basis2(), basis3()] {
            let rs = b.r_switch();
            let rf = b.r_far();
            for phi in [b.ctx.sector.theta_min, b.ctx.sector.mid(), b.ctx.sector.theta_max] {
                let probe = [1.4 * rs, 0.8 * rf];
                let mid = b.sample_ray_zoned(phi, &probe, rs, rf).unwrap();
                let near = b.sample_ray_zoned(phi, &probe[..1], 2.0 * rs, rf).unwrap();
                let far = b.sample_ray_zoned(phi, &probe[1..], rs, 0.5 * rf).unwrap();
                assert!(rel_col_diff(&mid[0].tilde, &near[0].tilde) < 1e-9, "{}", rel_col_diff(&mid[0].tilde, &near[0].tilde));
                assert!(rel_col_diff(&mid[1].tilde, &far[0].tilde) < 1e-9, "{}", rel_col_diff(&mid[1].tilde, &far[0].tilde));
                let radii = [0.01, 0.5, rs, 0.5 * (rs + rf)];
                let s = b.sample_ray(phi, &radii).unwrap();
                let w0 = det(&s[0].psi0());
                for smp in &s {
                    let w = det(&smp.psi0());
                    assert!((w - w0).norm() < 1e-8 * w0.norm(), "{w} vs {w0}");
                }
            }
        }
    }
}
