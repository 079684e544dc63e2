//! Adaptive Dormand–Prince 5(4) integration of complex linear systems.
//!
//! The integration variable is real; complex paths are handled by the caller
//! through the right-hand side. Steps are clamped so every requested output
//! abscissa is hit exactly (no interpolation).

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-11, atol: 1e-14, h_init: 1e-3, h_min: 1e-14, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest accepted weighted local error (<= 1 by construction).
    pub max_error_ratio: f64,
}

/// States at the requested outputs (in request order) plus controller statistics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub s: Vec<f64>,
    pub y: Vec<Vec<C64>>,
    pub stats: StepStats,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `dy/ds = f(s, y)` from `s0` to `s1`, recording the state at each
/// of `outputs` (which must lie in the closed interval and be monotone in the
/// direction of integration). `s1` itself is always the last recorded point.
pub fn integrate<F>(mut f: F, s0: f64, y0: &[C64], s1: f64, outputs: &[f64], ctl: &StepControl) -> Result<Trajectory>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let dim = y0.len();
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::domain("output abscissae not monotone in integration direction"));
        }
    }
    let mut targets: Vec<f64> = outputs.iter().copied().filter(|&o| (o - s0) * dir >= 0.0 && (s1 - o) * dir >= 0.0).collect();
    if targets.len() != outputs.len() {
        return Err(Error::domain("output abscissa outside the integration interval"));
    }
    targets.push(s1);

    let mut traj = Trajectory { s: Vec::with_capacity(targets.len()), y: Vec::with_capacity(targets.len()), stats: StepStats::default() };
    let mut s = s0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); dim]; 7];
    let mut tmp = vec![C64::new(0.0, 0.0); dim];
    let mut y5 = vec![C64::new(0.0, 0.0); dim];
    let mut h = ctl.h_init.abs().min((s1 - s0).abs()).max(ctl.h_min);
    f(s, &y, &mut k[0]);
    let mut steps = 0usize;
    let span = (s1 - s0).abs().max(1.0);

    for &target in &targets {
        while (target - s) * dir > 1e-15 * span {
            steps += 1;
            if steps > ctl.max_steps {
                return Err(Error::numerical(format!("step budget exhausted at s = {s}")));
            }
            let remaining = (target - s).abs();
            let mut hs = h.min(remaining);
            // avoid a sliver step right before an output
            if remaining - hs < 0.01 * hs {
                hs = remaining;
            }
            let hd = hs * dir;
            let stage = |a: &[(usize, f64)], k: &Vec<Vec<C64>>, tmp: &mut Vec<C64>| {
                for i in 0..dim {
                    let mut acc = y[i];
                    for &(j, c) in a {
                        acc += k[j][i] * (c * hd);
                    }
                    tmp[i] = acc;
                }
            };
            stage(&[(0, A21)], &k, &mut tmp);
            f(s + C2 * hd, &tmp, &mut k[1]);
            stage(&[(0, A31), (1, A32)], &k, &mut tmp);
            f(s + C3 * hd, &tmp, &mut k[2]);
            stage(&[(0, A41), (1, A42), (2, A43)], &k, &mut tmp);
            f(s + C4 * hd, &tmp, &mut k[3]);
            stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &k, &mut tmp);
            f(s + C5 * hd, &tmp, &mut k[4]);
            stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k, &mut tmp);
            f(s + hd, &tmp, &mut k[5]);
            stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], &k, &mut y5);
            f(s + hd, &y5, &mut k[6]);

            let mut err = 0.0f64;
            for i in 0..dim {
                let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * hd;
                let sc = ctl.atol + ctl.rtol * y[i].norm().max(y5[i].norm());
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                return Err(Error::numerical(format!("non-finite state at s = {s}")));
            }
            if err <= 1.0 {
                s = if hs == remaining { target } else { s + hd };
                std::mem::swap(&mut y, &mut y5);
                k.swap(0, 6);
                traj.stats.accepted += 1;
                traj.stats.max_error_ratio = traj.stats.max_error_ratio.max(err);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // keep the controller's step when it was shortened only to hit an output
                h = if hs < h { h.max(hs * fac) } else { hs * fac };
            } else {
                traj.stats.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < ctl.h_min {
                    return Err(Error::numerical(format!("step size underflow at s = {s}")));
                }
            }
        }
        s = target;
        traj.s.push(target);
        traj.y.push(y.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn complex_exponential() {
        let lam = c(-0.3, 2.0);
        let ctl = StepControl { rtol: 1e-12, ..Default::default() };
        let tr = integrate(|_, y, dy| dy[0] = lam * y[0], 0.0, &[c(1.0, 0.0)], 3.0, &[0.5, 1.0, 2.5], &ctl).unwrap();
        for (s, y) in tr.s.iter().zip(&tr.y) {
            assert!((y[0] - (lam * s).exp()).norm() < 1e-10, "s={s}");
        }
        assert_eq!(tr.s, vec![0.5, 1.0, 2.5, 3.0]);
    }

    #[test]
    fn backward_direction() {
        let ctl = StepControl::default();
        let tr = integrate(|s, _, dy| dy[0] = c(2.0 * s, 0.0), 2.0, &[c(4.0, 0.0)], 0.0, &[1.0], &ctl).unwrap();
        assert!((tr.y[0][0] - c(1.0, 0.0)).norm() < 1e-10);
        assert!(tr.y[1][0].norm() < 1e-10);
    }
}
