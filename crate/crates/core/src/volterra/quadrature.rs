//! Product quadrature for integrals of exp(D (1 - u)) g(u) over [0, 1].

use crate::linalg::{c, C64};

/// Nodes used for the polynomial part, at most this many.
pub const MAX_NODES: usize = 6;

/// M_p = int_0^1 exp(D (1 - u)) u^p du for p < count.
pub fn moments(d: C64, count: usize) -> [C64; MAX_NODES] {
    let mut m = [c(0.0, 0.0); MAX_NODES];
    if d.norm() < 2.0 {
        // M_p = sum_j D^j p! / (j + p + 1)!
        for (p, slot) in m.iter_mut().enumerate().take(count) {
            let mut term = c(1.0 / (p as f64 + 1.0), 0.0);
            let mut acc = term;
            for j in 1..80 {
                term = term * d / (j + p + 1) as f64;
                acc += term;
                if term.norm() < 1e-18 * acc.norm() {
                    break;
                }
            }
            *slot = acc;
        }
    } else {
        m[0] = (d.exp() - 1.0) / d;
        for p in 1..count {
            m[p] = (m[p - 1] * p as f64 - 1.0) / d;
        }
    }
    m
}

/// Inverse of the Vandermonde matrix V[j][p] = s_j^p, row-major, for the
/// given nodes (distinct, at most `MAX_NODES`).
pub fn vandermonde_inverse(s: &[f64]) -> [[f64; MAX_NODES]; MAX_NODES] {
    let n = s.len();
    let mut a = [[0.0; 2 * MAX_NODES]; MAX_NODES];
    for j in 0..n {
        let mut pw = 1.0;
        for p in 0..n {
            a[j][p] = pw;
            pw *= s[j];
        }
        a[j][n + j] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut().take(2 * n) {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for q in 0..2 * n {
                        a[r][q] -= f * a[col][q];
                    }
                }
            }
        }
    }
    let mut out = [[0.0; MAX_NODES]; MAX_NODES];
    for j in 0..n {
        for p in 0..n {
            out[j][p] = a[j][n + p];
        }
    }
    out
}

/// Weights w_j with int_0^1 exp(D(1-u)) P(u) du = sum_j w_j P(s_j) for
/// polynomials of degree < nodes.
pub fn weights(vinv: &[[f64; MAX_NODES]; MAX_NODES], nodes: usize, d: C64) -> [C64; MAX_NODES] {
    let m = moments(d, nodes);
    let mut w = [c(0.0, 0.0); MAX_NODES];
    // L_j(u) = sum_p Vinv[p][j] u^p
    for (j, wj) in w.iter_mut().enumerate().take(nodes) {
        let mut acc = c(0.0, 0.0);
        for (p, mp) in m.iter().enumerate().take(nodes) {
            acc += mp * vinv[p][j];
        }
        *wj = acc;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(d: C64, p: i32) -> C64 {
        let n = 20000;
        let h = 1.0 / n as f64;
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                (d * (1.0 - u)).exp() * u.powi(p) * h
            })
            .sum()
    }

    #[test]
    fn moments_both_regimes() {
        for d in [c(0.3, -0.2), c(-1.9, 0.5), c(-2.1, 0.0), c(-30.0, 5.0), c(3.0, 4.0), c(0.0, 0.0)] {
            let m = moments(d, 4);
            for p in 0..4 {
                let b = brute(d, p as i32);
                assert!((m[p] - b).norm() < 1e-6 * b.norm().max(1e-3), "D={d} p={p}: {} vs {}", m[p], b);
            }
        }
    }

    #[test]
    fn exact_for_cubics() {
        let s = [-2.0, -1.0, 0.0, 1.0];
        let vinv = vandermonde_inverse(&s);
        let d = c(-0.7, 1.3);
        let w = weights(&vinv, 4, d);
        let poly = |u: f64| 1.0 - 2.0 * u + 0.5 * u * u * u;
        let q: C64 = (0..4).map(|j| w[j] * poly(s[j])).sum();
        let m = moments(d, 4);
        let exact = m[0] - m[1] * 2.0 + m[3] * 0.5;
        assert!((q - exact).norm() < 1e-13);
    }
}
