//! Structural conditions on (A, B), sector geometry and the validated context.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, det, eigenvalues, eigenvector, CMatrix, CVector, C64};

/// JSON form of a context: complex entries are `[re, im]` pairs, `A` row-major,
/// `B` the diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextSpec {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "B")]
    pub b: Vec<[f64; 2]>,
    pub sector: SectorSpec,
    #[serde(default = "default_series_order")]
    pub series_order: usize,
    #[serde(default = "default_asym_order")]
    pub asym_order: usize,
}

fn default_series_order() -> usize {
    60
}

fn default_asym_order() -> usize {
    80
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SectorSpec {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl SectorSpec {
    pub fn mid(&self) -> f64 {
        0.5 * (self.theta_min + self.theta_max)
    }

    /// True when `theta` (mod 2pi) lies in the closed sector.
    pub fn contains_closed(&self, theta: f64) -> bool {
        let t = self.unwrap_angle(theta);
        t >= self.theta_min - 1e-12 && t <= self.theta_max + 1e-12
    }

    /// Representative of `theta` mod 2pi closest to the sector midline.
    pub fn unwrap_angle(&self, theta: f64) -> f64 {
        let mid = self.mid();
        theta - TAU * ((theta - mid) / TAU).round()
    }
}

impl ContextSpec {
    pub fn from_parts(a: &CMatrix, b: &[C64], sector: SectorSpec) -> Self {
        let n = b.len();
        ContextSpec {
            n,
            a: (0..n).map(|i| (0..n).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect()).collect(),
            b: b.iter().map(|z| [z.re, z.im]).collect(),
            sector,
            series_order: default_series_order(),
            asym_order: default_asym_order(),
        }
    }

    pub fn matrix_a(&self) -> Result<CMatrix> {
        if self.a.len() != self.n || self.a.iter().any(|r| r.len() != self.n) {
            return Err(Error::input(format!("A must be {0}x{0}", self.n)));
        }
        Ok(CMatrix::from_fn(self.n, self.n, |i, j| c(self.a[i][j][0], self.a[i][j][1])))
    }

    pub fn diag_b(&self) -> Result<Vec<C64>> {
        if self.b.len() != self.n {
            return Err(Error::input(format!("B must have {} diagonal entries", self.n)));
        }
        Ok(self.b.iter().map(|p| c(p[0], p[1])).collect())
    }
}

/// One checked condition with its margin (distance from violation).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub mu: Vec<[f64; 2]>,
    pub separatrix_angles: Vec<f64>,
    pub ordering: Vec<usize>,
    pub ill_conditioned: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, margin: f64, detail: String) {
        self.checks.push(ConditionCheck { name: name.to_string(), passed, margin, detail });
    }

    fn first_failure(&self) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Tolerances for the structural checks.
pub const OFFDIAG_TOL: f64 = 1e-13;
pub const RESONANCE_TOL: f64 = 1e-6;
pub const DISTINCT_TOL: f64 = 1e-8;
pub const TRACE_TOL: f64 = 1e-12;
pub const COLINEAR_TOL: f64 = 1e-10;

/// Validated (A, B, sector) together with its eigen-data and ordering.
#[derive(Debug, Clone)]
pub struct SpectralContext {
    pub n: usize,
    pub a: CMatrix,
    pub b: Vec<C64>,
    /// Eigenvalues of A sorted by real part.
    pub mu: Vec<C64>,
    /// Eigenvector matrix (columns h_k), det H = 1.
    pub h: CMatrix,
    pub sector: SectorSpec,
    /// R_k = b_{perm[k]}, increasing in Re(R_k x) on the sector.
    pub r: Vec<C64>,
    /// 0-based permutation: column k of the permutation matrix is e_{perm[k]}.
    pub perm: Vec<usize>,
    pub series_order: usize,
    pub asym_order: usize,
}

/// Angles in [0, 2pi) where Re(e^{i theta}(b_j - b_k)) = 0 for some pair.
pub fn separatrix_set(b: &[C64]) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..b.len() {
        for k in j + 1..b.len() {
            let d = b[j] - b[k];
            if d.norm() == 0.0 {
                continue;
            }
            // Re(e^{i t} d) = |d| cos(t + arg d) = 0
            for base in [PI / 2.0, 3.0 * PI / 2.0] {
                out.push((base - d.arg()).rem_euclid(TAU));
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

fn order_at(b: &[C64], theta: f64) -> Vec<usize> {
    let dir = C64::from_polar(1.0, theta);
    let mut idx: Vec<usize> = (0..b.len()).collect();
    idx.sort_by(|&i, &j| (b[i] * dir).re.partial_cmp(&(b[j] * dir).re).unwrap());
    idx
}

/// Ordering R_1..R_n of the diagonal of B on the sector and the permutation
/// with (R_1..R_n) = (b_1..b_n) f.
pub fn sector_ordering(b: &[C64], sector: &SectorSpec) -> Result<(Vec<C64>, Vec<usize>)> {
    if !(sector.theta_max > sector.theta_min) || sector.theta_max - sector.theta_min >= TAU {
        return Err(Error::domain("sector needs theta_min < theta_max < theta_min + 2pi"));
    }
    for angle in separatrix_set(b) {
        let t = sector.unwrap_angle(angle);
        if t > sector.theta_min + 1e-12 && t < sector.theta_max - 1e-12 {
            return Err(Error::Condition {
                condition: "sector",
                detail: format!("sector crosses the separatrix ray at angle {angle:.6}"),
            });
        }
    }
    let width = sector.theta_max - sector.theta_min;
    let probes = [sector.theta_min + 1e-9 * width.max(1.0), sector.mid(), sector.theta_max - 1e-9 * width.max(1.0)];
    let perm = order_at(b, probes[1]);
    for &t in &probes {
        let dir = C64::from_polar(1.0, t);
        let vals: Vec<f64> = perm.iter().map(|&i| (b[i] * dir).re).collect();
        if vals.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Condition { condition: "sector", detail: "ordering not constant: sector crosses Sigma".into() });
        }
    }
    Ok((perm.iter().map(|&i| b[i]).collect(), perm))
}

fn frac_distance(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Runs every structural check and reports margins; never fails on bad data.
pub fn validation_report(spec: &ContextSpec) -> Result<ValidationReport> {
    let a = spec.matrix_a()?;
    let b = spec.diag_b()?;
    let n = spec.n;
    let mut rep = ValidationReport { checks: Vec::new(), mu: Vec::new(), separatrix_angles: separatrix_set(&b), ordering: Vec::new(), ill_conditioned: false };

    let scale_a = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let diag = (0..n).map(|i| a[(i, i)].norm()).fold(0.0, f64::max);
    rep.push("A off-diagonal", diag <= OFFDIAG_TOL * scale_a, -diag, format!("max |A_jj| = {diag:e}"));

    let mut mu = eigenvalues(&a)?;
    mu.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
    rep.mu = mu.iter().map(|z| [z.re, z.im]).collect();
    let mut distinct = f64::INFINITY;
    let mut resonance = f64::INFINITY;
    let mut worst_pair = (0, 0);
    for j in 0..n {
        for k in j + 1..n {
            let d = mu[j] - mu[k];
            distinct = distinct.min(d.norm());
            let r = (frac_distance(d.re).powi(2) + d.im.powi(2)).sqrt();
            if r < resonance {
                resonance = r;
                worst_pair = (j + 1, k + 1);
            }
        }
    }
    rep.push("eigenvalues distinct", distinct > DISTINCT_TOL, distinct, format!("min |mu_j - mu_k| = {distinct:e}"));
    rep.ill_conditioned = resonance < RESONANCE_TOL;
    rep.push(
        "mu_j - mu_k not integer",
        resonance >= RESONANCE_TOL,
        resonance,
        format!("closest pair ({}, {}) at distance {resonance:e} from Z", worst_pair.0, worst_pair.1),
    );
    let gap = mu.windows(2).map(|w| w[1].re - w[0].re).fold(f64::INFINITY, f64::min);
    rep.push("Re mu strictly increasing", n < 2 || gap > DISTINCT_TOL, gap, format!("min Re gap = {gap:e}"));
    let re0 = mu.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    rep.push("Re mu_k != 0", re0 > DISTINCT_TOL, re0, format!("min |Re mu_k| = {re0:e}"));

    let bmin = b.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let scale_b = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    rep.push("b_j nonzero", bmin > DISTINCT_TOL * scale_b, bmin, format!("min |b_j| = {bmin:e}"));
    let mut bdist = f64::INFINITY;
    for j in 0..n {
        for k in j + 1..n {
            bdist = bdist.min((b[j] - b[k]).norm());
        }
    }
    rep.push("b_j distinct", bdist > DISTINCT_TOL * scale_b, bdist, format!("min |b_j - b_k| = {bdist:e}"));
    let tr: C64 = b.iter().sum();
    rep.push("sum b_j = 0", tr.norm() <= TRACE_TOL * scale_b, -tr.norm(), format!("|sum b_j| = {:e}", tr.norm()));
    let mut colin = f64::INFINITY;
    let mut worst_triple = (0, 0, 0);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let u = b[j] - b[i];
                let v = b[k] - b[i];
                let area = (u.conj() * v).im.abs() / (u.norm() * v.norm()).max(1e-300);
                if area < colin {
                    colin = area;
                    worst_triple = (i + 1, j + 1, k + 1);
                }
            }
        }
    }
    rep.push(
        "b triples noncolinear",
        n < 3 || colin > COLINEAR_TOL,
        colin,
        format!("worst triple {:?} sine {colin:e}", worst_triple),
    );

    match sector_ordering(&b, &spec.sector) {
        Ok((_, perm)) => {
            rep.ordering = perm.iter().map(|p| p + 1).collect();
            rep.push("sector avoids Sigma", true, 0.0, "ordering constant on sector".into());
        }
        Err(e) => rep.push("sector avoids Sigma", false, 0.0, e.to_string()),
    }
    Ok(rep)
}

impl SpectralContext {
    /// Validates Conditions A and B and the sector, returning the context.
    pub fn validate(spec: &ContextSpec) -> Result<(SpectralContext, ValidationReport)> {
        let rep = validation_report(spec)?;
        if let Some(fail) = rep.first_failure() {
            let condition = if fail.name.contains("sector") {
                "sector"
            } else if fail.name.starts_with('A') || fail.name.contains("mu") || fail.name.contains("eigen") {
                "Condition A"
            } else {
                "Condition B"
            };
            let detail = if rep.ill_conditioned && fail.name.contains("integer") {
                format!("ill-conditioned: {}", fail.detail)
            } else {
                format!("{}: {}", fail.name, fail.detail)
            };
            return Err(Error::Condition { condition, detail });
        }
        let a = spec.matrix_a()?;
        let b = spec.diag_b()?;
        let n = spec.n;
        let mu: Vec<C64> = rep.mu.iter().map(|p| c(p[0], p[1])).collect();
        let mut h = CMatrix::zeros(n, n);
        for (k, &m) in mu.iter().enumerate() {
            let v = eigenvector(&a, m)?;
            let v = &v / C64::from(v.norm());
            h.set_column(k, &v);
        }
        let d = det(&h);
        if d.norm() < 1e-12 {
            return Err(Error::numerical("eigenvector matrix is singular"));
        }
        // det H = 1
        let s = d.powf(-1.0 / n as f64);
        h *= s;
        let d2 = det(&h);
        let fix = CVector::from_element(1, d2).map(|z| z.inv())[0];
        let mut col0 = h.column(0).clone_owned();
        col0 *= fix;
        h.set_column(0, &col0);
        let (r, perm) = sector_ordering(&b, &spec.sector)?;
        Ok((
            SpectralContext { n, a, b, mu, h, sector: spec.sector, r, perm, series_order: spec.series_order, asym_order: spec.asym_order },
            rep,
        ))
    }

    pub fn from_parts(a: &CMatrix, b: &[C64], sector: SectorSpec) -> Result<SpectralContext> {
        Ok(Self::validate(&ContextSpec::from_parts(a, b, sector))?.0)
    }

    /// Diagonal matrix B.
    pub fn matrix_b(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_vec(self.b.clone()))
    }

    /// Permutation matrix with columns f_k = e_{perm[k]}.
    pub fn perm_matrix(&self) -> CMatrix {
        let mut f = CMatrix::zeros(self.n, self.n);
        for (k, &p) in self.perm.iter().enumerate() {
            f[(p, k)] = c(1.0, 0.0);
        }
        f
    }

    /// det of the permutation matrix, i.e. |f_1 ^ ... ^ f_n|.
    pub fn perm_sign(&self) -> f64 {
        let mut p = self.perm.clone();
        let mut sign = 1.0;
        for i in 0..p.len() {
            while p[i] != i {
                let j = p[i];
                p.swap(i, j);
                sign = -sign;
            }
        }
        sign
    }

    /// Branch of log z continuous over the sector (argument nearest the midline).
    pub fn log(&self, z: C64) -> C64 {
        c(z.norm().ln(), self.sector.unwrap_angle(z.arg()))
    }

    /// z^mu on the sector branch.
    pub fn pow(&self, z: C64, mu: C64) -> C64 {
        (mu * self.log(z)).exp()
    }

    /// Forward partial sums of the ordered exponents: sum_{j<=k} R_j (1-based k).
    pub fn r_forward(&self, k: usize) -> C64 {
        self.r[..k].iter().sum()
    }

    /// Backward partial sums sum_{j>=k} R_j (1-based k).
    pub fn r_backward(&self, k: usize) -> C64 {
        self.r[k - 1..].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;

    pub(crate) fn two_by_two() -> ContextSpec {
        let a = CMatrix::from_row_slice(2, 2, &[ZERO, c(1.5, 0.0), c(0.375, 0.0), ZERO]);
        ContextSpec::from_parts(&a, &[c(1.0, 0.0), c(-1.0, 0.0)], SectorSpec { theta_min: -1.2, theta_max: 1.2 })
    }

    #[test]
    fn validates_reference_two_by_two() {
        let (ctx, rep) = SpectralContext::validate(&two_by_two()).unwrap();
        assert!(rep.passed());
        assert!((ctx.mu[0] - c(-0.75, 0.0)).norm() < 1e-13);
        assert!((ctx.mu[1] - c(0.75, 0.0)).norm() < 1e-13);
        assert!((det(&ctx.h) - c(1.0, 0.0)).norm() < 1e-13);
        for k in 0..2 {
            let hk = ctx.h.column(k).clone_owned();
            assert!(((&ctx.a * &hk) - &hk * ctx.mu[k]).norm() < 1e-12);
        }
        // R = (-1, 1) for Re x > 0
        assert_eq!(ctx.r, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(ctx.perm, vec![1, 0]);
        assert_eq!(ctx.perm_sign(), -1.0);
    }

    #[test]
    fn rejects_nonzero_diagonal() {
        let mut spec = two_by_two();
        spec.a[0][0] = [0.1, 0.0];
        match SpectralContext::validate(&spec) {
            Err(Error::Condition { condition, .. }) => assert_eq!(condition, "Condition A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_resonant_eigenvalues() {
        // mu = +-1/2, difference 1
        let mut spec = two_by_two();
        spec.a = vec![vec![[0.0, 0.0], [0.5, 0.0]], vec![[0.5, 0.0], [0.0, 0.0]]];
        let err = SpectralContext::validate(&spec).unwrap_err();
        assert!(err.to_string().contains("ill-conditioned"), "{err}");
    }

    #[test]
    fn three_point_condition_b() {
        let b = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, -1.0)];
        let sum: C64 = b.iter().sum();
        assert_eq!(sum, ZERO);
        let u = b[1] - b[0];
        let v = b[2] - b[0];
        assert!((u.conj() * v).im.abs() > 0.5);
        assert_eq!(separatrix_set(&b).len(), 6);
    }

    #[test]
    fn separatrix_of_real_pair() {
        let s = separatrix_set(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(s.len(), 2);
        assert!((s[0] - PI / 2.0).abs() < 1e-14 && (s[1] - 3.0 * PI / 2.0).abs() < 1e-14);
        // rotating B by e^{i phi} rotates angles by -phi
        let phi = 0.3;
        let rot = C64::from_polar(1.0, phi);
        let s2 = separatrix_set(&[rot, -rot]);
        for a in &s2 {
            assert!(s.iter().any(|b| ((b - phi).rem_euclid(TAU) - a).abs() < 1e-12));
        }
    }

    #[test]
    fn ordering_on_both_half_planes() {
        let b = [c(1.0, 0.0), c(-1.0, 0.0)];
        let (r, perm) = sector_ordering(&b, &SectorSpec { theta_min: -0.5, theta_max: 0.5 }).unwrap();
        assert_eq!(r, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(perm, vec![1, 0]);
        let (r, _) = sector_ordering(&b, &SectorSpec { theta_min: PI - 0.5, theta_max: PI + 0.5 }).unwrap();
        assert_eq!(r, vec![c(1.0, 0.0), c(-1.0, 0.0)]);
        assert!(sector_ordering(&b, &SectorSpec { theta_min: 1.0, theta_max: 2.0 }).is_err());
        let b3 = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, -1.0)];
        let sec = SectorSpec { theta_min: 0.1, theta_max: 0.3 };
        if let Ok((r, perm)) = sector_ordering(&b3, &sec) {
            for (k, &p) in perm.iter().enumerate() {
                assert_eq!(r[k], b3[p]);
            }
        }
    }
}
