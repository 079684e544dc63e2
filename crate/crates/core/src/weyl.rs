//! Characteristic functions, Weyl-type solutions and their corrections.
//!
//! All quantities are normalized: Psi~_k = Psi_k / W_k, and T~_k, F~_k come
//! from the Volterra solver. Scalar pairings are multiplied by
//! W_all = prod_j W_j(rho x), which makes them O(1) and x-independent.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::ser_complex;
use crate::linalg::{det, solve, CMatrix, CVector, C64, ONE, ZERO};
use crate::potential::Potential;
use crate::tensor_algebra::{plucker_residual, MultiVector};
use crate::unperturbed::UnperturbedBasis;
use crate::volterra::{solve_all, RaySolution, SolverOptions};

#[derive(Debug, Clone, Serialize)]
pub struct WeylOptions {
    /// |Delta_k| at or below this is treated as a zero.
    pub degeneracy_tol: f64,
    /// Largest n with a Cramer cross-check.
    pub cramer_max_n: usize,
}

impl Default for WeylOptions {
    fn default() -> Self {
        WeylOptions { degeneracy_tol: 1e-10, cramer_max_n: 4 }
    }
}

/// Delta_k(rho) with its x-consistency diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicValue {
    pub k: usize,
    #[serde(serialize_with = "ser_complex")]
    pub value: C64,
    /// Grid point the value is taken at.
    pub x: f64,
    /// max_i |Delta_k(x_i) - value|.
    pub spread: f64,
    /// Allowed spread: combined error bars of the two points.
    pub tolerance: f64,
    pub consistent: bool,
    pub error_bar: f64,
}

fn w_all(sol: &RaySolution, i: usize) -> C64 {
    sol.psi0[i].log_w.iter().sum::<C64>().exp()
}

fn f_error(sol: &RaySolution, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        sol.f[k - 1].error_estimate
    }
}

/// Delta_k(rho) = |F_{k-1} ^ T_k|, evaluated on every output point.
pub fn characteristic(sol: &RaySolution, k: usize) -> Result<CharacteristicValue> {
    let n = sol.t.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("characteristic index {k} outside 1..={n}")));
    }
    if sol.xs.is_empty() {
        return Err(Error::domain("characteristic needs tensors on at least one grid point"));
    }
    if k == 1 {
        return Ok(CharacteristicValue { k, value: ONE, x: sol.xs[0], spread: 0.0, tolerance: 0.0, consistent: true, error_bar: 0.0 });
    }
    let (ef, et) = (f_error(sol, k - 1), sol.t[k - 1].error_estimate);
    let mut vals = Vec::with_capacity(sol.xs.len());
    let mut bars = Vec::with_capacity(sol.xs.len());
    for i in 0..sol.xs.len() {
        let f = sol.f_total(k - 1, i);
        let t = sol.t_total(k, i);
        let w = w_all(sol, i);
        let (nf, nt) = (f.norm(), t.norm());
        vals.push(w * f.pair(&t));
        let floor = (1e-12 + sol.basis_error) * nf * nt;
        bars.push(w.norm() * (ef * nt + et * nf + ef * et + floor));
    }
    let r = (0..bars.len()).min_by(|&a, &b| bars[a].partial_cmp(&bars[b]).unwrap()).unwrap();
    let mut spread = 0.0f64;
    let mut tolerance = 0.0f64;
    let mut consistent = true;
    for i in 0..vals.len() {
        let d = (vals[i] - vals[r]).norm();
        let tol = bars[i] + bars[r];
        spread = spread.max(d);
        tolerance = tolerance.max(tol);
        consistent &= d <= tol;
    }
    Ok(CharacteristicValue { k, value: vals[r], x: sol.xs[r], spread, tolerance, consistent, error_bar: bars[r] })
}

pub fn characteristic_all(sol: &RaySolution) -> Result<Vec<CharacteristicValue>> {
    (1..=sol.t.len()).map(|k| characteristic(sol, k)).collect()
}

/// Unperturbed pairing W_all |F0~_{k-1} ^ T0~_k| at output i.
fn delta0_at(sol: &RaySolution, k: usize, i: usize) -> C64 {
    if k == 1 {
        return ONE;
    }
    w_all(sol, i) * sol.f[k - 2].free[i].pair(&sol.t[k - 1].free[i])
}

/// Delta_k over a set of rho samples.
#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicProfile {
    #[serde(serialize_with = "crate::io::ser_complex_vec")]
    pub rho: Vec<C64>,
    /// values[s][k - 1].
    pub values: Vec<Vec<CharacteristicValue>>,
}

impl CharacteristicProfile {
    pub fn from_solutions(sols: &[RaySolution]) -> Result<Self> {
        let rho = sols.iter().map(|s| s.rho).collect();
        let values = sols.iter().map(characteristic_all).collect::<Result<_>>()?;
        Ok(CharacteristicProfile { rho, values })
    }

    pub fn all_consistent(&self) -> bool {
        self.values.iter().flatten().all(|v| v.consistent)
    }

    /// rho, Delta_2..Delta_n, smallest |Delta_k| and worst spread per sample.
    pub fn to_csv(&self) -> String {
        let n = self.values.first().map_or(0, |v| v.len());
        let mut s = String::from("rho_re,rho_im");
        for k in 2..=n {
            let _ = write!(s, ",delta{k}_re,delta{k}_im");
        }
        s.push_str(",min_abs_delta,max_spread\n");
        for (rho, vals) in self.rho.iter().zip(&self.values) {
            let _ = write!(s, "{:.17e},{:.17e}", rho.re, rho.im);
            for v in vals.iter().skip(1) {
                let _ = write!(s, ",{:.17e},{:.17e}", v.value.re, v.value.im);
            }
            let margin = vals.iter().map(|v| v.value.norm()).fold(f64::INFINITY, f64::min);
            let spread = vals.iter().map(|v| v.spread).fold(0.0, f64::max);
            let _ = writeln!(s, ",{margin:.6e},{spread:.6e}");
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Membership {
    #[serde(serialize_with = "ser_complex")]
    pub rho: C64,
    pub member: bool,
    /// Smallest |Delta_k| and its k.
    pub margin: f64,
    pub k_min: usize,
    pub exact_zero: bool,
}

/// Flags rho samples where some |Delta_k| <= threshold.
pub fn g0_membership(profile: &CharacteristicProfile, threshold: f64) -> Vec<Membership> {
    profile
        .rho
        .iter()
        .zip(&profile.values)
        .map(|(&rho, vals)| {
            let (k_min, margin) = vals
                .iter()
                .map(|v| (v.k, v.value.norm()))
                .fold((1, f64::INFINITY), |acc, (k, a)| if a < acc.1 { (k, a) } else { acc });
            Membership { rho, member: margin > threshold, margin, k_min, exact_zero: margin == 0.0 }
        })
        .collect()
}

/// One SLAE for beta_{.k} at one grid point.
#[derive(Debug, Clone)]
pub struct Slae {
    pub m: CMatrix,
    pub u: CVector,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct WeylDiagnostics {
    /// max |F~_{k-1} ^ Psi~_k - F~_k| / |F~_k|.
    pub slae_f_residual: f64,
    /// max |Psi~_k ^ T~_k| / (|Psi~_k| |T~_k|).
    pub slae_t_residual: f64,
    pub plucker_t: f64,
    pub plucker_f: f64,
    /// max |beta_LU - beta_Cramer|, or None above cramer_max_n.
    pub cramer_mismatch: Option<f64>,
    /// Largest 1-norm condition number of the SLAE matrices.
    pub condition: f64,
    /// Error bar for Psi~ propagated from the tensor error estimates.
    pub error_bar: f64,
}

/// Weyl-type solutions at one rho on the output grid.
#[derive(Debug, Clone, Serialize)]
pub struct WeylSolutionSet {
    #[serde(serialize_with = "ser_complex")]
    pub rho: C64,
    pub n: usize,
    pub xs: Vec<f64>,
    #[serde(skip)]
    pub psi0_tilde: Vec<CMatrix>,
    #[serde(skip)]
    pub log_w: Vec<Vec<C64>>,
    /// Columns Psi~_k per grid point.
    #[serde(skip)]
    pub psi_tilde: Vec<CMatrix>,
    /// Columns Psi^_k = Psi~_k - Psi0~_k.
    #[serde(skip)]
    pub psi_hat: Vec<CMatrix>,
    #[serde(skip)]
    pub beta: Vec<CMatrix>,
    /// systems[i][k - 1].
    #[serde(skip)]
    pub systems: Vec<Vec<Slae>>,
    pub delta: Vec<CharacteristicValue>,
    /// Unperturbed Delta0_k at the reference point of each Delta_k.
    #[serde(serialize_with = "crate::io::ser_complex_vec")]
    pub delta0: Vec<C64>,
    /// |f|, the determinant of the permutation matrix.
    pub perm_sign: f64,
    pub diagnostics: WeylDiagnostics,
}

fn wedge_all(n: usize, vs: &[&MultiVector]) -> MultiVector {
    let mut acc = MultiVector::scalar(n, ONE);
    for v in vs {
        acc = acc.wedge(v).expect("degree within n");
    }
    acc
}

fn columns(mat: &CMatrix) -> Vec<MultiVector> {
    (0..mat.ncols()).map(|j| MultiVector::from_vector(&mat.column(j).clone_owned())).collect()
}

/// The SLAE of Theorem 2 in normalized form, scaled by W_all.
fn build_slae(n: usize, k: usize, psi: &[MultiVector], f_prev: &MultiVector, f_k: &MultiVector, t_k: &MultiVector, w: C64) -> Slae {
    let mut m = CMatrix::zeros(n, n);
    let mut u = CVector::zeros(n);
    for r in 0..n {
        if r + 1 >= k {
            let rest: Vec<&MultiVector> = (k - 1..n).filter(|&j| j != r).map(|j| &psi[j]).collect();
            let tail = wedge_all(n, &rest);
            for j in 0..n {
                m[(r, j)] = w * f_prev.wedge(&psi[j]).expect("degree k").pair(&tail);
            }
            u[r] = w * f_k.pair(&tail);
        } else {
            let rest: Vec<&MultiVector> = (0..k - 1).filter(|&j| j != r).map(|j| &psi[j]).collect();
            let head = wedge_all(n, &rest);
            for j in 0..n {
                m[(r, j)] = w * head.wedge(&psi[j]).expect("degree k - 1").pair(t_k);
            }
        }
    }
    Slae { m, u }
}

fn cramer(m: &CMatrix, u: &CVector) -> (C64, Vec<C64>) {
    let d = det(m);
    let nums = (0..m.ncols())
        .map(|j| {
            let mut mj = m.clone();
            mj.set_column(j, u);
            det(&mj)
        })
        .collect();
    (d, nums)
}

fn op_norm1(m: &CMatrix) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves Proposition 2's SLAE at every grid point for every k.
pub fn assemble_weyl(sol: &RaySolution, opts: &WeylOptions) -> Result<WeylSolutionSet> {
    let n = sol.t.len();
    let delta = characteristic_all(sol)?;
    if let Some(bad) = delta.iter().find(|d| d.value.norm() <= opts.degeneracy_tol) {
        return Err(Error::Degenerate { k: bad.k, rho: format!("{}", sol.rho), magnitude: bad.value.norm() });
    }
    let ref_index = |d: &CharacteristicValue| sol.xs.iter().position(|&x| x == d.x).unwrap_or(0);
    let delta0: Vec<C64> = delta.iter().map(|d| delta0_at(sol, d.k, ref_index(d))).collect();
    let tensor_error = sol.t.iter().chain(&sol.f).map(|f| f.error_estimate).fold(0.0, f64::max) + sol.basis_error;
    let mut diag = WeylDiagnostics { cramer_mismatch: (n <= opts.cramer_max_n).then_some(0.0), ..Default::default() };
    let nx = sol.xs.len();
    let mut set = WeylSolutionSet {
        rho: sol.rho,
        n,
        xs: sol.xs.clone(),
        psi0_tilde: Vec::with_capacity(nx),
        log_w: Vec::with_capacity(nx),
        psi_tilde: Vec::with_capacity(nx),
        psi_hat: Vec::with_capacity(nx),
        beta: Vec::with_capacity(nx),
        systems: Vec::with_capacity(nx),
        delta,
        delta0,
        perm_sign: 0.0,
        diagnostics: WeylDiagnostics::default(),
    };
    for i in 0..nx {
        let s = &sol.psi0[i];
        let psi = columns(&s.tilde);
        let w = w_all(sol, i);
        let mut beta = CMatrix::zeros(n, n);
        let mut systems = Vec::with_capacity(n);
        for k in 1..=n {
            let f_prev = sol.f_total(k - 1, i);
            let f_k = sol.f_total(k, i);
            let t_k = sol.t_total(k, i);
            let slae = build_slae(n, k, &psi, &f_prev, &f_k, &t_k, w);
            let b = solve(&slae.m, &slae.u).map_err(|_| Error::Degenerate {
                k,
                rho: format!("{}", sol.rho),
                magnitude: set.delta.iter().map(|d| d.value.norm()).fold(f64::INFINITY, f64::min),
            })?;
            if let Some(mm) = diag.cramer_mismatch.as_mut() {
                let (d, nums) = cramer(&slae.m, &slae.u);
                for j in 0..n {
                    *mm = mm.max((nums[j] / d - b[j]).norm());
                }
            }
            let inv = slae.m.clone().try_inverse().unwrap_or_else(|| CMatrix::from_element(n, n, C64::new(f64::INFINITY, 0.0)));
            diag.condition = diag.condition.max(op_norm1(&slae.m) * op_norm1(&inv));
            beta.set_column(k - 1, &b);
            systems.push(slae);

            let pk = MultiVector::from_vector(&(&s.tilde * &b));
            let lhs = f_prev.wedge(&pk)?;
            diag.slae_f_residual = diag.slae_f_residual.max(lhs.distance(&f_k) / f_k.norm().max(1e-300));
            if t_k.degree() < n {
                let r = pk.wedge(&t_k)?.norm() / (pk.norm() * t_k.norm()).max(1e-300);
                diag.slae_t_residual = diag.slae_t_residual.max(r);
            }
            diag.plucker_t = diag.plucker_t.max(plucker_residual(&t_k));
            diag.plucker_f = diag.plucker_f.max(plucker_residual(&f_k));
        }
        let psi_tilde = &s.tilde * &beta;
        let psi_hat = &psi_tilde - &s.tilde;
        set.psi0_tilde.push(s.tilde.clone());
        set.log_w.push(s.log_w.clone());
        set.psi_tilde.push(psi_tilde);
        set.psi_hat.push(psi_hat);
        set.beta.push(beta);
        set.systems.push(systems);
    }
    diag.error_bar = diag.condition * tensor_error;
    set.diagnostics = diag;
    set.perm_sign = perm_sign_of(sol);
    Ok(set)
}

/// |f| recovered as W_all det Psi0~ (exactly +-1 up to basis accuracy).
fn perm_sign_of(sol: &RaySolution) -> f64 {
    let d = w_all(sol, 0) * det(&sol.psi0[0].tilde);
    if d.re >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Runs the Volterra solver and assembles the Weyl solutions at one rho.
pub fn weyl_at(
    basis: &UnperturbedBasis,
    q: &Potential,
    rho: C64,
    xs: &[f64],
    sopts: &SolverOptions,
    wopts: &WeylOptions,
) -> Result<(RaySolution, WeylSolutionSet)> {
    let sol = solve_all(basis, q, rho, xs, sopts)?;
    let set = assemble_weyl(&sol, wopts)?;
    Ok((sol, set))
}

impl WeylSolutionSet {
    /// Psi_k = W_k Psi~_k at output i (may overflow for large |rho x|).
    pub fn psi(&self, i: usize, k: usize) -> CVector {
        self.psi_tilde[i].column(k - 1) * self.log_w[i][k - 1].exp()
    }

    pub fn sup_hat(&self, k: usize) -> f64 {
        self.psi_hat.iter().map(|h| h.column(k - 1).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// x, then per k the components of Psi_k, Psi~_k and Psi^_k, then log W_k.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut s = String::new();
        let _ = writeln!(s, "# rho={:.17e}{:+.17e}i", self.rho.re, self.rho.im);
        s.push('x');
        for k in 1..=n {
            for name in ["psi", "psit", "psihat"] {
                for c in 1..=n {
                    let _ = write!(s, ",{name}{k}_{c}_re,{name}{k}_{c}_im");
                }
            }
            let _ = write!(s, ",logw{k}_re,logw{k}_im");
        }
        s.push('\n');
        for i in 0..self.xs.len() {
            let _ = write!(s, "{:.17e}", self.xs[i]);
            for k in 1..=n {
                let full = self.psi(i, k);
                for col in [full, self.psi_tilde[i].column(k - 1).clone_owned(), self.psi_hat[i].column(k - 1).clone_owned()] {
                    for z in col.iter() {
                        let _ = write!(s, ",{:.17e},{:.17e}", z.re, z.im);
                    }
                }
                let lw = self.log_w[i][k - 1];
                let _ = write!(s, ",{:.17e},{:.17e}", lw.re, lw.im);
            }
            s.push('\n');
        }
        s
    }
}

/// The factors of beta_jk = (delta_jk + d_jk) / (1 + d_k).
#[derive(Debug, Clone, Serialize)]
pub struct BetaDecomposition {
    /// d_k per grid point, k = 1..n.
    #[serde(skip)]
    pub d_k: Vec<Vec<C64>>,
    #[serde(skip)]
    pub d_jk: Vec<CMatrix>,
    /// max |(delta + d) / (1 + d) - beta|.
    pub reconstruction_error: f64,
    /// min |1 + d_k|.
    pub min_denominator: f64,
    /// sup_{x, k} |d_k| and sup_{x, j, k} |d_jk|.
    pub sup_d_k: f64,
    pub sup_d_jk: f64,
}

/// Splits beta by Cramer's rule against the unperturbed determinant.
pub fn beta_decomposition(set: &WeylSolutionSet) -> Result<BetaDecomposition> {
    let n = set.n;
    let mut out = BetaDecomposition { d_k: Vec::new(), d_jk: Vec::new(), reconstruction_error: 0.0, min_denominator: f64::INFINITY, sup_d_k: 0.0, sup_d_jk: 0.0 };
    for (i, systems) in set.systems.iter().enumerate() {
        let mut dk = Vec::with_capacity(n);
        let mut djk = CMatrix::zeros(n, n);
        for (kk, slae) in systems.iter().enumerate() {
            let k = kk + 1;
            let mut d0 = ONE;
            for r in 1..=n {
                d0 *= if r < k { sign(k - 1 - r) * set.delta0[kk] } else { C64::from(sign(r - k) * set.perm_sign) };
            }
            let (d, nums) = cramer(&slae.m, &slae.u);
            let denom = d / d0;
            out.min_denominator = out.min_denominator.min(denom.norm());
            if denom.norm() <= 1e-14 {
                return Err(Error::Degenerate { k, rho: format!("{}", set.rho), magnitude: denom.norm() });
            }
            dk.push(denom - ONE);
            out.sup_d_k = out.sup_d_k.max((denom - ONE).norm());
            for j in 0..n {
                let kron = if j == kk { ONE } else { ZERO };
                djk[(j, kk)] = nums[j] / d0 - kron;
                out.sup_d_jk = out.sup_d_jk.max(djk[(j, kk)].norm());
                let rebuilt = (kron + djk[(j, kk)]) / denom;
                out.reconstruction_error = out.reconstruction_error.max((rebuilt - set.beta[i][(j, kk)]).norm());
            }
        }
        out.d_k.push(dk);
        out.d_jk.push(djk);
    }
    Ok(out)
}

fn sign(e: usize) -> f64 {
    if e.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Closed-form coefficients betahat_jk and the right-hand sides f_k, g_k.
#[derive(Debug, Clone, Serialize)]
pub struct HatPsiReport {
    #[serde(skip)]
    pub beta_hat: Vec<CMatrix>,
    /// max |betahat_formula - (beta - I)|.
    pub formula_mismatch: f64,
    pub sup_f: f64,
    pub sup_g: f64,
}

/// Psi^_k = sum_j betahat_jk Psi0~_j from the wedge formulas, cross-checked
/// against the direct solve.
pub fn hat_psi_correction(sol: &RaySolution, set: &WeylSolutionSet) -> Result<HatPsiReport> {
    let n = set.n;
    let mut rep = HatPsiReport { beta_hat: Vec::new(), formula_mismatch: 0.0, sup_f: 0.0, sup_g: 0.0 };
    for kk in 1..n {
        if set.delta0[kk].norm() <= 1e-14 {
            return Err(Error::Degenerate { k: kk + 1, rho: format!("{}", set.rho), magnitude: set.delta0[kk].norm() });
        }
    }
    for i in 0..set.xs.len() {
        let psi = columns(&set.psi0_tilde[i]);
        let w = w_all(sol, i);
        let mut bh = CMatrix::zeros(n, n);
        for k in 1..=n {
            let hat_k = MultiVector::from_vector(&set.psi_hat[i].column(k - 1).clone_owned());
            let fhat = |j: usize| if j == 0 { MultiVector::zeros(n, 0) } else { sol.f[j - 1].hat[i].clone() };
            let f_prev = fhat(k - 1);
            let f = fhat(k).sub(&f_prev.wedge(&psi[k - 1])?).sub(&f_prev.wedge(&hat_k)?);
            rep.sup_f = rep.sup_f.max(f.norm());
            for j in k..=n {
                let rest: Vec<&MultiVector> = (k - 1..n).filter(|&l| l != j - 1).map(|l| &psi[l]).collect();
                let v = f.pair(&wedge_all(n, &rest));
                bh[(j - 1, k - 1)] = v * (sign(j - k) * set.perm_sign) * w;
            }
            let t_hat = &sol.t[k - 1].hat[i];
            if k > 1 {
                let g = psi[k - 1].wedge(t_hat)?.add(&hat_k.wedge(t_hat)?).scale(-ONE);
                rep.sup_g = rep.sup_g.max(g.norm());
                for j in 1..k {
                    let rest: Vec<&MultiVector> = (0..k - 1).filter(|&l| l != j - 1).map(|l| &psi[l]).collect();
                    let v = wedge_all(n, &rest).pair(&g);
                    bh[(j - 1, k - 1)] = v * sign(k - 1 - j) * w / set.delta0[k - 1];
                }
            }
        }
        let direct = &set.beta[i] - CMatrix::identity(n, n);
        rep.formula_mismatch = rep.formula_mismatch.max((&bh - direct).iter().map(|z| z.norm()).fold(0.0, f64::max));
        rep.beta_hat.push(bh);
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    /// ||q_m - q_0|| in L1 + Lp, per perturbation.
    pub distances: Vec<f64>,
    /// sup_{x, rho, k} |Psi^_k(q_m) - Psi^_k(q_0)|; None when excluded.
    pub differences: Vec<Option<f64>>,
    /// Indices whose perturbation left G_0 on the sample set.
    pub excluded: Vec<usize>,
    pub monotone: bool,
}

/// Modulus of continuity of Psi^ in q over the sampled (x, rho).
pub fn continuity_probe(
    basis: &UnperturbedBasis,
    q0: &Potential,
    perturbations: &[Potential],
    rhos: &[C64],
    xs: &[f64],
    sopts: &SolverOptions,
    wopts: &WeylOptions,
) -> Result<ContinuityReport> {
    let base: Vec<WeylSolutionSet> = rhos.iter().map(|&r| weyl_at(basis, q0, r, xs, sopts, wopts).map(|w| w.1)).collect::<Result<_>>()?;
    let mut rep = ContinuityReport { distances: Vec::new(), differences: Vec::new(), excluded: Vec::new(), monotone: true };
    for (m, qm) in perturbations.iter().enumerate() {
        let (l1, lp) = q0.distance(qm);
        rep.distances.push(l1 + lp);
        let mut sup = 0.0f64;
        let mut excluded = false;
        for (b, &r) in base.iter().zip(rhos) {
            match weyl_at(basis, qm, r, xs, sopts, wopts) {
                Ok((_, set)) => {
                    for (h0, h1) in b.psi_hat.iter().zip(&set.psi_hat) {
                        for k in 0..b.n {
                            sup = sup.max((h1.column(k) - h0.column(k)).iter().map(|z| z.norm()).sum::<f64>());
                        }
                    }
                }
                Err(Error::Degenerate { .. }) => {
                    excluded = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if excluded {
            rep.excluded.push(m);
            rep.differences.push(None);
        } else {
            rep.differences.push(Some(sup));
        }
    }
    let kept: Vec<f64> = rep.differences.iter().flatten().copied().collect();
    rep.monotone = kept.windows(2).all(|w| w[1] <= w[0]);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{basis2, basis3};
    use crate::linalg::c;

    fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn zero_potential_is_unperturbed() {
        for (b, rho) in [(basis2(), c(2.0, 0.8)), (basis3(), c(3.0, -0.4))] {
            let n = b.n();
            let q = Potential::zero(n);
            let xs = geometric(1e-3, 10.0, 30);
            let (sol, set) = weyl_at(&b, &q, rho, &xs, &SolverOptions::default(), &WeylOptions::default()).unwrap();
            for i in 0..xs.len() {
                let id = CMatrix::identity(n, n);
                assert!((&set.beta[i] - id).iter().all(|z| z.norm() < 1e-10), "beta at x={}", xs[i]);
                assert!(set.psi_hat[i].iter().all(|z| z.norm() < 1e-10));
                for k in 1..=n {
                    let slae = &set.systems[i][k - 1];
                    for r in 1..=n {
                        let expect = if r < k { sign(k - 1 - r) * set.delta0[k - 1] } else { C64::from(sign(r - k) * set.perm_sign) };
                        for j in 1..=n {
                            let e = if j == r { expect } else { ZERO };
                            assert!((slae.m[(r - 1, j - 1)] - e).norm() < 1e-9, "m at k={k} r={r} j={j}");
                        }
                        let ue = if r == k { C64::from(set.perm_sign) } else { ZERO };
                        assert!((slae.u[r - 1] - ue).norm() < 1e-9);
                    }
                }
            }
            let d = beta_decomposition(&set).unwrap();
            assert!(d.sup_d_k < 1e-10 && d.sup_d_jk < 1e-10);
            let h = hat_psi_correction(&sol, &set).unwrap();
            assert!(h.sup_f < 1e-12 && h.sup_g < 1e-12 && h.formula_mismatch < 1e-10);
            for (v, d0) in set.delta.iter().zip(&set.delta0) {
                assert!(v.consistent, "Delta_{} spread {:e}", v.k, v.spread);
                assert!((v.value - d0).norm() < 1e-10);
            }
            assert_eq!(set.delta[0].value, ONE);
        }
    }

    #[test]
    fn step_potential_solves_slae() {
        for (b, rho) in [(basis2(), c(2.0, 0.8)), (basis3(), c(3.0, -0.4))] {
            let n = b.n();
            let q = Potential::step(n, 1, 2, c(1.0, 0.0), 0.0, 1.0).unwrap();
            let xs = geometric(1e-3, 10.0, 30);
            let (sol, set) = weyl_at(&b, &q, rho, &xs, &SolverOptions::default(), &WeylOptions::default()).unwrap();
            let d = &set.diagnostics;
            assert!(d.slae_f_residual < 1e-8 && d.slae_t_residual < 1e-8, "{d:?}");
            assert!(d.plucker_t < 1e-8 && d.plucker_f < 1e-8, "{d:?}");
            assert!(d.cramer_mismatch.unwrap() < 1e-10, "{d:?}");
            assert!(set.delta.iter().all(|v| v.consistent), "{:?}", set.delta);
            let dec = beta_decomposition(&set).unwrap();
            assert!(dec.reconstruction_error < 1e-10, "{}", dec.reconstruction_error);
            let h = hat_psi_correction(&sol, &set).unwrap();
            assert!(h.formula_mismatch < 1e-8, "{}", h.formula_mismatch);
            assert!(set.sup_hat(1) > 1e-6);
        }
    }
}
