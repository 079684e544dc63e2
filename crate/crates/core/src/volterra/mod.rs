//! Volterra equations for the fundamental tensors T_k and F_k.
//!
//! Unknowns are the normalized corrections: T_k = T0_k + <-W^k(rho x) That_k
//! and F_k = F0_k + ->W^k(rho x) Fhat_k. The kernel is separable in the
//! Psi0 basis, so each correction is sum_alpha I_alpha(x) Psi0tilde_alpha(x)
//! with scalar I_alpha obtained by marching a product quadrature.

pub mod grid;
pub mod kernel;
pub mod quadrature;

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64, ONE, ZERO};
use crate::potential::Potential;
use crate::tensor_algebra::{compound, enumerate_multi_indices, masks, merge_sign, rank_of, MultiVector};
use crate::unperturbed::{Psi0Sample, UnperturbedBasis};

pub use grid::RayGrid;
pub use kernel::{apply_kernel, free_terms, KernelForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TensorKind {
    T,
    F,
}

impl TensorKind {
    pub fn label(&self) -> &'static str {
        match self {
            TensorKind::T => "T",
            TensorKind::F => "F",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    /// Step in rho x where the solution varies on the z scale.
    pub dz: f64,
    /// Relative step h / x elsewhere.
    pub base_ratio: f64,
    /// Width (in units of 1 / exponent gap) of the resolved layer at breakpoints.
    pub transient_z: f64,
    /// Left end of the computational grid.
    pub x_floor: f64,
    /// Tail tolerance fixing X_max for unbounded potentials.
    pub tail_tol: f64,
    pub fixed_point_tol: f64,
    pub max_iter: usize,
    /// Estimate the discretization error by grid doubling.
    pub estimate_error: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dz: 0.05,
            base_ratio: 0.05,
            transient_z: 36.0,
            x_floor: 1e-9,
            tail_tol: 1e-12,
            fixed_point_tol: 1e-13,
            max_iter: 50,
            estimate_error: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FieldDiagnostics {
    pub nodes: usize,
    pub max_iterations: usize,
    pub direct_solves: usize,
    /// Empirical sup of the scaled kernel.
    pub kernel_bound: f64,
    /// int |q| over the computational interval.
    pub q_l1: f64,
    /// Groenwall bound (exp(M |q|_1) - 1) sup |free term| for sup |hat|.
    pub picard_bound: f64,
    /// Smallest r with (M |q|_1)^r / r! below 1e-16.
    pub picard_terms: usize,
    /// Neglected part of the integral ([0, x_floor] for T, [X_max, inf) for F).
    pub truncation_bound: f64,
    /// Largest change under grid doubling at the outputs.
    pub doubling_change: f64,
    pub x_max: f64,
}

/// A normalized fundamental tensor sampled on the output grid.
#[derive(Debug, Clone, Serialize)]
pub struct TensorField {
    pub k: usize,
    pub kind: TensorKind,
    #[serde(serialize_with = "crate::io::ser_complex")]
    pub rho: C64,
    pub xs: Vec<f64>,
    /// That_k or Fhat_k.
    pub hat: Vec<MultiVector>,
    /// T0_k / <-W^k or F0_k / ->W^k.
    pub free: Vec<MultiVector>,
    pub error_estimate: f64,
    pub diagnostics: FieldDiagnostics,
}

impl TensorField {
    /// Degree of the tensor.
    pub fn degree(&self) -> usize {
        self.free[0].degree()
    }

    /// Normalized full tensor free + hat at output i.
    pub fn total(&self, i: usize) -> MultiVector {
        self.free[i].add(&self.hat[i])
    }

    pub fn sup_hat(&self) -> f64 {
        self.hat.iter().map(|h| h.norm()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.free[0].n();
        let m = self.degree();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# k={} kind={} rho={:.17e}{:+.17e}i error_estimate={:.6e}",
            self.k, self.kind.label(), self.rho.re, self.rho.im, self.error_estimate
        );
        s.push('x');
        if m == 0 {
            s.push_str(",re,im");
        } else {
            for idx in enumerate_multi_indices(n, m).expect("valid degree") {
                let _ = write!(s, ",re{idx},im{idx}");
            }
        }
        s.push('\n');
        for (x, h) in self.xs.iter().zip(&self.hat) {
            let _ = write!(s, "{x:.17e}");
            for v in h.coeffs() {
                let _ = write!(s, ",{:.17e},{:.17e}", v.re, v.im);
            }
            s.push('\n');
        }
        s
    }
}

/// Per-node data for one (kind, k).
struct NodeData {
    /// compound(Psi0tilde, m): columns Psi0tilde_alpha.
    cm: CMatrix,
    /// g = p * (q^{(m)} Y).
    p: CMatrix,
    /// a_alpha at the node.
    a: Vec<C64>,
    free: CVector,
}

fn node_data(basis: &UnperturbedBasis, kind: TensorKind, k: usize, s: &Psi0Sample) -> NodeData {
    let n = basis.n();
    let m = match kind {
        TensorKind::T => n - k + 1,
        TensorKind::F => k,
    };
    let full = (1u32 << n) - 1;
    let cm = compound(&s.tilde, m);
    let cc = if m == n { CMatrix::from_element(1, 1, ONE) } else { compound(&s.tilde, n - m) };
    let log_all: C64 = s.log_w.iter().sum();
    let w_all = log_all.exp();
    let perm_sign = basis.ctx.perm_sign();
    let ms = masks(n, m);
    let dim = ms.len();
    let mut p = CMatrix::zeros(dim, dim);
    for (ia, &alpha) in ms.iter().enumerate() {
        let ac = full & !alpha;
        let chi = merge_sign(alpha, ac) * perm_sign;
        let col = rank_of(n, ac);
        for (ib, &beta) in ms.iter().enumerate() {
            let bc = full & !beta;
            p[(ia, ib)] = cc[(rank_of(n, bc), col)] * (w_all * chi * merge_sign(beta, bc));
        }
    }
    let log_ref: C64 = match kind {
        TensorKind::T => s.log_w[k - 1..].iter().sum(),
        TensorKind::F => s.log_w[..k].iter().sum(),
    };
    let a = ms
        .iter()
        .map(|&alpha| (0..n).filter(|j| alpha & (1 << j) != 0).map(|j| s.log_w[j]).sum::<C64>() - log_ref)
        .collect();
    let free = match kind {
        TensorKind::T => {
            let diag: C64 = (k - 1..n).map(|j| basis.l[(j, j)]).product();
            let alpha: u32 = ((1u32 << (n - k + 1)) - 1) << (k - 1);
            cm.column(rank_of(n, alpha)).clone_owned() / diag
        }
        TensorKind::F => cm.column(rank_of(n, (1u32 << k) - 1)).clone_owned(),
    };
    NodeData { cm, p, a, free }
}

struct MarchOutput {
    hat: Vec<CVector>,
    free: Vec<CVector>,
    max_iterations: usize,
    direct_solves: usize,
    kernel_bound: f64,
    free_sup: f64,
}

/// Marches the normalized equation over the grid.
fn march(basis: &UnperturbedBasis, q: &Potential, grid: &RayGrid, kind: TensorKind, k: usize, opts: &SolverOptions) -> Result<MarchOutput> {
    let n = basis.n();
    let m = match kind {
        TensorKind::T => n - k + 1,
        TensorKind::F => k,
    };
    let dim = masks(n, m).len();
    let len = grid.len();
    let data: Vec<NodeData> = grid.samples.iter().map(|s| node_data(basis, kind, k, s)).collect();
    let sign = match kind {
        TensorKind::T => ONE,
        TensorKind::F => -ONE,
    };
    let mut hat = vec![CVector::zeros(dim); len];
    let mut max_iterations = 0usize;
    let mut direct_solves = 0usize;

    // kernel bound: sum_alpha sup|Psi0tilde_alpha| sup|W_all Psi0tilde_alpha'|
    let mut sup_a = vec![0.0f64; dim];
    let mut sup_c = vec![0.0f64; dim];
    let mut free_sup = 0.0f64;
    for d in &data {
        for ia in 0..dim {
            sup_a[ia] = sup_a[ia].max(d.cm.column(ia).iter().map(|z| z.norm()).sum());
            sup_c[ia] = sup_c[ia].max(d.p.row(ia).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        free_sup = free_sup.max(d.free.iter().map(|z| z.norm()).sum());
    }
    let kernel_bound: f64 = (0..dim).map(|i| sup_a[i] * sup_c[i]).sum();

    if m == n || q.is_zero() {
        return Ok(MarchOutput { hat, free: data.into_iter().map(|d| d.free).collect(), max_iterations, direct_solves, kernel_bound, free_sup });
    }

    let order: Vec<usize> = match kind {
        TensorKind::T => (0..len).collect(),
        TensorKind::F => (0..=grid.x_max_index).rev().collect(),
    };
    let lift = |x: f64, piece: usize| -> Result<CMatrix> {
        let pc = &q.pieces[piece];
        let mut qm = CMatrix::zeros(n, n);
        for (i, j, e) in &pc.entries {
            qm[(*i, *j)] += e.eval(x);
        }
        Ok(crate::tensor_algebra::lift_operator(&qm, m)?.matrix().clone())
    };
    let g_at = |idx: usize, lifted: &CMatrix, hat_v: &CVector| -> CVector {
        let y = &data[idx].free + hat_v;
        &data[idx].p * (lifted * y)
    };

    let mut integ = CVector::zeros(dim);
    let mut hist: Vec<(usize, CVector)> = Vec::with_capacity(quadrature::MAX_NODES);
    let mut cur_piece: Option<usize> = None;
    for w in order.windows(2) {
        let (ip, ic) = (w[0], w[1]);
        let panel = ip.min(ic);
        let piece = grid.panel_piece[panel];
        let dvec: Vec<C64> = (0..dim).map(|a| data[ic].a[a] - data[ip].a[a]).collect();
        let Some(pc) = piece else {
            for a in 0..dim {
                integ[a] *= dvec[a].exp();
            }
            hat[ic] = &data[ic].cm * &integ * sign;
            hist.clear();
            cur_piece = None;
            continue;
        };
        let xp = grid.nodes[ip];
        let xc = grid.nodes[ic];
        if cur_piece != Some(pc) {
            hist.clear();
            let qp = lift(xp, pc)?;
            hist.push((ip, g_at(ip, &qp, &hat[ip])));
            cur_piece = Some(pc);
        }
        let h = (xc - xp).abs();
        let s_nodes: Vec<f64> = hist.iter().map(|(j, _)| (grid.nodes[*j] - xp) / (xc - xp)).chain(std::iter::once(1.0)).collect();
        let nn = s_nodes.len();
        let vinv = quadrature::vandermonde_inverse(&s_nodes);
        let mut base = CVector::zeros(dim);
        let mut wc = vec![ZERO; dim];
        for a in 0..dim {
            let d = dvec[a];
            let wts = quadrature::weights(&vinv, nn, d);
            let mut acc = integ[a] * d.exp();
            for (jj, (j, gj)) in hist.iter().enumerate() {
                // fold the nonlinear part of a into g
                let fold = (-(data[*j].a[a] - data[ip].a[a] - d * s_nodes[jj])).exp();
                acc += wts[jj] * gj[a] * fold * h;
            }
            base[a] = acc;
            wc[a] = wts[nn - 1] * h;
        }
        let qc = lift(xc, pc)?;
        let mut g = hist.last().unwrap().1.clone();
        let mut cur = CVector::zeros(dim);
        let mut converged = false;
        for it in 0..opts.max_iter {
            let next = CVector::from_fn(dim, |a, _| base[a] + wc[a] * g[a]);
            let change = (&next - &cur).iter().map(|z| z.norm()).sum::<f64>();
            let size = next.iter().map(|z| z.norm()).sum::<f64>();
            cur = next;
            let hat_c = &data[ic].cm * &cur * sign;
            g = g_at(ic, &qc, &hat_c);
            if it > 0 && change <= opts.fixed_point_tol * size.max(1e-300) {
                max_iterations = max_iterations.max(it + 1);
                converged = true;
                break;
            }
        }
        if !converged {
            // (Id - diag(wc) P Q C sign) I = base + diag(wc) P Q Y0
            let pq = &data[ic].p * &qc;
            let mat = CMatrix::identity(dim, dim) - CMatrix::from_diagonal(&CVector::from_vec(wc.clone())) * (&pq * &data[ic].cm) * sign;
            let rhs = &base + CVector::from_fn(dim, |a, _| wc[a]) .component_mul(&(&pq * &data[ic].free));
            cur = mat.lu().solve(&rhs).ok_or_else(|| Error::numerical("singular panel system"))?;
            let hat_c = &data[ic].cm * &cur * sign;
            g = g_at(ic, &qc, &hat_c);
            direct_solves += 1;
            max_iterations = opts.max_iter;
        }
        integ = cur;
        hat[ic] = &data[ic].cm * &integ * sign;
        hist.push((ic, g));
        if hist.len() == quadrature::MAX_NODES {
            hist.remove(0);
        }
    }
    Ok(MarchOutput { hat, free: data.into_iter().map(|d| d.free).collect(), max_iterations, direct_solves, kernel_bound, free_sup })
}

fn picard_terms(x: f64) -> usize {
    let mut term = 1.0;
    for r in 1..400 {
        term *= x / r as f64;
        if term < 1e-16 {
            return r;
        }
    }
    400
}

fn to_fields(n: usize, m: usize, out: &MarchOutput, idx: &[usize]) -> Result<(Vec<MultiVector>, Vec<MultiVector>)> {
    let mut hat = Vec::with_capacity(idx.len());
    let mut free = Vec::with_capacity(idx.len());
    for &i in idx {
        hat.push(MultiVector::from_coeffs(n, m, out.hat[i].iter().copied().collect())?);
        free.push(MultiVector::from_coeffs(n, m, out.free[i].iter().copied().collect())?);
    }
    Ok((hat, free))
}

/// Solves for one tensor on a prepared grid (and optionally its refinement).
pub fn solve_on_grid(
    basis: &UnperturbedBasis,
    q: &Potential,
    kind: TensorKind,
    k: usize,
    grid: &RayGrid,
    fine: Option<&RayGrid>,
    xs: &[f64],
    opts: &SolverOptions,
) -> Result<TensorField> {
    let n = basis.n();
    if k == 0 || k > n {
        return Err(Error::domain(format!("tensor index {k} outside 1..={n}")));
    }
    let m = match kind {
        TensorKind::T => n - k + 1,
        TensorKind::F => k,
    };
    let out = march(basis, q, grid, kind, k, opts)?;
    let (hat, free) = to_fields(n, m, &out, &grid.output_index)?;
    let mut doubling = 0.0f64;
    if let Some(fg) = fine {
        let fo = march(basis, q, fg, kind, k, opts)?;
        for (i, &j) in grid.output_index.iter().zip(&fg.output_index) {
            doubling = doubling.max((&out.hat[*i] - &fo.hat[j]).iter().map(|z| z.norm()).sum::<f64>());
        }
    }
    let x_lo = grid.nodes[0];
    let q_l1 = q.l1_between(x_lo, grid.x_max);
    let mq = out.kernel_bound * q_l1;
    let picard_bound = (mq.exp() - 1.0) * out.free_sup;
    let y_sup = out.free_sup + out.hat.iter().map(|h| h.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let neglected = match kind {
        TensorKind::T => q.l1_between(0.0, x_lo),
        TensorKind::F => q.l1_tail(grid.x_max),
    };
    let truncation_bound = out.kernel_bound * neglected * y_sup;
    Ok(TensorField {
        k,
        kind,
        rho: grid.rho,
        xs: xs.to_vec(),
        hat,
        free,
        error_estimate: doubling + truncation_bound,
        diagnostics: FieldDiagnostics {
            nodes: grid.len(),
            max_iterations: out.max_iterations,
            direct_solves: out.direct_solves,
            kernel_bound: out.kernel_bound,
            q_l1,
            picard_bound,
            picard_terms: picard_terms(mq),
            truncation_bound,
            doubling_change: doubling,
            x_max: grid.x_max,
        },
    })
}

/// Everything needed at one rho: Psi0tilde and all normalized T_k, F_k on xs.
#[derive(Debug, Clone)]
pub struct RaySolution {
    pub rho: C64,
    pub xs: Vec<f64>,
    pub psi0: Vec<Psi0Sample>,
    /// T_1..T_n.
    pub t: Vec<TensorField>,
    /// F_1..F_n.
    pub f: Vec<TensorField>,
    /// Relative accuracy of the Psi0 samples.
    pub basis_error: f64,
}

impl RaySolution {
    /// Normalized F_k at output i; F_0 is the scalar 1.
    pub fn f_total(&self, k: usize, i: usize) -> MultiVector {
        if k == 0 {
            MultiVector::scalar(self.psi0[i].tilde.nrows(), ONE)
        } else {
            self.f[k - 1].total(i)
        }
    }

    pub fn t_total(&self, k: usize, i: usize) -> MultiVector {
        self.t[k - 1].total(i)
    }

    pub fn max_error(&self) -> f64 {
        self.t.iter().chain(&self.f).map(|f| f.error_estimate).fold(0.0, f64::max)
    }
}

/// Solves all tensors at one rho on the output grid xs.
pub fn solve_all(basis: &UnperturbedBasis, q: &Potential, rho: C64, xs: &[f64], opts: &SolverOptions) -> Result<RaySolution> {
    let grid = RayGrid::build(basis, q, rho, xs, opts)?;
    let fine = if opts.estimate_error && !q.is_zero() { Some(grid.refine(basis, q, xs)?) } else { None };
    let n = basis.n();
    let mut t = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for k in 1..=n {
        t.push(solve_on_grid(basis, q, TensorKind::T, k, &grid, fine.as_ref(), xs, opts)?);
        f.push(solve_on_grid(basis, q, TensorKind::F, k, &grid, fine.as_ref(), xs, opts)?);
    }
    let psi0 = grid.output_index.iter().map(|&i| grid.samples[i].clone()).collect();
    Ok(RaySolution { rho, xs: xs.to_vec(), psi0, t, f, basis_error: basis.accuracy() })
}

pub fn solve_t(basis: &UnperturbedBasis, q: &Potential, k: usize, rho: C64, xs: &[f64], opts: &SolverOptions) -> Result<TensorField> {
    let grid = RayGrid::build(basis, q, rho, xs, opts)?;
    let fine = if opts.estimate_error && !q.is_zero() { Some(grid.refine(basis, q, xs)?) } else { None };
    solve_on_grid(basis, q, TensorKind::T, k, &grid, fine.as_ref(), xs, opts)
}

pub fn solve_f(basis: &UnperturbedBasis, q: &Potential, k: usize, rho: C64, xs: &[f64], opts: &SolverOptions) -> Result<TensorField> {
    let grid = RayGrid::build(basis, q, rho, xs, opts)?;
    let fine = if opts.estimate_error && !q.is_zero() { Some(grid.refine(basis, q, xs)?) } else { None };
    solve_on_grid(basis, q, TensorKind::F, k, &grid, fine.as_ref(), xs, opts)
}

/// Decay of the corrections along a rho-ray.
#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    pub rho_abs: Vec<f64>,
    /// sup_x |hat| per rho, for each tensor label.
    pub sup_norms: Vec<(String, Vec<f64>)>,
    /// sup_x of the discrete L2(l) norm in rho, per tensor label.
    pub l2_norms: Vec<(String, f64)>,
    pub decays: bool,
}

/// Profiles sup_x |That_k|, |Fhat_k| over rho samples on one ray.
pub fn decay_profile(solutions: &[RaySolution]) -> DecayProfile {
    let rho_abs: Vec<f64> = solutions.iter().map(|s| s.rho.norm()).collect();
    let mut sup_norms = Vec::new();
    let mut l2_norms = Vec::new();
    let mut decays = true;
    if solutions.is_empty() {
        return DecayProfile { rho_abs, sup_norms, l2_norms, decays };
    }
    let n = solutions[0].t.len();
    for kind in [TensorKind::T, TensorKind::F] {
        for k in 1..=n {
            fn pick(s: &RaySolution, kind: TensorKind, k: usize) -> &TensorField {
                match kind {
                    TensorKind::T => &s.t[k - 1],
                    TensorKind::F => &s.f[k - 1],
                }
            }
            let label = format!("{}{}", kind.label(), k);
            let sups: Vec<f64> = solutions.iter().map(|s| pick(s, kind, k).sup_hat()).collect();
            let nx = pick(&solutions[0], kind, k).xs.len();
            let mut l2 = 0.0f64;
            for i in 0..nx {
                let mut acc = 0.0;
                for j in 1..solutions.len() {
                    let a = pick(&solutions[j - 1], kind, k).hat[i].norm();
                    let b = pick(&solutions[j], kind, k).hat[i].norm();
                    acc += 0.5 * (a * a + b * b) * (rho_abs[j] - rho_abs[j - 1]).abs();
                }
                l2 = l2.max(acc.sqrt());
            }
            let max = sups.iter().cloned().fold(0.0, f64::max);
            if max > 0.0 && *sups.last().unwrap() > 0.1 * max {
                decays = false;
            }
            sup_norms.push((label.clone(), sups));
            l2_norms.push((label, l2));
        }
    }
    DecayProfile { rho_abs, sup_norms, l2_norms, decays }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{basis2, basis3};
    use crate::linalg::c;
    use crate::oracle::oracle_tensor;

    fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn zero_potential_gives_free_terms() {
        let b = basis2();
        let q = Potential::zero(2);
        let xs = geometric(1e-3, 10.0, 30);
        let sol = solve_all(&b, &q, c(3.0, 1.0), &xs, &SolverOptions::default()).unwrap();
        for f in sol.t.iter().chain(&sol.f) {
            assert_eq!(f.sup_hat(), 0.0);
        }
    }

    #[test]
    fn step_potential_matches_oracle() {
        for (b, rho) in [(basis2(), c(2.0, 0.8)), (basis3(), c(3.0, -0.4))] {
            let n = b.n();
            let q = Potential::step(n, 1, 2, c(1.0, 0.0), 0.0, 1.0).unwrap();
            let xs = geometric(1e-2, 0.99, 25);
            let sol = solve_all(&b, &q, rho, &xs, &SolverOptions::default()).unwrap();
            for k in 2..=n {
                let tf = &sol.t[k - 1];
                let or = oracle_tensor(&b, &q, TensorKind::T, k, rho, &xs, 1e-11).unwrap();
                let err = (0..xs.len()).map(|i| tf.total(i).distance(&or[i]) / or[i].norm()).fold(0.0, f64::max);
                assert!(err <= tf.error_estimate + 1e-9, "n={n} T{k} err {err:e} est {:e}", tf.error_estimate);
            }
            for k in 1..n {
                let ff = &sol.f[k - 1];
                let or = oracle_tensor(&b, &q, TensorKind::F, k, rho, &xs, 1.0).unwrap();
                let err = (0..xs.len()).map(|i| ff.total(i).distance(&or[i]) / or[i].norm()).fold(0.0, f64::max);
                assert!(err <= ff.error_estimate + 1e-9, "n={n} F{k} err {err:e} est {:e}", ff.error_estimate);
            }
        }
    }
}
