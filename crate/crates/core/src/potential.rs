//! Piecewise-parametric off-diagonal potentials q in L_1 and L_p.
//!
//! The matrix norm is the entrywise l1 norm, used everywhere |q(t)| appears.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, C64};
use crate::tensor_algebra::lift_operator;

/// A scalar parameter: a number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Param {
    Real(f64),
    Complex([f64; 2]),
}

impl Param {
    fn value(&self) -> C64 {
        match *self {
            Param::Real(x) => c(x, 0.0),
            Param::Complex([re, im]) => c(re, im),
        }
    }

    fn real(&self, what: &str) -> Result<f64> {
        match *self {
            Param::Real(x) => Ok(x),
            Param::Complex([re, 0.0]) => Ok(re),
            _ => Err(Error::input(format!("{what} must be real"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntrySpec {
    pub kind: String,
    pub params: Vec<Param>,
}

/// Right end of a piece: a number or the string "inf".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Finite(f64),
    Named(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceSpec {
    pub from: f64,
    pub to: Bound,
    pub entries: BTreeMap<String, EntrySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub pieces: Vec<PieceSpec>,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    /// sum_i a_i x^i
    Poly(Vec<C64>),
    /// c x^gamma
    Power { c: C64, gamma: f64 },
    /// c exp(-lambda x)
    ExpDecay { c: C64, lambda: f64 },
}

impl Entry {
    pub fn eval(&self, x: f64) -> C64 {
        match self {
            Entry::Poly(a) => a.iter().rev().fold(c(0.0, 0.0), |acc, ai| acc * x + ai),
            Entry::Power { c, gamma } => c * x.powf(*gamma),
            Entry::ExpDecay { c, lambda } => c * (-lambda * x).exp(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Entry::Poly(a) => a.iter().all(|z| z.norm() == 0.0),
            Entry::Power { c, .. } | Entry::ExpDecay { c, .. } => c.norm() == 0.0,
        }
    }

    pub fn scaled(&self, s: C64) -> Entry {
        match self {
            Entry::Poly(a) => Entry::Poly(a.iter().map(|z| z * s).collect()),
            Entry::Power { c, gamma } => Entry::Power { c: c * s, gamma: *gamma },
            Entry::ExpDecay { c, lambda } => Entry::ExpDecay { c: c * s, lambda: *lambda },
        }
    }

    /// Closed-form integral of |entry| over [a, b] where available.
    fn abs_integral(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            Entry::Poly(_) => None,
            Entry::Power { c, gamma } => {
                let g1 = gamma + 1.0;
                let hi = if b.is_infinite() { 0.0 } else { b.powf(g1) };
                let lo = if a == 0.0 { 0.0 } else { a.powf(g1) };
                Some(c.norm() * (hi - lo) / g1)
            }
            Entry::ExpDecay { c, lambda } => {
                let hi = if b.is_infinite() { 0.0 } else { (-lambda * b).exp() };
                Some(c.norm() * ((-lambda * a).exp() - hi) / lambda)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub from: f64,
    pub to: f64,
    /// (row, col, entry), 0-based, row != col.
    pub entries: Vec<(usize, usize, Entry)>,
}

impl Piece {
    fn norm_at(&self, x: f64) -> f64 {
        self.entries.iter().map(|(_, _, e)| e.eval(x).norm()).sum()
    }

    fn matrix_at(&self, n: usize, x: f64) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        for (i, j, e) in &self.entries {
            m[(*i, *j)] += e.eval(x);
        }
        m
    }

    fn l1_over(&self, a: f64, b: f64) -> f64 {
        self.entries
            .iter()
            .map(|(_, _, e)| e.abs_integral(a, b).unwrap_or_else(|| integrate(&|x| e.eval(x).norm(), a, b)))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub n: usize,
    pub pieces: Vec<Piece>,
    pub p: f64,
    pub l1_norm: f64,
    pub lp_norm: f64,
    /// Sorted interior jump locations (piece ends other than 0 and infinity).
    pub breakpoints: Vec<f64>,
}

fn parse_index(key: &str, n: usize) -> Result<(usize, usize)> {
    let inner = key.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split(',').map(|s| s.trim()).collect();
    if parts.len() != 2 {
        return Err(Error::input(format!("entry key {key:?} is not of the form (i,j)")));
    }
    let i: usize = parts[0].parse().map_err(|_| Error::input(format!("bad row in {key:?}")))?;
    let j: usize = parts[1].parse().map_err(|_| Error::input(format!("bad column in {key:?}")))?;
    if i == 0 || j == 0 || i > n || j > n {
        return Err(Error::input(format!("entry {key} outside 1..={n}")));
    }
    if i == j {
        return Err(Error::input(format!("diagonal entry {key}: potential must be off-diagonal")));
    }
    Ok((i - 1, j - 1))
}

fn parse_entry(spec: &EntrySpec) -> Result<Entry> {
    let need = |k: usize| {
        if spec.params.len() != k {
            Err(Error::input(format!("kind {} takes {k} params, got {}", spec.kind, spec.params.len())))
        } else {
            Ok(())
        }
    };
    match spec.kind.as_str() {
        "poly" => {
            if spec.params.is_empty() {
                return Err(Error::input("poly needs at least one coefficient"));
            }
            Ok(Entry::Poly(spec.params.iter().map(Param::value).collect()))
        }
        "power" => {
            need(2)?;
            Ok(Entry::Power { c: spec.params[0].value(), gamma: spec.params[1].real("power exponent")? })
        }
        "expdecay" => {
            need(2)?;
            Ok(Entry::ExpDecay { c: spec.params[0].value(), lambda: spec.params[1].real("decay rate")? })
        }
        other => Err(Error::input(format!("unknown entry kind {other:?}"))),
    }
}

/// Loads and validates a potential for dimension n.
pub fn load_potential(spec: &PotentialSpec, n: usize) -> Result<Potential> {
    let mut pieces = Vec::with_capacity(spec.pieces.len());
    for ps in &spec.pieces {
        let to = match &ps.to {
            Bound::Finite(x) => *x,
            Bound::Named(s) if s == "inf" || s == "infinity" => f64::INFINITY,
            Bound::Named(s) => return Err(Error::input(format!("bad piece end {s:?}"))),
        };
        let mut entries = Vec::new();
        for (key, es) in &ps.entries {
            let (i, j) = parse_index(key, n)?;
            entries.push((i, j, parse_entry(es)?));
        }
        pieces.push(Piece { from: ps.from, to, entries });
    }
    Potential::new(n, pieces, spec.p)
}

impl Potential {
    pub fn new(n: usize, pieces: Vec<Piece>, p: f64) -> Result<Potential> {
        if !(p > 2.0) {
            return Err(Error::input(format!("integrability exponent p = {p} must exceed 2")));
        }
        let mut last = 0.0f64;
        for pc in &pieces {
            if !(pc.from >= last) || !(pc.to > pc.from) {
                return Err(Error::input(format!("pieces must be ordered and non-overlapping near [{}, {}]", pc.from, pc.to)));
            }
            last = pc.to;
            for (i, j, e) in &pc.entries {
                if i == j {
                    return Err(Error::input("potential must be off-diagonal"));
                }
                if *i >= n || *j >= n {
                    return Err(Error::input("entry index outside the dimension"));
                }
                check_integrable(e, pc.from, pc.to, p)?;
            }
        }
        let mut breakpoints = Vec::new();
        for pc in &pieces {
            for x in [pc.from, pc.to] {
                if x > 0.0 && x.is_finite() && !breakpoints.iter().any(|&b: &f64| (b - x).abs() <= 1e-15 * x) {
                    breakpoints.push(x);
                }
            }
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut pot = Potential { n, pieces, p, l1_norm: 0.0, lp_norm: 0.0, breakpoints };
        pot.l1_norm = pot.l1_tail(0.0);
        let lp: f64 = pot.pieces.iter().map(|pc| integrate(&|x| pc.norm_at(x).powf(p), pc.from, pc.to)).sum();
        pot.lp_norm = lp.powf(1.0 / p);
        if !pot.l1_norm.is_finite() || !pot.lp_norm.is_finite() {
            return Err(Error::input("potential norm diverges"));
        }
        Ok(pot)
    }

    pub fn zero(n: usize) -> Potential {
        Potential::new(n, Vec::new(), default_p()).expect("zero potential")
    }

    /// Single constant entry (i, j) (1-based) on [a, b].
    pub fn step(n: usize, i: usize, j: usize, value: C64, a: f64, b: f64) -> Result<Potential> {
        let piece = Piece { from: a, to: b, entries: vec![(i - 1, j - 1, Entry::Poly(vec![value]))] };
        Potential::new(n, vec![piece], default_p())
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(|pc| pc.entries.iter().all(|(_, _, e)| e.is_zero()))
    }

    fn piece_at(&self, x: f64, right: bool) -> Option<&Piece> {
        self.pieces.iter().find(|pc| if right { x >= pc.from && x < pc.to } else { x > pc.from && x <= pc.to })
    }

    /// One-sided values (left, right) of q at x; they coincide off breakpoints.
    pub fn evaluate(&self, x: f64) -> (CMatrix, CMatrix) {
        let side = |right| self.piece_at(x, right).map_or_else(|| CMatrix::zeros(self.n, self.n), |pc| pc.matrix_at(self.n, x));
        (side(false), side(true))
    }

    /// q(x) taken from the piece containing (x, x + 0) or (x - 0, x).
    pub fn value(&self, x: f64, right: bool) -> CMatrix {
        self.piece_at(x, right).map_or_else(|| CMatrix::zeros(self.n, self.n), |pc| pc.matrix_at(self.n, x))
    }

    /// Entrywise l1 norm of q(x + 0).
    pub fn norm_at(&self, x: f64) -> f64 {
        self.piece_at(x, true).map_or(0.0, |pc| pc.norm_at(x))
    }

    /// q^{(m)}(x + 0) (or x - 0 when `right` is false).
    pub fn lifted(&self, x: f64, m: usize, right: bool) -> Result<CMatrix> {
        Ok(lift_operator(&self.value(x, right), m)?.matrix().clone())
    }

    /// int_x^infinity |q(t)| dt.
    pub fn l1_tail(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|pc| pc.to > x)
            .map(|pc| pc.l1_over(pc.from.max(x), pc.to))
            .sum()
    }

    /// int_a^b |q(t)| dt.
    pub fn l1_between(&self, a: f64, b: f64) -> f64 {
        self.l1_tail(a) - self.l1_tail(b)
    }

    /// s q(x).
    pub fn scaled(&self, s: C64) -> Result<Potential> {
        let pieces = self
            .pieces
            .iter()
            .map(|pc| Piece { from: pc.from, to: pc.to, entries: pc.entries.iter().map(|(i, j, e)| (*i, *j, e.scaled(s))).collect() })
            .collect();
        Potential::new(self.n, pieces, self.p)
    }

    /// (L1, Lp) norms of q - other, with p the larger exponent of the two.
    pub fn distance(&self, other: &Potential) -> (f64, f64) {
        let p = self.p.max(other.p);
        let mut cuts: Vec<f64> = vec![0.0];
        cuts.extend(self.breakpoints.iter().chain(&other.breakpoints).copied());
        cuts.push(f64::INFINITY);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let diff = |x: f64| -> f64 { (self.value(x, true) - other.value(x, true)).iter().map(|z| z.norm()).sum() };
        let (mut l1, mut lp) = (0.0, 0.0);
        for w in cuts.windows(2) {
            l1 += integrate(&diff, w[0], w[1]);
            lp += integrate(&|x| diff(x).powf(p), w[0], w[1]);
        }
        (l1, lp.powf(1.0 / p))
    }

    /// Smallest X with l1_tail(X) <= tol, or None beyond 1e8.
    pub fn tail_cutoff(&self, tol: f64) -> Option<f64> {
        if self.l1_tail(0.0) <= tol {
            return Some(0.0);
        }
        let last_finite = self.breakpoints.last().copied().unwrap_or(0.0);
        if self.pieces.last().is_none_or(|pc| pc.to.is_finite()) {
            return Some(last_finite);
        }
        let mut hi = last_finite.max(1.0);
        while self.l1_tail(hi) > tol {
            hi *= 2.0;
            if hi > 1e8 {
                return None;
            }
        }
        let mut lo = hi / 2.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.l1_tail(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi.max(last_finite))
    }
}

fn check_integrable(e: &Entry, a: f64, b: f64, p: f64) -> Result<()> {
    if e.is_zero() {
        return Ok(());
    }
    let at_zero = a == 0.0;
    let at_inf = b.is_infinite();
    match e {
        Entry::Poly(_) if at_inf => Err(Error::input("non-integrable piece: polynomial on an unbounded interval (L1 norm diverges)")),
        Entry::Power { gamma, .. } if at_zero && gamma * p <= -1.0 => Err(Error::input(format!(
            "non-integrable piece: x^{gamma} near 0 has divergent L{p} norm (needs exponent > {})",
            -1.0 / p
        ))),
        Entry::Power { gamma, .. } if at_inf && *gamma >= -1.0 => {
            Err(Error::input(format!("non-integrable piece: x^{gamma} at infinity has divergent L1 norm")))
        }
        Entry::ExpDecay { lambda, .. } if at_inf && *lambda <= 0.0 => {
            Err(Error::input(format!("non-integrable piece: exp(-{lambda} x) at infinity has divergent L1 norm")))
        }
        _ => Ok(()),
    }
}

const GL_NODES: [f64; 10] = [
    -0.9739065285171717,
    -0.8650633666889845,
    -0.6794095682990244,
    -0.4333953941292472,
    -0.1488743389816312,
    0.1488743389816312,
    0.4333953941292472,
    0.6794095682990244,
    0.8650633666889845,
    0.9739065285171717,
];
const GL_WEIGHTS: [f64; 10] = [
    0.0666713443086881,
    0.1494513491505806,
    0.219_086_362_515_982,
    0.2692667193099963,
    0.2955242247147529,
    0.2955242247147529,
    0.2692667193099963,
    0.219_086_362_515_982,
    0.1494513491505806,
    0.0666713443086881,
];

fn gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, depth: usize) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gl(f, a, mid);
    let right = gl(f, mid, b);
    let both = left + right;
    if depth == 0 || (both - whole).abs() <= 1e-15 * both.abs().max(1e-300) + 1e-300 {
        return both;
    }
    adaptive(f, a, mid, left, depth - 1) + adaptive(f, mid, b, right, depth - 1)
}

/// Integral of a nonnegative function over [a, b], b possibly infinite,
/// with geometric panels toward 0 and infinity.
pub(crate) fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let panel = |lo: f64, hi: f64| adaptive(f, lo, hi, gl(f, lo, hi), 30);
    let mut total = 0.0;
    let (mut lo, hi_fin) = (a, if b.is_infinite() { a.max(1.0) * 2.0 } else { b });
    if a == 0.0 {
        let mut h = hi_fin.min(1.0);
        lo = h;
        for _ in 0..400 {
            let part = panel(0.5 * h, h);
            total += part;
            h *= 0.5;
            if part <= 1e-18 * total.max(1e-300) && h < 1e-12 {
                break;
            }
        }
    }
    if hi_fin > lo {
        total += panel(lo, hi_fin);
    }
    if b.is_infinite() {
        let mut s = hi_fin;
        for _ in 0..2000 {
            let part = panel(s, 2.0 * s);
            total += part;
            s *= 2.0;
            if part <= 1e-18 * total.max(1e-300) {
                break;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, n: usize) -> Result<Potential> {
        load_potential(&serde_json::from_str(s).unwrap(), n)
    }

    #[test]
    fn zero_and_step() {
        let z = Potential::zero(2);
        assert_eq!((z.l1_norm, z.lp_norm), (0.0, 0.0));
        assert!(z.evaluate(0.3).0.iter().all(|v| v.norm() == 0.0));
        let q = parse(r#"{"pieces":[{"from":0,"to":1,"entries":{"(1,2)":{"kind":"poly","params":[1]}}}],"p":4}"#, 2).unwrap();
        assert!((q.l1_norm - 1.0).abs() < 1e-14);
        assert!((q.lp_norm - 1.0).abs() < 1e-14);
        assert_eq!(q.evaluate(0.5).1[(0, 1)], c(1.0, 0.0));
        let (l, r) = q.evaluate(1.0);
        assert_eq!((l[(0, 1)], r[(0, 1)]), (c(1.0, 0.0), c(0.0, 0.0)));
        assert!((q.l1_tail(0.0) - 1.0).abs() < 1e-14);
        assert_eq!(q.l1_tail(2.0), 0.0);
        assert_eq!(q.breakpoints, vec![1.0]);
    }

    #[test]
    fn rejects_bad_pieces() {
        let sqrt = r#"{"pieces":[{"from":0,"to":1,"entries":{"(1,2)":{"kind":"power","params":[1,-0.5]}}}],"p":4}"#;
        assert!(parse(sqrt, 2).unwrap_err().to_string().contains("non-integrable"));
        let diag = r#"{"pieces":[{"from":0,"to":1,"entries":{"(1,1)":{"kind":"poly","params":[1]}}}],"p":4}"#;
        assert!(parse(diag, 2).is_err());
        let grow = r#"{"pieces":[{"from":1,"to":"inf","entries":{"(1,2)":{"kind":"poly","params":[0,1]}}}],"p":4}"#;
        assert!(parse(grow, 2).is_err());
        let small_p = r#"{"pieces":[],"p":2}"#;
        assert!(parse(small_p, 2).is_err());
    }

    #[test]
    fn exponential_tail_closed_form() {
        let q = parse(
            r#"{"pieces":[{"from":1,"to":"inf","entries":{"(2,1)":{"kind":"expdecay","params":[[0.6,0.8],1.0]}}}],"p":3}"#,
            2,
        )
        .unwrap();
        for x in [1.5, 3.0, 10.0] {
            assert!((q.l1_tail(x) - (-x).exp()).abs() < 1e-15);
        }
        let lp = (1.0f64 / 3.0 * (-3.0f64).exp()).powf(1.0 / 3.0);
        assert!((q.lp_norm - lp).abs() < 1e-12 * lp);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let e = Entry::Power { c: c(2.0, 0.0), gamma: -0.2 };
        let exact = e.abs_integral(0.0, 3.0).unwrap();
        assert!((integrate(&|x| e.eval(x).norm(), 0.0, 3.0) - exact).abs() < 1e-10 * exact);
        let t = Entry::Power { c: c(1.0, 0.0), gamma: -2.0 };
        assert!((integrate(&|x| t.eval(x).norm(), 1.0, f64::INFINITY) - 1.0).abs() < 1e-10);
        let p = Entry::Poly(vec![c(-1.0, 0.0), c(2.0, 0.0)]);
        assert!((integrate(&|x| p.eval(x).norm(), 0.0, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_of_scaled_step() {
        let q = Potential::step(2, 1, 2, c(2.0, 0.0), 0.5, 1.5).unwrap();
        let r = q.scaled(c(1.25, 0.0)).unwrap();
        let (l1, lp) = q.distance(&r);
        assert!((l1 - 0.5).abs() < 1e-12);
        assert!((lp - 0.5).abs() < 1e-12);
        let shifted = Potential::step(2, 1, 2, c(2.0, 0.0), 0.6, 1.5).unwrap();
        assert!((q.distance(&shifted).0 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn lifted_top_degree_vanishes() {
        let q = Potential::step(3, 1, 2, c(1.0, 0.5), 0.0, 1.0).unwrap();
        let top = q.lifted(0.5, 3, true).unwrap();
        assert_eq!(top[(0, 0)], c(0.0, 0.0));
        assert_eq!(q.tail_cutoff(1e-12), Some(1.0));
    }
}
