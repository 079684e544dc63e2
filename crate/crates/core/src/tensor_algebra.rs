//! Exterior algebra over C^n with dense coefficient storage.
//!
//! Basis m-vectors `e_a1 ^ ... ^ e_am` are indexed by strictly increasing
//! multi-indices, enumerated in lexicographic order. Internally a
//! multi-index is a bitmask; bit `j - 1` marks entry `j`.

use std::fmt;
use std::sync::OnceLock;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det, CMatrix, CVector, C64, ONE, ZERO};

/// Largest ambient dimension with precomputed index tables.
pub const MAX_DIM: usize = 12;

struct Tables {
    /// `masks[m]` lists the degree-m masks in lexicographic order.
    masks: Vec<Vec<u32>>,
    /// `rank[mask]` is the lexicographic position of `mask` within its degree.
    rank: Vec<u32>,
}

fn tables(n: usize) -> &'static Tables {
    static CACHE: OnceLock<Vec<Tables>> = OnceLock::new();
    let all = CACHE.get_or_init(|| (0..=MAX_DIM).map(build_tables).collect());
    &all[n]
}

fn build_tables(n: usize) -> Tables {
    let mut masks = vec![Vec::new(); n + 1];
    let mut rank = vec![0u32; 1 << n];
    for m in 0..=n {
        let mut out = Vec::new();
        lex_subsets(n, m, 0, 0, &mut out);
        for (i, &mask) in out.iter().enumerate() {
            rank[mask as usize] = i as u32;
        }
        masks[m] = out;
    }
    Tables { masks, rank }
}

fn lex_subsets(n: usize, m: usize, start: usize, acc: u32, out: &mut Vec<u32>) {
    if m == 0 {
        out.push(acc);
        return;
    }
    for j in start..n {
        if n - j < m {
            break;
        }
        lex_subsets(n, m - 1, j + 1, acc | (1 << j), out);
    }
}

pub fn binomial(n: usize, m: usize) -> usize {
    if m > n {
        return 0;
    }
    let m = m.min(n - m);
    (0..m).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DIM {
        return Err(Error::domain(format!("ambient dimension {n} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

/// Sign of `e_A ^ e_B` relative to `e_{A|B}` for disjoint masks.
pub(crate) fn merge_sign(a: u32, b: u32) -> f64 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Strictly increasing multi-index with entries in `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    mask: u32,
    n: usize,
}

impl MultiIndex {
    pub fn new(entries: &[usize], n: usize) -> Result<Self> {
        check_dim(n)?;
        if entries.is_empty() || entries.len() > n {
            return Err(Error::domain(format!("multi-index length {} not in 1..={n}", entries.len())));
        }
        let mut mask = 0u32;
        let mut prev = 0usize;
        for &e in entries {
            if e <= prev || e > n {
                return Err(Error::domain(format!("multi-index {entries:?} not strictly increasing in 1..={n}")));
            }
            mask |= 1 << (e - 1);
            prev = e;
        }
        Ok(MultiIndex { mask, n })
    }

    pub(crate) fn from_mask(mask: u32, n: usize) -> Self {
        MultiIndex { mask, n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    /// 1-based entries in increasing order.
    pub fn entries(&self) -> Vec<usize> {
        (0..self.n).filter(|j| self.mask & (1 << j) != 0).map(|j| j + 1).collect()
    }

    /// Position of this index in the lexicographic enumeration of its degree.
    pub fn rank(&self) -> usize {
        tables(self.n).rank[self.mask as usize] as usize
    }

    /// Complementary multi-index and the sign of `e_a ^ e_a'` against the volume form.
    /// For the full index the complement is empty.
    pub fn complement(&self) -> (MultiIndex, f64) {
        let full = (1u32 << self.n) - 1;
        let comp = full & !self.mask;
        (MultiIndex { mask: comp, n: self.n }, merge_sign(self.mask, comp))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries().iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All ordered multi-indices of length m over `1..=n`, lexicographically sorted.
pub fn enumerate_multi_indices(n: usize, m: usize) -> Result<Vec<MultiIndex>> {
    check_dim(n)?;
    if m == 0 || m > n {
        return Err(Error::domain(format!("degree {m} outside 1..={n}")));
    }
    Ok(tables(n).masks[m].iter().map(|&mask| MultiIndex { mask, n }).collect())
}

pub(crate) fn masks(n: usize, m: usize) -> &'static [u32] {
    &tables(n).masks[m]
}

pub(crate) fn rank_of(n: usize, mask: u32) -> usize {
    tables(n).rank[mask as usize] as usize
}

/// Element of the m-th exterior power of C^n.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector {
    n: usize,
    m: usize,
    coeffs: Vec<C64>,
}

impl MultiVector {
    pub fn zeros(n: usize, m: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n) && m <= n, "bad exterior power {m} of C^{n}");
        MultiVector { n, m, coeffs: vec![ZERO; binomial(n, m)] }
    }

    /// Degree-0 element (a scalar).
    pub fn scalar(n: usize, value: C64) -> Self {
        MultiVector { n, m: 0, coeffs: vec![value] }
    }

    pub fn from_coeffs(n: usize, m: usize, coeffs: Vec<C64>) -> Result<Self> {
        check_dim(n)?;
        if m > n || coeffs.len() != binomial(n, m) {
            return Err(Error::domain(format!(
                "expected {} coefficients for degree {m} over C^{n}, got {}",
                binomial(n, m),
                coeffs.len()
            )));
        }
        Ok(MultiVector { n, m, coeffs })
    }

    pub fn basis(index: MultiIndex) -> Self {
        let mut v = Self::zeros(index.n, index.len());
        v.coeffs[index.rank()] = ONE;
        v
    }

    /// The basis vector `e_j` (1-based).
    pub fn unit(n: usize, j: usize) -> Self {
        let mut v = Self::zeros(n, 1);
        v.coeffs[j - 1] = ONE;
        v
    }

    pub fn from_vector(v: &CVector) -> Self {
        MultiVector { n: v.len(), m: 1, coeffs: v.iter().copied().collect() }
    }

    /// `v_1 ^ ... ^ v_m` for the given vectors (a scalar 1 for an empty list).
    pub fn from_vectors(n: usize, vs: &[CVector]) -> Self {
        vs.iter()
            .fold(MultiVector::scalar(n, ONE), |acc, v| acc.wedge(&MultiVector::from_vector(v)).expect("degree overflow"))
    }

    /// Wedge of the selected (0-based) columns of `mat`, computed from minors.
    pub fn from_columns(mat: &CMatrix, cols: &[usize]) -> Self {
        let n = mat.nrows();
        let m = cols.len();
        if m == 0 {
            return Self::scalar(n, ONE);
        }
        let mut out = Self::zeros(n, m);
        for (r, &rows) in masks(n, m).iter().enumerate() {
            let row_idx: Vec<usize> = (0..n).filter(|j| rows & (1 << j) != 0).collect();
            let sub = CMatrix::from_fn(m, m, |i, j| mat[(row_idx[i], cols[j])]);
            out.coeffs[r] = if m == 1 { sub[(0, 0)] } else { det(&sub) };
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, index: MultiIndex) -> C64 {
        self.coeffs[index.rank()]
    }

    pub fn to_vector(&self) -> CVector {
        CVector::from_iterator(self.coeffs.len(), self.coeffs.iter().copied())
    }

    /// l1 norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        MultiVector { n: self.n, m: self.m, coeffs: self.coeffs.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.n, self.m), (other.n, other.m));
        MultiVector {
            n: self.n,
            m: self.m,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.n, self.m), (other.n, other.m));
        MultiVector {
            n: self.n,
            m: self.m,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Self) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).sum()
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::domain("wedge of multivectors over different dimensions"));
        }
        let deg = self.m + other.m;
        if deg > self.n {
            return Err(Error::domain(format!("wedge degree {deg} exceeds dimension {}", self.n)));
        }
        let n = self.n;
        let mut out = Self::zeros(n, deg);
        let ma = masks(n, self.m);
        let mb = masks(n, other.m);
        for (ia, &a) in ma.iter().enumerate() {
            let ca = self.coeffs[ia];
            if ca == ZERO {
                continue;
            }
            for (ib, &b) in mb.iter().enumerate() {
                if a & b != 0 {
                    continue;
                }
                let cb = other.coeffs[ib];
                if cb == ZERO {
                    continue;
                }
                out.coeffs[rank_of(n, a | b)] += ca * cb * merge_sign(a, b);
            }
        }
        Ok(out)
    }

    /// Top-form coefficient of `self ^ other`, for complementary degrees.
    pub fn pair(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.m + other.m, self.n);
        let n = self.n;
        let full = (1u32 << n) - 1;
        let mut acc = ZERO;
        for (ia, &a) in masks(n, self.m).iter().enumerate() {
            let comp = full & !a;
            acc += self.coeffs[ia] * other.coeffs[rank_of(n, comp)] * merge_sign(a, comp);
        }
        acc
    }
}

/// Coefficient of a degree-n element against `e_1 ^ ... ^ e_n`.
pub fn top_coefficient(h: &MultiVector) -> Result<C64> {
    if h.m != h.n {
        return Err(Error::domain(format!("top coefficient needs degree {}, got {}", h.n, h.m)));
    }
    Ok(h.coeffs[0])
}

pub fn wedge(u: &MultiVector, v: &MultiVector) -> Result<MultiVector> {
    u.wedge(v)
}

pub fn complement(alpha: MultiIndex) -> (MultiIndex, f64) {
    alpha.complement()
}

impl Serialize for MultiVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.coeffs.len()))?;
        for (i, &mask) in masks(self.n, self.m).iter().enumerate() {
            let idx = MultiIndex::from_mask(mask, self.n).entries();
            seq.serialize_element(&(idx, self.coeffs[i].re, self.coeffs[i].im))?;
        }
        seq.end()
    }
}

/// Deserialization needs the ambient dimension, so it goes through [`MultiVector::from_triples`].
impl MultiVector {
    pub fn from_triples(n: usize, triples: &[(Vec<usize>, f64, f64)]) -> Result<Self> {
        check_dim(n)?;
        let m = triples.first().map(|t| t.0.len()).unwrap_or(0);
        let mut out = MultiVector::zeros(n, m);
        for (idx, re, im) in triples {
            if idx.len() != m {
                return Err(Error::input("mixed degrees in multivector triples"));
            }
            let r = if m == 0 { 0 } else { MultiIndex::new(idx, n)?.rank() };
            out.coeffs[r] = C64::new(*re, *im);
        }
        Ok(out)
    }
}

/// Raw triple list as read from JSON.
#[derive(Debug, Clone)]
pub struct Triples(pub Vec<(Vec<usize>, f64, f64)>);

impl<'de> Deserialize<'de> for Triples {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Triples;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("array of [multi-index, re, im]")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Triples, A::Error> {
                let mut out = Vec::new();
                while let Some(t) = seq.next_element::<(Vec<usize>, f64, f64)>()? {
                    out.push(t);
                }
                if out.is_empty() {
                    return Err(de::Error::custom("empty multivector"));
                }
                Ok(Triples(out))
            }
        }
        d.deserialize_seq(V)
    }
}

/// Induced action `V^(m)` of an n x n matrix on the m-th exterior power.
#[derive(Debug, Clone)]
pub struct LiftedOperator {
    n: usize,
    m: usize,
    matrix: CMatrix,
}

impl LiftedOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &MultiVector) -> MultiVector {
        debug_assert_eq!((v.n, v.m), (self.n, self.m));
        let mut out = MultiVector::zeros(self.n, self.m);
        let dim = out.coeffs.len();
        for j in 0..dim {
            let vj = v.coeffs[j];
            if vj == ZERO {
                continue;
            }
            for i in 0..dim {
                out.coeffs[i] += self.matrix[(i, j)] * vj;
            }
        }
        out
    }
}

/// Builds `V^(m)`: slot-wise derivation `sum_j v_1 ^ .. ^ V v_j ^ .. ^ v_m`.
pub fn lift_operator(v: &CMatrix, m: usize) -> Result<LiftedOperator> {
    let n = v.nrows();
    check_dim(n)?;
    if v.ncols() != n {
        return Err(Error::domain("lift_operator needs a square matrix"));
    }
    if m == 0 || m > n {
        return Err(Error::domain(format!("degree {m} outside 1..={n}")));
    }
    let basis = masks(n, m);
    let dim = basis.len();
    let mut matrix = CMatrix::zeros(dim, dim);
    for (col, &alpha) in basis.iter().enumerate() {
        let mut slots = alpha;
        while slots != 0 {
            let a = slots.trailing_zeros() as usize;
            slots &= slots - 1;
            let rest = alpha & !(1 << a);
            for i in 0..n {
                let vi = v[(i, a)];
                if vi == ZERO || rest & (1 << i) != 0 {
                    continue;
                }
                // move e_i from slot of e_a to its sorted position
                let (lo, hi) = if i < a { (i, a) } else { (a, i) };
                let between = rest & (((1u32 << hi) - 1) & !((1u32 << (lo + 1)) - 1));
                let sign = if between.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                matrix[(rank_of(n, rest | (1 << i)), col)] += vi * sign;
            }
        }
    }
    Ok(LiftedOperator { n, m, matrix })
}

/// m-th compound matrix: column `a` holds the wedge of columns `a` of `mat`.
pub fn compound(mat: &CMatrix, m: usize) -> CMatrix {
    let n = mat.nrows();
    let basis = masks(n, m);
    let dim = basis.len();
    let mut out = CMatrix::zeros(dim, dim);
    for (col, &alpha) in basis.iter().enumerate() {
        let cols: Vec<usize> = (0..n).filter(|j| alpha & (1 << j) != 0).collect();
        let w = MultiVector::from_columns(mat, &cols);
        for r in 0..dim {
            out[(r, col)] = w.coeffs[r];
        }
    }
    out
}

/// Antisymmetric coefficient lookup for an unsorted index list (0-based).
fn coeff_unsorted(y: &MultiVector, idx: &[usize]) -> C64 {
    let mut mask = 0u32;
    let mut inversions = 0usize;
    for (p, &i) in idx.iter().enumerate() {
        if mask & (1 << i) != 0 {
            return ZERO;
        }
        mask |= 1 << i;
        inversions += idx[..p].iter().filter(|&&j| j > i).count();
    }
    let c = y.coeffs[rank_of(y.n, mask)];
    if inversions.is_multiple_of(2) {
        c
    } else {
        -c
    }
}

/// Scale-invariant decomposability certificate: l1 norm of all quadratic
/// Pluecker relations divided by `|Y|^2`. Zero exactly for decomposable Y.
pub fn plucker_residual(y: &MultiVector) -> f64 {
    let (n, m) = (y.n, y.m);
    if m <= 1 || m + 1 >= n {
        return 0.0;
    }
    let norm = y.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for &imask in masks(n, m - 1) {
        let ii: Vec<usize> = (0..n).filter(|j| imask & (1 << j) != 0).collect();
        for &jmask in masks(n, m + 1) {
            let jj: Vec<usize> = (0..n).filter(|j| jmask & (1 << j) != 0).collect();
            let mut rel = ZERO;
            for l in 0..=m {
                let mut left = ii.clone();
                left.push(jj[l]);
                let right: Vec<usize> = jj.iter().enumerate().filter(|&(p, _)| p != l).map(|(_, &j)| j).collect();
                let term = coeff_unsorted(y, &left) * coeff_unsorted(y, &right);
                if l % 2 == 0 {
                    rel += term;
                } else {
                    rel -= term;
                }
            }
            total += rel.norm();
        }
    }
    total / (norm * norm)
}

/// Recovers m vectors whose wedge equals a decomposable `y`.
///
/// Pivots on the largest coefficient `a*`; contracting `y` against the dual
/// basis elements of `a*` with one slot removed yields vectors already in
/// reduced echelon form on the pivot columns.
pub fn decompose(y: &MultiVector, tol: f64) -> Result<Vec<CVector>> {
    let (n, m) = (y.n, y.m);
    if m == 0 {
        return Err(Error::domain("cannot decompose a scalar"));
    }
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::NotDecomposable { residual: f64::INFINITY, tol });
    }
    let residual = plucker_residual(y);
    if residual > tol {
        return Err(Error::NotDecomposable { residual, tol });
    }
    let (pivot_rank, pivot_val) = y
        .coeffs
        .iter()
        .enumerate()
        .fold((0, ZERO), |acc, (i, &c)| if c.norm() > acc.1.norm() { (i, c) } else { acc });
    let pivot_mask = masks(n, m)[pivot_rank];
    let pivot: Vec<usize> = (0..n).filter(|j| pivot_mask & (1 << j) != 0).collect();
    let mut vectors = Vec::with_capacity(m);
    for slot in 0..m {
        let mut v = CVector::zeros(n);
        for j in 0..n {
            let mut idx = pivot.clone();
            idx[slot] = j;
            v[j] = coeff_unsorted(y, &idx);
        }
        // v[pivot[slot]] == pivot_val
        v /= pivot_val;
        vectors.push(v);
    }
    vectors[0] *= pivot_val;
    let rebuilt = MultiVector::from_vectors(n, &vectors);
    let err = rebuilt.distance(y);
    if err > tol.max(1e-12) * norm {
        return Err(Error::NotDecomposable { residual: err / norm, tol });
    }
    Ok(vectors)
}

/// Matrix of the linear map `v -> x ^ v` on vectors (C^n -> degree deg(x)+1).
pub fn wedge_matrix(x: &MultiVector) -> CMatrix {
    let n = x.n;
    let mut out = CMatrix::zeros(binomial(n, x.m + 1), n);
    for j in 0..n {
        let col = x.wedge(&MultiVector::unit(n, j + 1)).expect("degree overflow");
        for (i, v) in col.coeffs.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn enumerates_lexicographically() {
        let idx = enumerate_multi_indices(3, 2).unwrap();
        let e: Vec<Vec<usize>> = idx.iter().map(|i| i.entries()).collect();
        assert_eq!(e, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        let e: Vec<Vec<usize>> = enumerate_multi_indices(4, 1).unwrap().iter().map(|i| i.entries()).collect();
        assert_eq!(e, vec![vec![1], vec![2], vec![3], vec![4]]);
        let five = enumerate_multi_indices(5, 3).unwrap();
        assert_eq!(five.len(), 10);
        assert_eq!(five[0].entries(), vec![1, 2, 3]);
        assert_eq!(five[9].entries(), vec![3, 4, 5]);
        assert!(enumerate_multi_indices(3, 0).is_err());
        assert!(enumerate_multi_indices(3, 4).is_err());
    }

    #[test]
    fn multi_index_validation() {
        assert!(MultiIndex::new(&[2, 1], 3).is_err());
        assert!(MultiIndex::new(&[1, 4], 3).is_err());
        assert!(MultiIndex::new(&[], 3).is_err());
        assert_eq!(MultiIndex::new(&[1, 3], 3).unwrap().to_string(), "(1,3)");
    }

    #[test]
    fn basic_wedges() {
        let e1 = MultiVector::unit(3, 1);
        let e2 = MultiVector::unit(3, 2);
        let w = e1.wedge(&e2).unwrap();
        assert_eq!(w.coeffs(), &[ONE, ZERO, ZERO]);
        let w = e2.wedge(&e1).unwrap();
        assert_eq!(w.coeffs(), &[-ONE, ZERO, ZERO]);
        let s = e1.add(&e2);
        assert_eq!(s.wedge(&s).unwrap().norm(), 0.0);
        let e3 = MultiVector::unit(3, 3);
        assert!(w.wedge(&e3).unwrap().wedge(&e3).is_err());
    }

    #[test]
    fn complement_signs() {
        let (a, s) = MultiIndex::new(&[1, 2], 3).unwrap().complement();
        assert_eq!((a.entries(), s), (vec![3], 1.0));
        let (a, s) = MultiIndex::new(&[1, 3], 3).unwrap().complement();
        assert_eq!((a.entries(), s), (vec![2], -1.0));
        // (2,4,1,3): inversions (2,1),(4,1),(4,3) -> odd
        let (a, s) = MultiIndex::new(&[2, 4], 4).unwrap().complement();
        assert_eq!((a.entries(), s), (vec![1, 3], -1.0));
    }

    #[test]
    fn top_coefficient_of_volume() {
        let vol = MultiVector::basis(MultiIndex::new(&[1, 2, 3], 3).unwrap());
        assert_eq!(top_coefficient(&vol).unwrap(), ONE);
        assert_eq!(top_coefficient(&vol.scale(c(0.0, 2.0))).unwrap(), c(0.0, 2.0));
        assert!(top_coefficient(&MultiVector::unit(3, 1)).is_err());
    }

    #[test]
    fn lift_of_identity_and_diagonal() {
        let id = CMatrix::identity(4, 4);
        for m in 1..=4 {
            let l = lift_operator(&id, m).unwrap();
            let dim = binomial(4, m);
            assert!((l.matrix() - CMatrix::identity(dim, dim) * c(m as f64, 0.0)).norm() < 1e-15);
        }
        let b = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, -1.0), c(2.0, 0.5)];
        let d = CMatrix::from_diagonal(&CVector::from_vec(b.to_vec()));
        let l = lift_operator(&d, 2).unwrap();
        for (r, alpha) in enumerate_multi_indices(4, 2).unwrap().iter().enumerate() {
            let e = alpha.entries();
            let expect = b[e[0] - 1] + b[e[1] - 1];
            for col in 0..6 {
                let want = if col == r { expect } else { ZERO };
                assert!((l.matrix()[(r, col)] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn plucker_certificate() {
        let e = |j| MultiVector::unit(4, j);
        let y = e(1).wedge(&e(2)).unwrap();
        assert_eq!(plucker_residual(&y), 0.0);
        let y2 = y.add(&e(3).wedge(&e(4)).unwrap());
        // four (I, J) pairs with I not in J each give |p12 p34 - p13 p24 + p14 p23| = 1; |Y|^2 = 4
        assert!((plucker_residual(&y2) - 1.0).abs() < 1e-15);
        assert!(decompose(&y2, 1e-8).is_err());
    }

    #[test]
    fn decompose_basis_wedge() {
        let y = MultiVector::unit(4, 1).wedge(&MultiVector::unit(4, 3)).unwrap();
        let vs = decompose(&y, 1e-12).unwrap();
        assert_eq!(vs.len(), 2);
        assert!(MultiVector::from_vectors(4, &vs).distance(&y) < 1e-15);
        for v in &vs {
            assert!(v[1].norm() == 0.0 && v[3].norm() == 0.0);
        }
        assert!(decompose(&MultiVector::zeros(4, 2), 1e-8).is_err());
    }

    #[test]
    fn triples_round_trip() {
        let y = MultiVector::from_coeffs(3, 2, vec![c(1.0, 2.0), c(0.0, -1.0), c(3.5, 0.0)]).unwrap();
        let json = serde_json::to_string(&y).unwrap();
        assert_eq!(json, "[[[1,2],1.0,2.0],[[1,3],0.0,-1.0],[[2,3],3.5,0.0]]");
        let t: Triples = serde_json::from_str(&json).unwrap();
        assert_eq!(MultiVector::from_triples(3, &t.0).unwrap(), y);
    }
}
