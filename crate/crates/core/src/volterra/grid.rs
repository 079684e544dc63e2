//! Computational x-grids for one value of rho.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::potential::Potential;
use crate::unperturbed::{Psi0Sample, UnperturbedBasis};

use super::SolverOptions;

/// Nodes, the potential piece active on each panel and Psi0 at each node.
#[derive(Debug, Clone)]
pub struct RayGrid {
    pub rho: C64,
    pub nodes: Vec<f64>,
    /// Piece index for panel [nodes[i], nodes[i+1]] (None where q = 0).
    pub panel_piece: Vec<Option<usize>>,
    /// Node index of each requested output abscissa.
    pub output_index: Vec<usize>,
    /// Start of the backward march for F (q is treated as 0 beyond it).
    pub x_max: f64,
    pub x_max_index: usize,
    pub samples: Vec<Psi0Sample>,
}

/// Smallest positive real part of (R_j - R_k) e^{i phi}, floored.
fn exponent_gap(basis: &UnperturbedBasis, phi: f64) -> f64 {
    let dir = C64::from_polar(1.0, phi);
    let r = &basis.ctx.r;
    let mut gap = f64::INFINITY;
    for j in 0..r.len() {
        for k in j + 1..r.len() {
            gap = gap.min(((r[k] - r[j]) * dir).re.abs());
        }
    }
    gap.max(0.02)
}

fn segment_points(a: f64, b: f64, bounded: bool, rho_abs: f64, z_near: f64, z_t: f64, opts: &SolverOptions, out: &mut Vec<f64>) {
    let zres = opts.dz / rho_abs;
    let h0 = 1e-3 * zres.min(opts.base_ratio * a.max(1e-300).min(b - a));
    let len = b - a;
    let mut x = a;
    out.push(a);
    let mut guard = 0usize;
    loop {
        let d_end = (x - a).min(b - x);
        let mut h = opts.base_ratio * if bounded { x.min(len) } else { x };
        if rho_abs * x <= z_near || rho_abs * d_end <= z_t {
            h = h.min(zres);
        }
        h = h.min(h0 + 0.5 * d_end).max(1e-15 * x.max(1e-300));
        if x + 1.5 * h >= b {
            break;
        }
        x += h;
        out.push(x);
        guard += 1;
        if guard > 5_000_000 {
            break;
        }
    }
    out.push(b);
}

impl RayGrid {
    pub fn build(basis: &UnperturbedBasis, q: &Potential, rho: C64, xs: &[f64], opts: &SolverOptions) -> Result<RayGrid> {
        if rho.norm() == 0.0 {
            return Err(Error::domain("rho = 0"));
        }
        if xs.is_empty() || xs.windows(2).any(|w| !(w[1] > w[0])) || !(xs[0] > 0.0) {
            return Err(Error::input("x-grid must be positive and strictly increasing"));
        }
        let rho_abs = rho.norm();
        let x_lo = opts.x_floor.min(xs[0]);
        let x_top = *xs.last().unwrap();
        let active: Vec<usize> = (0..q.pieces.len())
            .filter(|&i| q.pieces[i].entries.iter().any(|(_, _, e)| !e.is_zero()))
            .collect();
        let support_end = active.last().map_or(0.0, |&i| q.pieces[i].to);
        let x_max = if support_end.is_finite() {
            support_end.max(x_lo)
        } else {
            let cut = q.tail_cutoff(opts.tail_tol).ok_or_else(|| {
                Error::numerical(format!("potential tail too slow: no X_max <= 1e8 with tail below {:e}", opts.tail_tol))
            })?;
            cut.max(x_top)
        };
        let z_near = 2.0 * basis.r_far();
        let z_t = opts.transient_z / exponent_gap(basis, rho.arg());
        let mut pts = vec![x_lo, x_max];
        pts.extend_from_slice(xs);
        for &i in &active {
            let pc = &q.pieces[i];
            let a = pc.from.max(x_lo);
            let b = pc.to.min(x_max);
            if b > a {
                segment_points(a, b, pc.to.is_finite(), rho_abs, z_near, z_t, opts, &mut pts);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * a.abs().max(1e-300));
        Self::from_nodes(basis, q, rho, pts, xs, x_max, &active)
    }

    fn from_nodes(basis: &UnperturbedBasis, q: &Potential, rho: C64, nodes: Vec<f64>, xs: &[f64], x_max: f64, active: &[usize]) -> Result<RayGrid> {
        let panel_piece = panel_pieces(q, &nodes, x_max, active);
        let output_index = locate(&nodes, xs)?;
        let x_max_index = locate(&nodes, &[x_max])?[0];
        let radii: Vec<f64> = nodes.iter().map(|x| x * rho.norm()).collect();
        let samples = basis.sample_ray(rho.arg(), &radii)?;
        Ok(RayGrid { rho, nodes, panel_piece, output_index, x_max, x_max_index, samples })
    }

    /// Grid with every panel bisected; Psi0 samples are reused at old nodes.
    pub fn refine(&self, basis: &UnperturbedBasis, q: &Potential, xs: &[f64]) -> Result<RayGrid> {
        let mids: Vec<f64> = self.nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let radii: Vec<f64> = mids.iter().map(|x| x * self.rho.norm()).collect();
        let mid_samples = basis.sample_ray(self.rho.arg(), &radii)?;
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        let mut samples = Vec::with_capacity(2 * self.nodes.len());
        for i in 0..self.nodes.len() {
            nodes.push(self.nodes[i]);
            samples.push(self.samples[i].clone());
            if i < mids.len() {
                nodes.push(mids[i]);
                samples.push(mid_samples[i].clone());
            }
        }
        let active: Vec<usize> = self.panel_piece.iter().flatten().copied().collect();
        let panel_piece = panel_pieces(q, &nodes, self.x_max, &active);
        Ok(RayGrid {
            rho: self.rho,
            output_index: locate(&nodes, xs)?,
            x_max_index: 2 * self.x_max_index,
            x_max: self.x_max,
            nodes,
            panel_piece,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn panel_pieces(q: &Potential, nodes: &[f64], x_max: f64, active: &[usize]) -> Vec<Option<usize>> {
    nodes
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            if mid > x_max {
                return None;
            }
            active.iter().copied().find(|&i| mid > q.pieces[i].from && mid < q.pieces[i].to)
        })
        .collect()
}

fn locate(nodes: &[f64], xs: &[f64]) -> Result<Vec<usize>> {
    xs.iter()
        .map(|&x| {
            let i = nodes.partition_point(|&v| v < x * (1.0 - 1e-13));
            if i < nodes.len() && (nodes[i] - x).abs() <= 1e-13 * x.abs().max(1e-300) {
                Ok(i)
            } else {
                Err(Error::numerical(format!("grid lost output abscissa {x}")))
            }
        })
        .collect()
}
