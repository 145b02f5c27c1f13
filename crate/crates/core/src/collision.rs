//! The cell-localized particle Landau collision force
//! `U_p = sum_q w_q psi(x_p - x_q) A(v_p - v_q) (s_p - s_q)` and the
//! collision push.
//!
//! The hat kernel has support of exactly one cell width, so a particle only
//! interacts with particles in its own cell and the two adjacent ones.
//! Particles are sorted by cell once per evaluation and the pair sums run over
//! contiguous slices.

use rayon::prelude::*;

use crate::ensemble::{min_image, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::kernels::{apply_fixed, HatKernel};

/// Particles bucketed by cell, stored as a permutation plus offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIndex {
    /// Particle indices sorted by cell (stable within a cell).
    order: Vec<usize>,
    /// `order[offsets[j]..offsets[j + 1]]` are the particles of cell `j`.
    offsets: Vec<usize>,
}

impl CellIndex {
    /// Bins particle `p` into `floor(x_p / eta)`.
    pub fn build(particles: &ParticleEnsemble, grid: &Grid) -> CellIndex {
        let m = grid.cells;
        let cell: Vec<usize> = particles.x.iter().map(|&x| grid.cell_of(x)).collect();
        let mut offsets = vec![0usize; m + 1];
        for &c in &cell {
            offsets[c + 1] += 1;
        }
        for j in 0..m {
            offsets[j + 1] += offsets[j];
        }
        let mut fill = offsets.clone();
        let mut order = vec![0; cell.len()];
        for (p, &c) in cell.iter().enumerate() {
            order[fill[c]] = p;
            fill[c] += 1;
        }
        CellIndex { order, offsets }
    }

    pub fn cells(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn bin(&self, j: usize) -> &[usize] {
        &self.order[self.offsets[j]..self.offsets[j + 1]]
    }

    /// Range of `j` within [`CellIndex::order`].
    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The distinct cells among `{j - 1, j, j + 1}` (periodic), in that order.
    pub fn neighbors(&self, j: usize) -> Vec<usize> {
        let m = self.cells();
        let mut out = Vec::with_capacity(3);
        for c in [(j + m - 1) % m, j, (j + 1) % m] {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }
}

/// Particle data permuted into cell order, so that neighbor sums read
/// contiguous memory.
pub(crate) struct Sorted<const D: usize> {
    pub x: Vec<f64>,
    pub v: Vec<[f64; D]>,
    pub w: Vec<f64>,
}

impl<const D: usize> Sorted<D> {
    pub fn gather(particles: &ParticleEnsemble, index: &CellIndex) -> Self {
        let order = index.order();
        Sorted {
            x: order.iter().map(|&p| particles.x[p]).collect(),
            v: order
                .iter()
                .map(|&p| particles.velocity(p).try_into().unwrap())
                .collect(),
            w: order.iter().map(|&p| particles.w[p]).collect(),
        }
    }
}

/// `U` for every particle, row-major `n x dv`.
///
/// `scores` is row-major `n x dv`. Any non-finite score is rejected.
pub fn collision_force(
    particles: &ParticleEnsemble,
    scores: &[f64],
    index: &CellIndex,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let dv = particles.dv;
    if scores.len() != particles.len() * dv {
        return Err(Error::Shape(format!(
            "{} score entries for {} particles of dimension {dv}",
            scores.len(),
            particles.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidScore { index: i / dv });
    }
    Ok(match dv {
        2 => force_fixed::<2>(particles, scores, index, grid),
        3 => force_fixed::<3>(particles, scores, index, grid),
        _ => return Err(Error::Config(format!("unsupported velocity dimension {dv}"))),
    })
}

fn force_fixed<const D: usize>(
    particles: &ParticleEnsemble,
    scores: &[f64],
    index: &CellIndex,
    grid: &Grid,
) -> Vec<f64> {
    let sorted = Sorted::<D>::gather(particles, index);
    let s: Vec<[f64; D]> = index
        .order()
        .iter()
        .map(|&p| scores[p * D..(p + 1) * D].try_into().unwrap())
        .collect();
    let hat = grid.hat();
    let length = grid.length;
    let n = particles.len();

    // Cell of each sorted slot, to look up its neighbor ranges.
    let mut slot_cell = vec![0usize; n];
    for j in 0..index.cells() {
        slot_cell[index.range(j)].fill(j);
    }
    let ranges: Vec<Vec<std::ops::Range<usize>>> = (0..index.cells())
        .map(|j| index.neighbors(j).into_iter().map(|c| index.range(c)).collect())
        .collect();

    let u_sorted: Vec<[f64; D]> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|a| {
            let (xa, va, sa) = (sorted.x[a], &sorted.v[a], &s[a]);
            let mut acc = [0.0; D];
            for r in &ranges[slot_cell[a]] {
                for b in r.clone() {
                    let psi = periodic_hat(&hat, xa - sorted.x[b], length);
                    if psi == 0.0 {
                        continue;
                    }
                    let mut z = [0.0; D];
                    let mut ds = [0.0; D];
                    for i in 0..D {
                        z[i] = va[i] - sorted.v[b][i];
                        ds[i] = sa[i] - s[b][i];
                    }
                    let f = apply_fixed::<D>(&z, &ds);
                    let c = sorted.w[b] * psi;
                    for i in 0..D {
                        acc[i] += c * f[i];
                    }
                }
            }
            acc
        })
        .collect();

    let mut u = vec![0.0; n * D];
    for (slot, &p) in index.order().iter().enumerate() {
        u[p * D..(p + 1) * D].copy_from_slice(&u_sorted[slot]);
    }
    u
}

#[inline(always)]
pub(crate) fn periodic_hat(hat: &HatKernel, d: f64, length: f64) -> f64 {
    let r = min_image(d, length).abs();
    hat.eval(r) + hat.eval(length - r)
}

/// `v_p -= dt nu U_p`.
pub fn collision_push(particles: &mut ParticleEnsemble, u: &[f64], nu: f64, dt: f64) {
    let c = dt * nu;
    for (v, du) in particles.v.iter_mut().zip(u) {
        *v -= c * du;
    }
}

/// Estimated entropy production `sum_p w_p s_p . U_p`.
pub fn entropy_production(w: &[f64], scores: &[f64], u: &[f64]) -> f64 {
    let dv = scores.len() / w.len().max(1);
    w.iter()
        .zip(scores.chunks_exact(dv))
        .zip(u.chunks_exact(dv))
        .map(|((wp, s), f)| wp * s.iter().zip(f).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}
