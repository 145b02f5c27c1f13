//! Kernel-density ("blob") score estimate
//! `s(x_p, v_p) = grad_v log sum_q w_q psi(x_p - x_q) K_h(v_p - v_q)`
//! with a Gaussian `K_h`. The Gaussian normalization cancels in the ratio and
//! is omitted.

use rayon::prelude::*;

use super::{BandwidthRule, ScoreEstimator};
use crate::collision::{periodic_hat, CellIndex, Sorted};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::fields::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobEstimator {
    pub bandwidth: BandwidthRule,
}

impl BlobEstimator {
    pub fn new(bandwidth: BandwidthRule) -> Self {
        BlobEstimator { bandwidth }
    }
}

impl ScoreEstimator for BlobEstimator {
    fn name(&self) -> &'static str {
        "blob"
    }

    /// The estimate is recomputed from scratch on every call.
    fn update(&mut self, _: &ParticleEnsemble, _: &CellIndex, _: &Grid) -> Result<()> {
        Ok(())
    }

    fn estimate(&self, particles: &ParticleEnsemble, index: &CellIndex, grid: &Grid) -> Result<Vec<f64>> {
        blob_score(particles, index, grid, self.bandwidth)
    }
}

/// `h = sigma (4 / ((dv + 2) m))^(1 / (dv + 4))` where `sigma` is the sample
/// standard deviation averaged over velocity components. Returns `None` when
/// fewer than two samples or zero spread make the rule meaningless.
pub fn silverman_bandwidth<'a>(velocities: impl Iterator<Item = &'a [f64]>, dv: usize) -> Option<f64> {
    let mut m = 0usize;
    let mut sum = vec![0.0; dv];
    let mut sq = vec![0.0; dv];
    for v in velocities {
        m += 1;
        for i in 0..dv {
            sum[i] += v[i];
            sq[i] += v[i] * v[i];
        }
    }
    if m < 2 {
        return None;
    }
    let mf = m as f64;
    let sigma = (0..dv)
        .map(|i| ((sq[i] - sum[i] * sum[i] / mf).max(0.0) / (mf - 1.0)).sqrt())
        .sum::<f64>()
        / dv as f64;
    let h = sigma * (4.0 / ((dv as f64 + 2.0) * mf)).powf(1.0 / (dv as f64 + 4.0));
    (h.is_finite() && h > 0.0).then_some(h)
}

/// Blob score of every particle, row-major `n x dv`.
pub fn blob_score(
    particles: &ParticleEnsemble,
    index: &CellIndex,
    grid: &Grid,
    rule: BandwidthRule,
) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..particles.len()).collect();
    blob_score_at(particles, index, grid, rule, &all)
}

/// Blob score at the particles listed in `queries`, row-major
/// `queries.len() x dv`. The density still uses every particle.
pub fn blob_score_at(
    particles: &ParticleEnsemble,
    index: &CellIndex,
    grid: &Grid,
    rule: BandwidthRule,
    queries: &[usize],
) -> Result<Vec<f64>> {
    match particles.dv {
        2 => blob_fixed::<2>(particles, index, grid, rule, queries),
        3 => blob_fixed::<3>(particles, index, grid, rule, queries),
        d => Err(Error::Config(format!("unsupported velocity dimension {d}"))),
    }
}

fn blob_fixed<const D: usize>(
    particles: &ParticleEnsemble,
    index: &CellIndex,
    grid: &Grid,
    rule: BandwidthRule,
    queries: &[usize],
) -> Result<Vec<f64>> {
    let sorted = Sorted::<D>::gather(particles, index);
    let cells = index.cells();
    let ranges: Vec<Vec<std::ops::Range<usize>>> = (0..cells)
        .map(|j| index.neighbors(j).into_iter().map(|c| index.range(c)).collect())
        .collect();
    let bandwidth: Vec<f64> = (0..cells)
        .map(|j| match rule {
            BandwidthRule::Fixed(h) => h,
            BandwidthRule::Silverman => {
                let vs = ranges[j].iter().flat_map(|r| sorted.v[r.clone()].iter().map(|v| &v[..]));
                // A degenerate neighborhood has all velocities equal, where
                // every gradient term vanishes whatever h is.
                silverman_bandwidth(vs, D).unwrap_or(1.0)
            }
        })
        .collect();
    let hat = grid.hat();
    let length = grid.length;

    let rows: Vec<Result<[f64; D]>> = queries
        .par_iter()
        .with_min_len(64)
        .map(|&p| {
            let xp = particles.x[p];
            let vp: [f64; D] = particles.velocity(p).try_into().unwrap();
            let j = grid.cell_of(xp);
            let inv_h2 = 1.0 / (bandwidth[j] * bandwidth[j]);
            let mut num = [0.0; D];
            let mut den = 0.0;
            for r in &ranges[j] {
                for b in r.clone() {
                    let psi = periodic_hat(&hat, xp - sorted.x[b], length);
                    if psi == 0.0 {
                        continue;
                    }
                    let mut u = [0.0; D];
                    let mut u2 = 0.0;
                    for i in 0..D {
                        u[i] = vp[i] - sorted.v[b][i];
                        u2 += u[i] * u[i];
                    }
                    let k = sorted.w[b] * psi * (-0.5 * u2 * inv_h2).exp();
                    den += k;
                    for i in 0..D {
                        num[i] -= k * u[i];
                    }
                }
            }
            if !(den >= f64::MIN_POSITIVE) {
                return Err(Error::IsolatedParticle { index: p });
            }
            let mut s = [0.0; D];
            for i in 0..D {
                s[i] = num[i] * inv_h2 / den;
            }
            Ok(s)
        })
        .collect();
    let mut out = Vec::with_capacity(queries.len() * D);
    for r in rows {
        out.extend_from_slice(&r?);
    }
    Ok(out)
}
