//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's own kernels.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vml_core::ensemble::ParticleEnsemble;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random positions, standard-normal velocities and weights in `[0.5, 1.5)`.
pub fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, dv: usize, length: f64) -> ParticleEnsemble {
    let x = (0..n).map(|_| rng.random_range(0.0..length)).collect();
    let v = normals(rng, n * dv);
    let w = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    ParticleEnsemble::new(length, dv, x, v, w).unwrap()
}

/// Hat function summed explicitly over periodic images.
pub fn hat_images(d: f64, eta: f64, length: f64) -> f64 {
    (-3..=3)
        .map(|k| {
            let r = (d + k as f64 * length).abs();
            (1.0 - r / eta).max(0.0) / eta
        })
        .sum()
}

/// `|z|^(2 - dv) (I - z z^T / |z|^2)` as nested rows.
pub fn landau_matrix(z: &[f64]) -> Vec<Vec<f64>> {
    let dv = z.len();
    let n2: f64 = z.iter().map(|c| c * c).sum();
    if n2.sqrt() < 1e-12 {
        return vec![vec![0.0; dv]; dv];
    }
    let scale = n2.sqrt().powi(2 - dv as i32);
    (0..dv)
        .map(|i| {
            (0..dv)
                .map(|j| scale * ((i == j) as u8 as f64 - z[i] * z[j] / n2))
                .collect()
        })
        .collect()
}

/// `U_p = sum_q w_q psi(x_p - x_q) A(v_p - v_q)(s_p - s_q)` over all pairs.
pub fn brute_force_force(p: &ParticleEnsemble, scores: &[f64], cells: usize) -> Vec<f64> {
    let (n, dv, length) = (p.len(), p.dv, p.length);
    let eta = length / cells as f64;
    let mut u = vec![0.0; n * dv];
    for a in 0..n {
        for b in 0..n {
            let psi = hat_images(p.x[a] - p.x[b], eta, length);
            if psi == 0.0 {
                continue;
            }
            let z: Vec<f64> = (0..dv).map(|i| p.v[a * dv + i] - p.v[b * dv + i]).collect();
            let m = landau_matrix(&z);
            for i in 0..dv {
                let f: f64 = (0..dv)
                    .map(|j| m[i][j] * (scores[a * dv + j] - scores[b * dv + j]))
                    .sum();
                u[a * dv + i] += p.w[b] * psi * f;
            }
        }
    }
    u
}

/// Plain two-layer softsign MLP written out from its definition, parameters
/// in the order W1 (H x (1+dv)), b1, W2 (dv x H), b2.
pub fn reference_forward(params: &[f64], dv: usize, hidden: usize, x: f64, v: &[f64]) -> Vec<f64> {
    let cols = 1 + dv;
    let w1 = &params[..hidden * cols];
    let b1 = &params[hidden * cols..hidden * cols + hidden];
    let w2 = &params[hidden * cols + hidden..hidden * cols + hidden + dv * hidden];
    let b2 = &params[hidden * cols + hidden + dv * hidden..];
    let input: Vec<f64> = std::iter::once(x).chain(v.iter().copied()).collect();
    let act: Vec<f64> = (0..hidden)
        .map(|h| {
            let u = b1[h] + (0..cols).map(|c| w1[h * cols + c] * input[c]).sum::<f64>();
            u / (1.0 + u.abs())
        })
        .collect();
    (0..dv)
        .map(|i| b2[i] + (0..hidden).map(|h| w2[i * hidden + h] * act[h]).sum::<f64>())
        .collect()
}

/// Every sign vector in `{-1, +1}^dv`.
pub fn sign_vectors(dv: usize) -> Vec<Vec<f64>> {
    (0..1usize << dv)
        .map(|bits| (0..dv).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
