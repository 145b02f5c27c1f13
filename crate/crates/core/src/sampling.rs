//! Initial particle ensembles and fields for the presets.
//!
//! Positions follow the spatial marginal `(1 + alpha cos kx) / L`; velocities
//! follow each preset's velocity distribution. Sampling is sequential on one
//! seeded stream, so an ensemble is fully determined by `(config, seed)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{Preset, PresetParams, SimConfig};
use crate::ensemble::ParticleEnsemble;
use crate::error::Result;
use crate::fields::{FieldState, Grid};
use crate::pic::{deposit, poisson_solve};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// `F(x) = (x + (alpha / k) sin kx) / L`, the CDF of the spatial marginal
/// when `k` is a harmonic of the domain.
pub fn spatial_cdf(x: f64, alpha: f64, k: f64, length: f64) -> f64 {
    (x + alpha / k * (k * x).sin()) / length
}

/// Solves `F(x) = u` by Newton's method, falling back to bisection (`F` is
/// strictly increasing for `|alpha| < 1`).
pub fn inverse_spatial_cdf(u: f64, alpha: f64, k: f64, length: f64) -> f64 {
    let f = |x: f64| spatial_cdf(x, alpha, k, length) - u;
    let mut x = u * length;
    for _ in 0..NEWTON_MAX_ITER {
        let r = f(x);
        if r.abs() < NEWTON_TOL {
            if (0.0..length).contains(&x) {
                return x;
            }
            break;
        }
        let slope = (1.0 + alpha * (k * x).cos()) / length;
        x -= r / slope;
        if !x.is_finite() {
            break;
        }
    }
    let (mut lo, mut hi) = (0.0, length);
    while hi - lo > f64::EPSILON * length {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn sample_positions<R: Rng>(n: usize, alpha: f64, k: f64, length: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if alpha == 0.0 {
                rng.random_range(0.0..length)
            } else {
                inverse_spatial_cdf(rng.random::<f64>(), alpha, k, length)
            }
        })
        .collect()
}

/// Velocities, row-major `n x dv`.
///
/// * landau_damping, custom: standard normal.
/// * two_stream: `v1` from `(N(c, 1) + N(-c, 1)) / 2`, others standard normal.
/// * weibel: variance `beta / 2` in every component; `v2` is additionally
///   split into beams at `+-c`.
pub fn sample_velocities<R: Rng>(
    n: usize,
    dv: usize,
    preset: Preset,
    params: &PresetParams,
    rng: &mut R,
) -> Vec<f64> {
    let mut v = Vec::with_capacity(n * dv);
    let thermal = match preset {
        Preset::Weibel => (0.5 * params.beta).sqrt(),
        _ => 1.0,
    };
    let normal = Normal::new(0.0, thermal).expect("positive thermal speed");
    let beam_component = match preset {
        Preset::TwoStream => Some(0),
        Preset::Weibel => Some(1),
        _ => None,
    };
    for _ in 0..n {
        for i in 0..dv {
            let mut x: f64 = normal.sample(rng);
            if beam_component == Some(i) {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                x += sign * params.c;
            }
            v.push(x);
        }
    }
    v
}

/// Samples `cfg.n` equally weighted particles.
pub fn sample_ensemble<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<ParticleEnsemble> {
    let p = &cfg.preset_params;
    let x = sample_positions(cfg.n, p.alpha, p.k, cfg.length, rng);
    let v = sample_velocities(cfg.n, cfg.dv, cfg.preset, p, rng);
    ParticleEnsemble::with_equal_weights(cfg.length, cfg.dv, x, v)
}

/// Deposits the ensemble and sets up the fields at `t = 0`: `E1` from the
/// Poisson equation and `E2 = B3 = 0`, except for Weibel where `E = 0` and
/// `B3 = alpha_B sin(k x_j)`. The ion background is `sum_p w_p / L`.
pub fn initial_fields(cfg: &SimConfig, grid: &Grid, particles: &ParticleEnsemble) -> Result<FieldState> {
    let rho_ion = particles.total_weight() / cfg.length;
    let mut fields = FieldState::zeros(grid.cells, cfg.dv, rho_ion);
    let (rho, j) = deposit(particles, grid);
    fields.rho = rho;
    fields.j = j;
    let p = &cfg.preset_params;
    match cfg.preset {
        Preset::Weibel => {
            fields.b3 = grid.centers().iter().map(|&x| p.alpha_b * (p.k * x).sin()).collect();
        }
        _ => {
            fields.e1 = poisson_solve(&fields.rho, rho_ion, grid)?;
        }
    }
    Ok(fields)
}
