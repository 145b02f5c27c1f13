//! Analytic reference values: the global Maxwellian equilibria fixed by the
//! conservation laws, the exact initial scores of the presets, a histogram
//! distance to a Maxwellian, and a damping-rate fit for field traces.

use crate::config::{Preset, PresetParams};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub t_inf: f64,
    pub u_inf: Vec<f64>,
    pub b_inf: [f64; 3],
    pub rho_ion: f64,
}

/// Electromagnetic case: zero drift, `B_inf` the mean initial field, and
/// `T_inf = 2 / (dv rho_ion |Omega|) (E_0 - |B_inf|^2 |Omega| / 2)`.
pub fn vml_equilibrium(
    initial_energy: f64,
    b_mean: [f64; 3],
    rho_ion: f64,
    volume: f64,
    dv: usize,
) -> Result<EquilibriumState> {
    let b2: f64 = b_mean.iter().map(|b| b * b).sum();
    let t_inf = 2.0 / (dv as f64 * rho_ion * volume) * (initial_energy - 0.5 * b2 * volume);
    check_temperature(t_inf)?;
    Ok(EquilibriumState {
        t_inf,
        u_inf: vec![0.0; dv],
        b_inf: b_mean,
        rho_ion,
    })
}

/// Electrostatic case: `u_inf = P / (rho_ion |Omega|)` and
/// `T_inf = 2 / (dv rho_ion |Omega|) (E_0 - rho_ion |u_inf|^2 |Omega| / 2)`.
pub fn vpl_equilibrium(
    initial_energy: f64,
    momentum: &[f64],
    rho_ion: f64,
    volume: f64,
) -> Result<EquilibriumState> {
    let dv = momentum.len();
    let mass = rho_ion * volume;
    let u_inf: Vec<f64> = momentum.iter().map(|p| p / mass).collect();
    let u2: f64 = u_inf.iter().map(|u| u * u).sum();
    let t_inf = 2.0 / (dv as f64 * mass) * (initial_energy - 0.5 * mass * u2);
    check_temperature(t_inf)?;
    Ok(EquilibriumState {
        t_inf,
        u_inf,
        b_inf: [0.0; 3],
        rho_ion,
    })
}

fn check_temperature(t_inf: f64) -> Result<()> {
    if t_inf.is_finite() && t_inf > 0.0 {
        Ok(())
    } else {
        Err(Error::InconsistentEnergy { t_inf })
    }
}

/// Score of a 1D equal-weight mixture of `N(+-c, var)`:
/// `(-v + c tanh(c v / var)) / var`, the same as the ratio of Gaussian
/// densities but free of underflow.
fn mixture_score(v: f64, c: f64, var: f64) -> f64 {
    (-v + c * (c * v / var).tanh()) / var
}

/// `grad_v log f_0` of a preset's initial condition at velocity `v`. The
/// spatial factor does not depend on `v` and drops out.
pub fn analytic_initial_score(preset: Preset, params: &PresetParams, v: &[f64]) -> Vec<f64> {
    match preset {
        Preset::LandauDamping | Preset::Custom => v.iter().map(|x| -x).collect(),
        Preset::TwoStream => v
            .iter()
            .enumerate()
            .map(|(i, &x)| if i == 0 { mixture_score(x, params.c, 1.0) } else { -x })
            .collect(),
        Preset::Weibel => {
            let var = 0.5 * params.beta;
            v.iter()
                .enumerate()
                .map(|(i, &x)| if i == 1 { mixture_score(x, params.c, var) } else { -x / var })
                .collect()
        }
    }
}

/// [`analytic_initial_score`] for every particle, row-major `n x dv`.
pub fn analytic_scores(preset: Preset, params: &PresetParams, particles: &ParticleEnsemble) -> Vec<f64> {
    particles
        .v
        .chunks_exact(particles.dv)
        .flat_map(|v| analytic_initial_score(preset, params, v))
        .collect()
}

/// Default histogram window `u +- 6 sqrt(T)`.
pub fn default_range(t: f64, u: f64) -> (f64, f64) {
    let half = 6.0 * t.sqrt();
    (u - half, u + half)
}

/// `L2` distance between the weighted histogram density of one velocity
/// component and the density of `N(u, T)` at the bin centers:
/// `(sum_b dv (f_b - g_b)^2)^(1/2)`. The histogram is normalized by the
/// total weight, so mass outside the window counts as missing.
pub fn maxwellian_l2_distance(
    particles: &ParticleEnsemble,
    component: usize,
    t: f64,
    u: f64,
    bins: usize,
    range: (f64, f64),
) -> Result<f64> {
    if particles.is_empty() {
        return Err(Error::EmptyParticles);
    }
    if bins < 16 || component >= particles.dv || !(t > 0.0) || !(range.1 > range.0) {
        return Err(Error::Config(format!(
            "histogram needs >= 16 bins, a valid component, T > 0 and a non-empty range \
             (bins = {bins}, component = {component}, T = {t}, range = {range:?})"
        )));
    }
    let (lo, hi) = range;
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    for (v, &w) in particles.v.chunks_exact(particles.dv).zip(&particles.w) {
        let b = ((v[component] - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            mass[b as usize] += w;
        }
    }
    let total = particles.total_weight();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let sum: f64 = mass
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let center = lo + (b as f64 + 0.5) * width;
            let g = norm * (-(center - u).powi(2) / (2.0 * t)).exp();
            let f = m / (total * width);
            width * (f - g) * (f - g)
        })
        .sum();
    Ok(sum.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampingFit {
    /// Slope of the log-peak envelope: negative for damping, positive for
    /// growth.
    pub rate: f64,
    /// Time span the fit covered.
    pub window: (f64, f64),
    /// Number of points entering the fit.
    pub points: usize,
}

/// Fits the exponential rate of `E_l2(t)` by least squares on the local
/// maxima of `log E_l2` inside `window` (whole series if `None`).
///
/// A series without oscillation inside the window (monotone, including
/// constant) is fitted on all its points, which yields the growth or decay
/// rate of a pure exponential. Otherwise at least three peaks are required.
pub fn fit_damping_rate(times: &[f64], e_l2: &[f64], window: Option<(f64, f64)>) -> Result<DampingFit> {
    if times.len() != e_l2.len() {
        return Err(Error::Shape(format!("{} times for {} values", times.len(), e_l2.len())));
    }
    let (t0, t1) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(e_l2)
        .filter(|(&t, _)| t >= t0 && t <= t1)
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    if t.len() < 3 {
        return Err(Error::InsufficientOscillations { found: 0 });
    }
    let rising = y.windows(2).all(|w| w[1] >= w[0]);
    let falling = y.windows(2).all(|w| w[1] <= w[0]);
    let (pt, py): (Vec<f64>, Vec<f64>) = if rising || falling {
        (t.clone(), y.clone())
    } else {
        let last = y.len() - 1;
        (0..last)
            // a plateau counts once, at its first sample
            .filter(|&i| {
                let rises_into = if i == 0 { y[0] > y[1] } else { y[i] > y[i - 1] };
                y[i].is_finite() && rises_into && y[i] >= y[i + 1]
            })
            .map(|i| (t[i], y[i]))
            .unzip()
    };
    if !(rising || falling) && pt.len() < 3 {
        return Err(Error::InsufficientOscillations { found: pt.len() });
    }
    Ok(DampingFit {
        rate: least_squares_slope(&pt, &py),
        window: (t[0], t[t.len() - 1]),
        points: pt.len(),
    })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
