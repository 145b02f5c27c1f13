//! The spatial hat kernel and the Landau collision kernel.

use crate::error::{Error, Result};

/// Below this speed difference the collision kernel is taken to be zero.
pub const COINCIDENT_VELOCITY: f64 = 1e-12;

/// Degree-1 B-spline `psi(r) = (1/eta) (1 - |r|/eta)_+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatKernel {
    eta: f64,
    inv_eta: f64,
}

impl HatKernel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!("hat kernel width must be positive, got {eta}")));
        }
        Ok(HatKernel {
            eta,
            inv_eta: 1.0 / eta,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let t = 1.0 - r.abs() * self.inv_eta;
        if t > 0.0 {
            t * self.inv_eta
        } else {
            0.0
        }
    }

    /// Kernel summed over all periodic images of a displacement on a domain
    /// of length `length >= eta`. Only the two nearest images can reach the
    /// support, and the far one only when the domain is a single cell wide.
    #[inline]
    pub fn eval_periodic(&self, d: f64, length: f64) -> f64 {
        let r = crate::ensemble::min_image(d, length).abs();
        self.eval(r) + self.eval(length - r)
    }
}

/// `A(z) = |z|^(gamma+2) (I - z z^T / |z|^2)` with `gamma = -dv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LandauKernel {
    dv: usize,
}

impl LandauKernel {
    pub fn new(dv: usize) -> Result<Self> {
        if dv != 2 && dv != 3 {
            return Err(Error::Config(format!("velocity dimension must be 2 or 3, got {dv}")));
        }
        Ok(LandauKernel { dv })
    }

    pub fn dv(&self) -> usize {
        self.dv
    }

    /// Coulomb exponent.
    pub fn gamma(&self) -> f64 {
        -(self.dv as f64)
    }

    /// Dense `dv x dv` matrix, row-major.
    pub fn matrix(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dv;
        let mut a = vec![0.0; d * d];
        let z2: f64 = z.iter().map(|c| c * c).sum();
        let norm = z2.sqrt();
        if norm < COINCIDENT_VELOCITY {
            return a;
        }
        let scale = prefactor(d, norm);
        for i in 0..d {
            for j in 0..d {
                let id = if i == j { 1.0 } else { 0.0 };
                a[i * d + j] = scale * (id - z[i] * z[j] / z2);
            }
        }
        a
    }

    /// `A(z) y` without forming the matrix.
    pub fn apply(&self, z: &[f64], y: &[f64], out: &mut [f64]) {
        match self.dv {
            2 => {
                let r = apply_fixed::<2>(z.try_into().unwrap(), y.try_into().unwrap());
                out.copy_from_slice(&r);
            }
            _ => {
                let r = apply_fixed::<3>(z.try_into().unwrap(), y.try_into().unwrap());
                out.copy_from_slice(&r);
            }
        }
    }
}

/// `|z|^(gamma + 2)` with `gamma = -D`.
#[inline(always)]
fn prefactor(d: usize, norm: f64) -> f64 {
    match d {
        2 => 1.0,
        3 => 1.0 / norm,
        _ => norm.powi(2 - d as i32),
    }
}

/// Fixed-dimension `A(z) y`, the hot path of the collision sum.
#[inline(always)]
pub(crate) fn apply_fixed<const D: usize>(z: &[f64; D], y: &[f64; D]) -> [f64; D] {
    let mut z2 = 0.0;
    let mut zy = 0.0;
    for i in 0..D {
        z2 += z[i] * z[i];
        zy += z[i] * y[i];
    }
    let mut out = [0.0; D];
    if z2 < COINCIDENT_VELOCITY * COINCIDENT_VELOCITY {
        return out;
    }
    let c = zy / z2;
    let scale = if D == 2 { 1.0 } else { prefactor(D, z2.sqrt()) };
    for i in 0..D {
        out[i] = scale * (y[i] - c * z[i]);
    }
    out
}
