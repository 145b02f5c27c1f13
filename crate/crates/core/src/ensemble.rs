//! Weighted particle ensemble on the periodic interval `[0, L)`.

use crate::error::{Error, Result};

/// Reduces `x` into `[0, L)`.
pub fn wrap_position(x: f64, length: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinitePosition(x));
    }
    let mut r = x.rem_euclid(length);
    // rem_euclid can round up to exactly L for tiny negative x.
    if r >= length {
        r -= length;
    }
    Ok(r)
}

/// Shortest signed displacement between two points of the periodic domain,
/// in `[-L/2, L/2]`.
#[inline]
pub fn min_image(d: f64, length: f64) -> f64 {
    let half = 0.5 * length;
    if d > half {
        d - length
    } else if d < -half {
        d + length
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub length: f64,
    pub dv: usize,
    pub x: Vec<f64>,
    /// Velocities, row-major `n x dv`.
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(length: f64, dv: usize, x: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.len() != w.len() || v.len() != x.len() * dv {
            return Err(Error::Shape(format!(
                "x has {} entries, w {}, v {} (dv = {dv})",
                x.len(),
                w.len(),
                v.len()
            )));
        }
        Ok(ParticleEnsemble {
            length,
            dv,
            x,
            v,
            w,
        })
    }

    /// Equal weights `L / n`.
    pub fn with_equal_weights(length: f64, dv: usize, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = x.len();
        let w = vec![length / n as f64; n];
        ParticleEnsemble::new(length, dv, x, v, w)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    #[inline]
    pub fn velocity(&self, p: usize) -> &[f64] {
        &self.v[p * self.dv..(p + 1) * self.dv]
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    /// `sum_p w_p v_p`.
    pub fn momentum(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dv];
        for (vp, &wp) in self.v.chunks_exact(self.dv).zip(&self.w) {
            for (mi, vi) in m.iter_mut().zip(vp) {
                *mi += wp * vi;
            }
        }
        m
    }

    /// `1/2 sum_p w_p |v_p|^2`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .v
            .chunks_exact(self.dv)
            .zip(&self.w)
            .map(|(vp, wp)| wp * vp.iter().map(|a| a * a).sum::<f64>())
            .sum::<f64>()
    }

    /// Weighted per-component mean velocity and variance (temperature).
    pub fn velocity_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let total = self.total_weight();
        let mean: Vec<f64> = self.momentum().into_iter().map(|m| m / total).collect();
        let mut var = vec![0.0; self.dv];
        for (vp, &wp) in self.v.chunks_exact(self.dv).zip(&self.w) {
            for i in 0..self.dv {
                let d = vp[i] - mean[i];
                var[i] += wp * d * d;
            }
        }
        var.iter_mut().for_each(|t| *t /= total);
        (mean, var)
    }

    /// Wraps every position into `[0, L)`.
    pub fn wrap_all(&mut self) -> Result<()> {
        let length = self.length;
        for x in &mut self.x {
            *x = wrap_position(*x, length)?;
        }
        Ok(())
    }

    /// Positions in range, all entries finite.
    pub fn check_invariants(&self) -> Result<()> {
        for (p, &x) in self.x.iter().enumerate() {
            if !(x.is_finite() && (0.0..self.length).contains(&x)) {
                return Err(Error::Shape(format!(
                    "particle {p} position {x} outside [0, {})",
                    self.length
                )));
            }
        }
        if let Some(p) = self.v.iter().position(|a| !a.is_finite()) {
            return Err(Error::Shape(format!(
                "particle {} has a non-finite velocity",
                p / self.dv
            )));
        }
        if let Some(p) = self.w.iter().position(|a| !a.is_finite()) {
            return Err(Error::Shape(format!("particle {p} has a non-finite weight")));
        }
        Ok(())
    }
}
