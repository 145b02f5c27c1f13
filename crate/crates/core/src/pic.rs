//! Particle-grid transfer, particle pushes and the field solvers.
//!
//! Deposition and interpolation use the periodic hat kernel on the cell
//! centers; because the hat is the linear B-spline, both reduce to
//! cloud-in-cell weights on the two centers bracketing each particle, which
//! is what is computed here.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::ensemble::{wrap_position, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::fields::{FieldState, Grid};

/// Particles per parallel work item. Fixed so that reductions happen in the
/// same order whatever the thread count.
pub(crate) const CHUNK: usize = 1 << 14;

/// Charge and current density on the grid:
/// `rho_j = sum_p w_p psi(x_j - x_p)`, `J_ij = sum_p w_p v_ip psi(x_j - x_p)`.
pub fn deposit(particles: &ParticleEnsemble, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let m = grid.cells;
    let dv = particles.dv;
    let inv_eta = 1.0 / grid.eta;
    let partials: Vec<Vec<f64>> = particles
        .x
        .par_chunks(CHUNK)
        .zip(particles.v.par_chunks(CHUNK * dv))
        .zip(particles.w.par_chunks(CHUNK))
        .map(|((xs, vs), ws)| {
            // rho followed by the dv current rows
            let mut acc = vec![0.0; m * (1 + dv)];
            for ((&x, v), &w) in xs.iter().zip(vs.chunks_exact(dv)).zip(ws) {
                let (l, r, f) = grid.stencil(x);
                let wl = w * (1.0 - f) * inv_eta;
                let wr = w * f * inv_eta;
                acc[l] += wl;
                acc[r] += wr;
                for (i, vi) in v.iter().enumerate() {
                    let row = (1 + i) * m;
                    acc[row + l] += wl * vi;
                    acc[row + r] += wr * vi;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; m * (1 + dv)];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let j = total.split_off(m);
    (total, j)
}

/// Deposits into `fields.rho` and `fields.j`.
pub fn deposit_into(particles: &ParticleEnsemble, grid: &Grid, fields: &mut FieldState) {
    let (rho, j) = deposit(particles, grid);
    fields.rho = rho;
    fields.j = j;
}

/// Fields seen by each particle. `E3` and `B1`, `B2` vanish identically in
/// the reduced model and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleFields {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub b3: Vec<f64>,
}

/// `F(x_p) = eta sum_j psi(x_p - x_j) F_j` for `E1`, `E2`, `B3`.
pub fn interpolate_fields(
    particles: &ParticleEnsemble,
    fields: &FieldState,
    grid: &Grid,
) -> ParticleFields {
    let n = particles.len();
    let mut out = ParticleFields {
        e1: vec![0.0; n],
        e2: vec![0.0; n],
        b3: vec![0.0; n],
    };
    out.e1
        .par_chunks_mut(CHUNK)
        .zip(out.e2.par_chunks_mut(CHUNK))
        .zip(out.b3.par_chunks_mut(CHUNK))
        .zip(particles.x.par_chunks(CHUNK))
        .for_each(|(((e1, e2), b3), xs)| {
            for (p, &x) in xs.iter().enumerate() {
                let (l, r, f) = grid.stencil(x);
                let g = 1.0 - f;
                e1[p] = g * fields.e1[l] + f * fields.e1[r];
                e2[p] = g * fields.e2[l] + f * fields.e2[r];
                b3[p] = g * fields.b3[l] + f * fields.b3[r];
            }
        });
    out
}

/// Forward-Euler `v += dt (E + v x B)` with `E = (E1, E2, 0)` and
/// `B = (0, 0, B3)`.
pub fn lorentz_push(particles: &mut ParticleEnsemble, at: &ParticleFields, dt: f64) {
    let dv = particles.dv;
    particles
        .v
        .par_chunks_mut(CHUNK * dv)
        .enumerate()
        .for_each(|(c, vs)| {
            let base = c * CHUNK;
            for (k, v) in vs.chunks_exact_mut(dv).enumerate() {
                let p = base + k;
                let (v1, v2) = (v[0], v[1]);
                v[0] = v1 + dt * (at.e1[p] + v2 * at.b3[p]);
                v[1] = v2 + dt * (at.e2[p] - v1 * at.b3[p]);
            }
        });
}

/// `x += dt v1`, wrapped into `[0, L)`.
pub fn advance_positions(particles: &mut ParticleEnsemble, dt: f64) -> Result<()> {
    let dv = particles.dv;
    let length = particles.length;
    let v = &particles.v;
    particles
        .x
        .par_chunks_mut(CHUNK)
        .enumerate()
        .try_for_each(|(c, xs)| {
            let base = c * CHUNK;
            for (k, x) in xs.iter_mut().enumerate() {
                *x = wrap_position(*x + dt * v[(base + k) * dv], length)?;
            }
            Ok(())
        })
}

/// One step of the reduced Maxwell system on the collocated grid, applied in
/// sequence: `E1 -= dt J1`; `E2 -= dt (D B3 + J2)` with the current `B3`;
/// then `B3 -= dt D E2` with the `E2` just computed. `D` is the centered
/// difference.
pub fn maxwell_step(fields: &mut FieldState, dt: f64, grid: &Grid) {
    let m = grid.cells;
    let h = 0.5 / grid.eta;
    for j in 0..m {
        fields.e1[j] -= dt * fields.j[j];
    }
    let j2 = &fields.j[m..2 * m];
    let b3 = &fields.b3;
    let e2_new: Vec<f64> = (0..m)
        .map(|j| fields.e2[j] - dt * ((b3[grid.next(j)] - b3[grid.prev(j)]) * h + j2[j]))
        .collect();
    for j in 0..m {
        fields.b3[j] -= dt * (e2_new[grid.next(j)] - e2_new[grid.prev(j)]) * h;
    }
    fields.e2 = e2_new;
}

/// Electrostatic Ampere law `E1 -= dt (J1 - <J1>)`.
///
/// An electrostatic field `E = -phi'` on a periodic domain has zero mean, so
/// only the fluctuating part of the current drives it. Letting the uniform
/// part through would set up a spurious uniform field that trades momentum
/// with the particles. `E2` and `B3` are not touched.
pub fn vpl_field_step(fields: &mut FieldState, dt: f64) {
    let m = fields.cells();
    let j1 = &fields.j[..m];
    let mean = j1.iter().sum::<f64>() / m as f64;
    for (e, &j) in fields.e1.iter_mut().zip(j1) {
        *e -= dt * (j - mean);
    }
}

/// Periodic zero-mean solution of `-phi'' = rho - rho_ion`, returned as
/// `E1 = -phi'`. Both derivatives are taken spectrally; the Nyquist mode of
/// the field is dropped since its derivative is not representable.
pub fn poisson_solve(rho: &[f64], rho_ion: f64, grid: &Grid) -> Result<Vec<f64>> {
    let m = grid.cells;
    let net: f64 = rho.iter().map(|r| (r - rho_ion) * grid.eta).sum();
    let scale = rho.iter().map(|r| r.abs()).sum::<f64>() * grid.eta;
    if net.abs() > 1e-8 * scale.max(1.0) {
        return Err(Error::NonNeutral { net_charge: net });
    }
    let mut buf: Vec<Complex<f64>> = rho.iter().map(|r| Complex::new(r - rho_ion, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for (i, c) in buf.iter_mut().enumerate() {
        let signed = if i <= m / 2 { i as i64 } else { i as i64 - m as i64 };
        if signed == 0 || (m.is_multiple_of(2) && i == m / 2) {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let kk = 2.0 * PI * signed as f64 / grid.length;
        // E_hat = -i k phi_hat = -i s_hat / k
        *c = Complex::new(c.im, -c.re) / kk;
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / m as f64).collect())
}

/// Largest pointwise violation of the discrete Gauss law
/// `D E1 = rho - rho_ion` (centered differences). Monitored, not corrected.
pub fn gauss_residual(fields: &FieldState, grid: &Grid) -> f64 {
    let h = 0.5 / grid.eta;
    (0..grid.cells)
        .map(|j| {
            let div = (fields.e1[grid.next(j)] - fields.e1[grid.prev(j)]) * h;
            (div - (fields.rho[j] - fields.rho_ion)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: f64, v: &[f64], w: f64, length: f64) -> ParticleEnsemble {
        ParticleEnsemble::new(length, v.len(), vec![x], v.to_vec(), vec![w]).unwrap()
    }

    #[test]
    fn deposit_at_center_and_midpoint() {
        let g = Grid::new(4.0, 8).unwrap();
        let (rho, j) = deposit(&one(g.center(3), &[2.0, 0.0], 1.0, 4.0), &g);
        assert!((rho[3] - 1.0 / g.eta).abs() < 1e-15);
        assert_eq!(rho.iter().filter(|&&r| r != 0.0).count(), 1);
        assert!((j[3] - 2.0 / g.eta).abs() < 1e-15);
        let (rho, _) = deposit(&one(4.0 * g.eta, &[0.0, 0.0], 1.0, 4.0), &g);
        assert!((rho[3] - 0.5 / g.eta).abs() < 1e-15);
        assert!((rho[4] - 0.5 / g.eta).abs() < 1e-15);
    }

    #[test]
    fn uniform_lattice_deposits_unit_density() {
        let (length, m) = (4.0 * PI, 16);
        let g = Grid::new(length, m).unwrap();
        let n = 10 * m;
        let x: Vec<f64> = (0..n).map(|p| (p as f64 + 0.5) * length / n as f64).collect();
        let e = ParticleEnsemble::with_equal_weights(length, 2, x, vec![0.0; 2 * n]).unwrap();
        let (rho, _) = deposit(&e, &g);
        // brute-force periodic hat sum
        let hat = g.hat();
        for j in 0..m {
            let brute: f64 = e
                .x
                .iter()
                .zip(&e.w)
                .map(|(&x, &w)| w * hat.eval_periodic(g.center(j) - x, length))
                .sum();
            assert!((rho[j] - brute).abs() < 1e-12);
            assert!((rho[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = Grid::new(4.0, 4).unwrap();
        let mut f = FieldState::zeros(4, 3, 1.0);
        f.e1 = vec![3.0; 4];
        f.e2 = vec![1.0, 2.0, 3.0, 4.0];
        let e = ParticleEnsemble::with_equal_weights(4.0, 3, vec![0.1, 1.5, 2.0], vec![0.0; 9])
            .unwrap();
        let at = interpolate_fields(&e, &f, &g);
        assert!(at.e1.iter().all(|&v| (v - 3.0).abs() < 1e-15));
        assert_eq!(at.e2[1], 2.0);
        assert!((at.e2[2] - 2.5).abs() < 1e-15);
        // x = 0.1 sits between the last center (3.5, wrapped) and the first
        assert!((at.e2[0] - (0.4 * 4.0 + 0.6 * 1.0)).abs() < 1e-14);
    }

    #[test]
    fn lorentz_push_examples() {
        let mut e = one(0.0, &[1.0, 0.0, 0.0], 1.0, 1.0);
        let at = ParticleFields {
            e1: vec![0.0],
            e2: vec![0.0],
            b3: vec![1.0],
        };
        lorentz_push(&mut e, &at, 0.1);
        assert_eq!(e.v, vec![1.0, -0.1, 0.0]);

        let mut e = one(0.0, &[0.0, 2.0, 0.0], 1.0, 1.0);
        let at = ParticleFields {
            e1: vec![1.0],
            e2: vec![0.0],
            b3: vec![0.5],
        };
        lorentz_push(&mut e, &at, 0.2);
        assert!((e.v[0] - 0.4).abs() < 1e-15);
        assert_eq!(&e.v[1..], &[2.0, 0.0]);

        let mut e = one(0.0, &[0.3, -0.7], 1.0, 1.0);
        let zero = ParticleFields {
            e1: vec![0.0],
            e2: vec![0.0],
            b3: vec![0.0],
        };
        lorentz_push(&mut e, &zero, 0.5);
        assert_eq!(e.v, vec![0.3, -0.7]);
    }

    #[test]
    fn advance_examples() {
        let mut e = one(1.0, &[2.0, 0.0], 1.0, 10.0);
        advance_positions(&mut e, 0.05).unwrap();
        assert!((e.x[0] - 1.1).abs() < 1e-15);
        let eps = 1e-3;
        let mut e = one(10.0 - eps, &[2.0 * eps / 0.1, 0.0], 1.0, 10.0);
        advance_positions(&mut e, 0.1).unwrap();
        assert!((e.x[0] - eps).abs() < 1e-12);
        let mut e = one(f64::MAX, &[f64::MAX, 0.0], 1.0, 10.0);
        assert!(advance_positions(&mut e, 10.0).is_err());
    }

    #[test]
    fn maxwell_constant_fields_are_steady() {
        let g = Grid::new(2.0, 8).unwrap();
        let mut f = FieldState::zeros(8, 3, 1.0);
        f.b3 = vec![0.7; 8];
        let before = f.clone();
        maxwell_step(&mut f, 0.1, &g);
        assert_eq!(f, before);
        f.j[..8].fill(1.0);
        maxwell_step(&mut f, 0.1, &g);
        assert!(f.e1.iter().all(|&e| (e + 0.1).abs() < 1e-15));
    }

    #[test]
    fn maxwell_single_mode_faraday() {
        let (length, m, dt) = (10.0 * PI, 50, 0.1);
        let g = Grid::new(length, m).unwrap();
        let k = 0.2;
        let mut f = FieldState::zeros(m, 3, 1.0);
        f.e2 = g.centers().iter().map(|&x| (k * x).sin()).collect();
        maxwell_step(&mut f, dt, &g);
        for (j, x) in g.centers().into_iter().enumerate() {
            let expect = -dt * (k * g.eta).sin() / g.eta * (k * x).cos();
            assert!((f.b3[j] - expect).abs() < 1e-13, "{j}");
        }
        let mean: f64 = f.b3.iter().sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn poisson_single_mode() {
        let (length, m) = (4.0 * PI, 64);
        let g = Grid::new(length, m).unwrap();
        let (alpha, k) = (0.1, 0.5);
        let rho: Vec<f64> = g.centers().iter().map(|&x| 1.0 + alpha * (k * x).cos()).collect();
        let e1 = poisson_solve(&rho, 1.0, &g).unwrap();
        for (j, x) in g.centers().into_iter().enumerate() {
            assert!((e1[j] - alpha / k * (k * x).sin()).abs() < 1e-13);
        }
        let energy = 0.5 * g.eta * e1.iter().map(|e| e * e).sum::<f64>();
        assert!((energy - alpha * alpha * length / (4.0 * k * k)).abs() < 1e-12);
    }

    #[test]
    fn poisson_neutral_uniform_and_non_neutral() {
        let g = Grid::new(3.0, 7).unwrap();
        let e = poisson_solve(&[2.0; 7], 2.0, &g).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-15));
        let err = poisson_solve(&[2.0; 7], 1.0, &g).unwrap_err();
        assert!(err.to_string().contains("non-neutral plasma"));
    }

    #[test]
    fn vpl_step_drives_only_fluctuations() {
        let m = 6;
        let mut f = FieldState::zeros(m, 2, 1.0);
        f.e1 = vec![0.3, -0.1, 0.2, 0.0, -0.4, 0.0];
        let before = f.e1.clone();
        vpl_field_step(&mut f, 0.05);
        assert_eq!(f.e1, before);
        // uniform current is the mean; the mean of E1 never moves
        f.j[..m].copy_from_slice(&[2.5, 1.5, 2.0, 2.0, 3.0, 1.0]);
        vpl_field_step(&mut f, 0.05);
        let mean_before: f64 = before.iter().sum();
        let mean_after: f64 = f.e1.iter().sum();
        assert!((mean_before - mean_after).abs() < 1e-15);
        assert!((f.e1[0] - (0.3 - 0.05 * 0.5)).abs() < 1e-15);
        assert!(f.e2.iter().chain(&f.b3).all(|&v| v == 0.0));
    }
}
