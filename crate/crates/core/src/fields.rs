//! Uniform periodic grid and the grid-resident field state.

use crate::error::{Error, Result};
use crate::kernels::HatKernel;

/// `M` cells of width `eta = L / M` with centers `x_j = (j + 1/2) eta`
/// (zero-based `j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub cells: usize,
    pub eta: f64,
}

impl Grid {
    pub fn new(length: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!(
                "grid needs L > 0 and M >= 1, got L = {length}, M = {cells}"
            )));
        }
        Ok(Grid {
            length,
            cells,
            eta: length / cells as f64,
        })
    }

    #[inline]
    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.eta
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|j| self.center(j)).collect()
    }

    /// Cell containing `x` in `[0, L)`: `floor(x / eta)`.
    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        ((x / self.eta) as usize).min(self.cells - 1)
    }

    #[inline]
    pub fn next(&self, j: usize) -> usize {
        if j + 1 == self.cells {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub fn prev(&self, j: usize) -> usize {
        if j == 0 {
            self.cells - 1
        } else {
            j - 1
        }
    }

    pub fn hat(&self) -> HatKernel {
        HatKernel::new(self.eta).expect("grid spacing is positive")
    }

    /// The left grid point of the hat stencil of `x` and the weight of the
    /// right one: `x` receives `(1 - f)` of node `j` and `f` of node `j + 1`.
    #[inline]
    pub fn stencil(&self, x: f64) -> (usize, usize, f64) {
        let s = x / self.eta - 0.5;
        let fl = s.floor();
        let f = s - fl;
        let m = self.cells as i64;
        let left = (fl as i64).rem_euclid(m) as usize;
        (left, self.next(left), f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub b3: Vec<f64>,
    pub rho: Vec<f64>,
    /// Current density, row-major `dv x M`.
    pub j: Vec<f64>,
    pub rho_ion: f64,
    pub dv: usize,
}

impl FieldState {
    pub fn zeros(cells: usize, dv: usize, rho_ion: f64) -> Self {
        FieldState {
            e1: vec![0.0; cells],
            e2: vec![0.0; cells],
            b3: vec![0.0; cells],
            rho: vec![0.0; cells],
            j: vec![0.0; cells * dv],
            rho_ion,
            dv,
        }
    }

    pub fn cells(&self) -> usize {
        self.e1.len()
    }

    /// Row `i` of the current density.
    pub fn current(&self, i: usize) -> &[f64] {
        let m = self.cells();
        &self.j[i * m..(i + 1) * m]
    }

    pub fn electric_energy(&self, eta: f64) -> f64 {
        0.5 * eta
            * self
                .e1
                .iter()
                .zip(&self.e2)
                .map(|(a, b)| a * a + b * b)
                .sum::<f64>()
    }

    pub fn magnetic_energy(&self, eta: f64) -> f64 {
        0.5 * eta * self.b3.iter().map(|b| b * b).sum::<f64>()
    }

    /// `(eta sum_j |E_j|^2)^(1/2)`.
    pub fn electric_l2(&self, eta: f64) -> f64 {
        (2.0 * self.electric_energy(eta)).sqrt()
    }

    /// Discrete spatial mean of `B3`.
    pub fn mean_b3(&self) -> f64 {
        self.b3.iter().sum::<f64>() / self.cells() as f64
    }

    pub fn is_finite(&self) -> bool {
        [&self.e1, &self.e2, &self.b3, &self.rho, &self.j]
            .iter()
            .all(|a| a.iter().all(|x| x.is_finite()))
    }
}
