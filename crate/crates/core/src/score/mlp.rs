//! Two-layer softsign MLP `s(x, v) = W2 softsign(W1 [x; v] + b1) + b2` with
//! closed-form velocity Jacobian, divergence and parameter gradients.
//!
//! Parameters live in one flat vector in the order `W1` (`H x (1 + dv)`,
//! row-major), `b1`, `W2` (`dv x H`, row-major), `b2`, which is also the
//! checkpoint layout.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"SBTM";
const CHECKPOINT_VERSION: u32 = 1;

/// Particles per gradient chunk. Chunk partial sums are added in index
/// order, so the result does not depend on the thread count.
const GRAD_CHUNK: usize = 512;

#[inline(always)]
fn softsign(u: f64) -> f64 {
    u / (1.0 + u.abs())
}

#[inline(always)]
fn softsign_d1(u: f64) -> f64 {
    let a = 1.0 + u.abs();
    1.0 / (a * a)
}

#[inline(always)]
fn softsign_d2(u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let a = 1.0 + u.abs();
    -2.0 * u.signum() / (a * a * a)
}

/// Divergence term of the implicit score-matching loss.
#[derive(Debug, Clone, Copy)]
pub enum Divergence<'a> {
    Exact,
    /// One Rademacher probe shared by all particles.
    Shared(&'a [f64]),
    /// One probe per particle, row-major `n x dv`.
    PerParticle(&'a [f64]),
}

/// Draws a Rademacher vector of length `len`.
pub fn rademacher<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpScoreNet {
    dv: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl MlpScoreNet {
    pub fn param_count(dv: usize, hidden: usize) -> usize {
        (1 + dv) * hidden + hidden + hidden * dv + dv
    }

    pub fn zeros(dv: usize, hidden: usize) -> Self {
        MlpScoreNet {
            dv,
            hidden,
            params: vec![0.0; Self::param_count(dv, hidden)],
        }
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng>(dv: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(dv, hidden);
        let a1 = (6.0 / (1 + dv + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + dv) as f64).sqrt();
        let (w1, w2) = (net.w1_range(), net.w2_range());
        for p in &mut net.params[w1] {
            *p = rng.random_range(-a1..a1);
        }
        for p in &mut net.params[w2] {
            *p = rng.random_range(-a2..a2);
        }
        net
    }

    pub fn from_params(dv: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::param_count(dv, hidden) {
            return Err(Error::Shape(format!(
                "{} parameters for H = {hidden}, dv = {dv}; expected {}",
                params.len(),
                Self::param_count(dv, hidden)
            )));
        }
        Ok(MlpScoreNet { dv, hidden, params })
    }

    pub fn dv(&self) -> usize {
        self.dv
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * (1 + self.dv)
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * (1 + self.dv);
        s..s + self.hidden
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * (2 + self.dv);
        s..s + self.dv * self.hidden
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * (2 + 2 * self.dv);
        s..s + self.dv
    }

    fn parts(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (
            &self.params[self.w1_range()],
            &self.params[self.b1_range()],
            &self.params[self.w2_range()],
            &self.params[self.b2_range()],
        )
    }

    /// Hidden pre-activations `u = W1 [x; v] + b1`.
    fn preact(&self, x: f64, v: &[f64], u: &mut [f64]) {
        let (w1, b1, _, _) = self.parts();
        let cols = 1 + self.dv;
        for h in 0..self.hidden {
            let row = &w1[h * cols..(h + 1) * cols];
            let mut acc = b1[h] + row[0] * x;
            for i in 0..self.dv {
                acc += row[1 + i] * v[i];
            }
            u[h] = acc;
        }
    }

    pub fn forward(&self, x: f64, v: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.hidden];
        self.preact(x, v, &mut u);
        let (_, _, w2, b2) = self.parts();
        (0..self.dv)
            .map(|i| {
                b2[i]
                    + w2[i * self.hidden..(i + 1) * self.hidden]
                        .iter()
                        .zip(&u)
                        .map(|(w, &uh)| w * softsign(uh))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Evaluates the network on many inputs: `xs[p]`, `vs[p * dv..]`.
    pub fn forward_batch(&self, xs: &[f64], vs: &[f64]) -> Vec<f64> {
        let dv = self.dv;
        let rows: Vec<Vec<f64>> = xs
            .par_chunks(GRAD_CHUNK)
            .zip(vs.par_chunks(GRAD_CHUNK * dv))
            .map(|(xc, vc)| {
                let mut out = Vec::with_capacity(xc.len() * dv);
                for (x, v) in xc.iter().zip(vc.chunks_exact(dv)) {
                    out.extend(self.forward(*x, v));
                }
                out
            })
            .collect();
        rows.concat()
    }

    /// Velocity Jacobian `d s_i / d v_k`, row-major `dv x dv`.
    pub fn jacobian(&self, x: f64, v: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.hidden];
        self.preact(x, v, &mut u);
        let (w1, _, w2, _) = self.parts();
        let (d, cols) = (self.dv, 1 + self.dv);
        let mut jac = vec![0.0; d * d];
        for h in 0..self.hidden {
            let g = softsign_d1(u[h]);
            for i in 0..d {
                let a = w2[i * self.hidden + h] * g;
                for k in 0..d {
                    jac[i * d + k] += a * w1[h * cols + 1 + k];
                }
            }
        }
        jac
    }

    /// `tr(grad_v s)` from the closed-form Jacobian.
    pub fn exact_divergence(&self, x: f64, v: &[f64]) -> f64 {
        let j = self.jacobian(x, v);
        (0..self.dv).map(|i| j[i * self.dv + i]).sum()
    }

    /// `z^T (grad_v s) z`, computed as one Jacobian-vector product.
    pub fn hutchinson_divergence(&self, x: f64, v: &[f64], z: &[f64]) -> f64 {
        let mut u = vec![0.0; self.hidden];
        self.preact(x, v, &mut u);
        let (w1, _, w2, _) = self.parts();
        let cols = 1 + self.dv;
        // J z = W2 diag(sigma') (W1_v z)
        let mut jz = vec![0.0; self.dv];
        for h in 0..self.hidden {
            let beta: f64 = (0..self.dv).map(|k| w1[h * cols + 1 + k] * z[k]).sum();
            let t = softsign_d1(u[h]) * beta;
            for i in 0..self.dv {
                jz[i] += w2[i * self.hidden + h] * t;
            }
        }
        jz.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    /// `L = sum_p w_p (|s_p|^2 + 2 D_p)` and `dL/dtheta`, where `D_p` is the
    /// exact divergence or its Hutchinson estimate.
    pub fn ism_loss_and_grad(
        &self,
        xs: &[f64],
        vs: &[f64],
        ws: &[f64],
        div: Divergence<'_>,
    ) -> (f64, Vec<f64>) {
        let (hn, d) = (self.hidden, self.dv);
        let cols = 1 + d;
        let (w1, _, w2, _) = self.parts();

        // g_h such that D = sum_h sigma'(u_h) g_h, when it is the same for
        // every particle.
        let shared_g: Option<Vec<f64>> = match div {
            Divergence::Exact => Some(
                (0..hn)
                    .map(|h| (0..d).map(|i| w2[i * hn + h] * w1[h * cols + 1 + i]).sum())
                    .collect(),
            ),
            Divergence::Shared(z) => Some(
                (0..hn)
                    .map(|h| {
                        let alpha: f64 = (0..d).map(|i| z[i] * w2[i * hn + h]).sum();
                        let beta: f64 = (0..d).map(|i| w1[h * cols + 1 + i] * z[i]).sum();
                        alpha * beta
                    })
                    .collect(),
            ),
            Divergence::PerParticle(_) => None,
        };

        let n_chunks = xs.len().div_ceil(GRAD_CHUNK);
        let partials: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let range = c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(xs.len());
                self.ism_chunk(xs, vs, ws, range, div, shared_g.as_deref())
            })
            .collect();

        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        // sum_p w_p sigma'(u_ph)
        let mut s1 = vec![0.0; hn];
        for (l, g, s) in &partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
            for (a, b) in s1.iter_mut().zip(s) {
                *a += b;
            }
        }

        // Direct dependence of the shared g_h on W1_v and W2.
        if shared_g.is_some() {
            let (w1r, w2r) = (self.w1_range(), self.w2_range());
            for h in 0..hn {
                let c = 2.0 * s1[h];
                if c == 0.0 {
                    continue;
                }
                match div {
                    Divergence::Exact => {
                        for i in 0..d {
                            grad[w2r.start + i * hn + h] += c * w1[h * cols + 1 + i];
                            grad[w1r.start + h * cols + 1 + i] += c * w2[i * hn + h];
                        }
                    }
                    Divergence::Shared(z) => {
                        let alpha: f64 = (0..d).map(|i| z[i] * w2[i * hn + h]).sum();
                        let beta: f64 = (0..d).map(|i| w1[h * cols + 1 + i] * z[i]).sum();
                        for i in 0..d {
                            grad[w2r.start + i * hn + h] += c * z[i] * beta;
                            grad[w1r.start + h * cols + 1 + i] += c * alpha * z[i];
                        }
                    }
                    Divergence::PerParticle(_) => unreachable!(),
                }
            }
        }
        (loss, grad)
    }

    fn ism_chunk(
        &self,
        xs: &[f64],
        vs: &[f64],
        ws: &[f64],
        range: std::ops::Range<usize>,
        div: Divergence<'_>,
        shared_g: Option<&[f64]>,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let (hn, d) = (self.hidden, self.dv);
        let cols = 1 + d;
        let (w1, _, w2, b2) = self.parts();
        let (w1r, b1r, w2r, b2r) = (self.w1_range(), self.b1_range(), self.w2_range(), self.b2_range());
        let mut grad = vec![0.0; self.params.len()];
        let mut s1 = vec![0.0; hn];
        let mut loss = 0.0;
        let mut u = vec![0.0; hn];
        let mut a = vec![0.0; hn];
        let mut g_own = vec![0.0; hn];
        let mut alpha = vec![0.0; hn];
        let mut beta = vec![0.0; hn];

        for p in range {
            let (x, v, w) = (xs[p], &vs[p * d..(p + 1) * d], ws[p]);
            self.preact(x, v, &mut u);
            for h in 0..hn {
                a[h] = softsign(u[h]);
            }
            let mut s = [0.0; 3];
            for i in 0..d {
                s[i] = b2[i] + w2[i * hn..(i + 1) * hn].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
            }
            let g: &[f64] = match (shared_g, div) {
                (Some(g), _) => g,
                (None, Divergence::PerParticle(zs)) => {
                    let z = &zs[p * d..(p + 1) * d];
                    for h in 0..hn {
                        alpha[h] = (0..d).map(|i| z[i] * w2[i * hn + h]).sum();
                        beta[h] = (0..d).map(|i| w1[h * cols + 1 + i] * z[i]).sum();
                        g_own[h] = alpha[h] * beta[h];
                    }
                    &g_own
                }
                _ => unreachable!(),
            };

            let mut divergence = 0.0;
            let s_sq: f64 = s[..d].iter().map(|c| c * c).sum();
            for h in 0..hn {
                divergence += softsign_d1(u[h]) * g[h];
            }
            loss += w * (s_sq + 2.0 * divergence);

            for i in 0..d {
                let ds = 2.0 * w * s[i];
                grad[b2r.start + i] += ds;
                let row = &mut grad[w2r.start + i * hn..w2r.start + (i + 1) * hn];
                for h in 0..hn {
                    row[h] += ds * a[h];
                }
            }
            let per_particle = matches!(div, Divergence::PerParticle(_));
            for h in 0..hn {
                let d1 = softsign_d1(u[h]);
                let back: f64 = (0..d).map(|i| w2[i * hn + h] * s[i]).sum();
                let du = 2.0 * w * (d1 * back + softsign_d2(u[h]) * g[h]);
                grad[b1r.start + h] += du;
                let row = &mut grad[w1r.start + h * cols..w1r.start + (h + 1) * cols];
                row[0] += du * x;
                for i in 0..d {
                    row[1 + i] += du * v[i];
                }
                if per_particle {
                    let c = 2.0 * w * d1;
                    let z = match div {
                        Divergence::PerParticle(zs) => &zs[p * d..(p + 1) * d],
                        _ => unreachable!(),
                    };
                    for i in 0..d {
                        grad[w2r.start + i * hn + h] += c * z[i] * beta[h];
                        grad[w1r.start + h * cols + 1 + i] += c * alpha[h] * z[i];
                    }
                } else {
                    s1[h] += w * d1;
                }
            }
        }
        (loss, grad, s1)
    }

    /// Weighted mean squared error `sum w |s - target|^2 / sum w` over the
    /// listed particles and its parameter gradient.
    pub fn mse_loss_and_grad(
        &self,
        xs: &[f64],
        vs: &[f64],
        ws: &[f64],
        target: &[f64],
        batch: &[usize],
    ) -> (f64, Vec<f64>) {
        let (hn, d) = (self.hidden, self.dv);
        let cols = 1 + d;
        let total_w: f64 = batch.iter().map(|&p| ws[p]).sum();
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let (_, _, w2, b2) = self.parts();
                let (w1r, b1r, w2r, b2r) =
                    (self.w1_range(), self.b1_range(), self.w2_range(), self.b2_range());
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                let mut u = vec![0.0; hn];
                let mut a = vec![0.0; hn];
                for &p in chunk {
                    let (x, v) = (xs[p], &vs[p * d..(p + 1) * d]);
                    let w = ws[p] / total_w;
                    self.preact(x, v, &mut u);
                    for h in 0..hn {
                        a[h] = softsign(u[h]);
                    }
                    let mut r = [0.0; 3];
                    for i in 0..d {
                        let s = b2[i]
                            + w2[i * hn..(i + 1) * hn].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
                        r[i] = s - target[p * d + i];
                        loss += w * r[i] * r[i];
                        let ds = 2.0 * w * r[i];
                        grad[b2r.start + i] += ds;
                        for h in 0..hn {
                            grad[w2r.start + i * hn + h] += ds * a[h];
                        }
                    }
                    for h in 0..hn {
                        let back: f64 = (0..d).map(|i| w2[i * hn + h] * r[i]).sum();
                        let du = 2.0 * w * softsign_d1(u[h]) * back;
                        grad[b1r.start + h] += du;
                        let row = &mut grad[w1r.start + h * cols..w1r.start + (h + 1) * cols];
                        row[0] += du * x;
                        for i in 0..d {
                            row[1 + i] += du * v[i];
                        }
                    }
                }
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (l, g) in &partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        (loss, grad)
    }

    /// Writes the `SBTM` checkpoint: magic, version, `H`, `dv` (all `u32`
    /// little-endian) followed by the parameters as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.params.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dv as u32).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "missing SBTM header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        if word(4) != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", word(4))));
        }
        let (hidden, dv) = (word(8) as usize, word(12) as usize);
        let body = &bytes[16..];
        if body.len() != 8 * Self::param_count(dv, hidden) {
            return Err(Error::format(
                path,
                format!("{} payload bytes for H = {hidden}, dv = {dv}", body.len()),
            ));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_params(dv, hidden, params)
    }
}
