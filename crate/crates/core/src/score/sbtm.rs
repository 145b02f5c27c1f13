//! Score-based transport modeling: the MLP score, trained on the fly by
//! implicit score matching and pretrained on the known initial score.

use log::{debug, warn};
use rand::Rng;

use super::adamw::AdamW;
use super::mlp::{rademacher, Divergence, MlpScoreNet};
use super::{DivergenceMode, ProbeMode, ScoreEstimator};
use crate::collision::CellIndex;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::rng::SimRng;

/// Checks the full-ensemble pretraining error every this many steps.
const PRETRAIN_CHECK_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingOptions {
    /// Gradient steps per [`ScoreEstimator::update`].
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub divergence: DivergenceMode,
    pub probe: ProbeMode,
    /// Learning-rate halvings tolerated within one update before giving up.
    pub max_halvings: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            steps: 100,
            lr: 2e-4,
            weight_decay: 1e-4,
            divergence: DivergenceMode::Hutchinson,
            probe: ProbeMode::Shared,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub steps: usize,
    pub final_mse: f64,
    pub tolerance: f64,
    pub converged: bool,
}

pub struct SbtmEstimator {
    net: MlpScoreNet,
    opt: AdamW,
    options: TrainingOptions,
    rng: SimRng,
    /// Domain length; the network sees `x / L`.
    length: f64,
    last_loss: Option<f64>,
    recoveries: usize,
}

impl SbtmEstimator {
    pub fn new(net: MlpScoreNet, options: TrainingOptions, length: f64, rng: SimRng) -> Self {
        let opt = AdamW::new(net.params().len(), options.lr, options.weight_decay);
        SbtmEstimator {
            net,
            opt,
            options,
            rng,
            length,
            last_loss: None,
            recoveries: 0,
        }
    }

    pub fn net(&self) -> &MlpScoreNet {
        &self.net
    }

    pub fn options(&self) -> &TrainingOptions {
        &self.options
    }

    /// Loss of the most recent gradient step.
    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Number of learning-rate halvings performed so far.
    pub fn recoveries(&self) -> usize {
        self.recoveries
    }

    fn inputs(&self, particles: &ParticleEnsemble) -> Vec<f64> {
        particles.x.iter().map(|x| x / self.length).collect()
    }

    /// `steps` implicit score-matching steps, each with a fresh probe.
    /// Returns the loss of every step.
    ///
    /// A non-finite loss rolls the parameters and optimizer back to before
    /// the previous step and halves the learning rate for the rest of this
    /// call.
    pub fn train(&mut self, particles: &ParticleEnsemble, steps: usize) -> Result<Vec<f64>> {
        let xs = self.inputs(particles);
        let (n, dv) = (particles.len(), particles.dv);
        let base_lr = self.opt.lr;
        let mut saved: Option<(Vec<f64>, AdamW)> = None;
        let mut halvings = 0;
        let mut losses = Vec::with_capacity(steps);
        while losses.len() < steps {
            let probe = match (self.options.divergence, self.options.probe) {
                (DivergenceMode::Exact, _) => Vec::new(),
                (DivergenceMode::Hutchinson, ProbeMode::Shared) => rademacher(&mut self.rng, dv),
                (DivergenceMode::Hutchinson, ProbeMode::PerParticle) => {
                    rademacher(&mut self.rng, n * dv)
                }
            };
            let div = match (self.options.divergence, self.options.probe) {
                (DivergenceMode::Exact, _) => Divergence::Exact,
                (_, ProbeMode::Shared) => Divergence::Shared(&probe),
                (_, ProbeMode::PerParticle) => Divergence::PerParticle(&probe),
            };
            let (loss, grad) = self.net.ism_loss_and_grad(&xs, &particles.v, &particles.w, div);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                halvings += 1;
                self.recoveries += 1;
                if halvings > self.options.max_halvings {
                    self.opt.lr = base_lr;
                    return Err(Error::TrainingDivergence(format!(
                        "loss {loss} still non-finite after {} learning-rate halvings",
                        self.options.max_halvings
                    )));
                }
                if let Some((theta, opt)) = saved.take() {
                    self.net.params_mut().copy_from_slice(&theta);
                    self.opt = opt;
                }
                self.opt.lr *= 0.5;
                warn!(
                    "non-finite score-matching loss; restored parameters, lr now {:e}",
                    self.opt.lr
                );
                // drop the failed step so the count of applied steps is kept
                losses.pop();
                continue;
            }
            saved = Some((self.net.params().to_vec(), self.opt.clone()));
            let mut theta = self.net.params().to_vec();
            self.opt.step(&mut theta, &grad);
            self.net.params_mut().copy_from_slice(&theta);
            losses.push(loss);
        }
        self.opt.lr = base_lr;
        self.last_loss = losses.last().copied().or(self.last_loss);
        if let Some(l) = self.last_loss {
            debug!("score matching: {steps} steps, final loss {l:.6e}");
        }
        Ok(losses)
    }

    /// Fits the network to a known score `target` (row-major `n x dv`) by
    /// weighted least squares with AdamW on random mini-batches.
    ///
    /// Stops once the full-ensemble weighted MSE drops below
    /// `1e-3 * mean |target|^2`, or after `budget` steps.
    pub fn pretrain(
        &mut self,
        particles: &ParticleEnsemble,
        target: &[f64],
        budget: usize,
        lr: f64,
        batch: usize,
        rng: &mut SimRng,
    ) -> Result<PretrainReport> {
        let n = particles.len();
        let dv = particles.dv;
        if target.len() != n * dv {
            return Err(Error::Shape(format!("{} target entries for {n} particles", target.len())));
        }
        let xs = self.inputs(particles);
        let total_w = particles.total_weight();
        let mean_sq = particles
            .w
            .iter()
            .zip(target.chunks_exact(dv))
            .map(|(w, s)| w * s.iter().map(|c| c * c).sum::<f64>())
            .sum::<f64>()
            / total_w;
        let tolerance = if mean_sq > 0.0 { 1e-3 * mean_sq } else { 1e-6 };
        let full_mse = |net: &MlpScoreNet| {
            let s = net.forward_batch(&xs, &particles.v);
            particles
                .w
                .iter()
                .zip(s.chunks_exact(dv).zip(target.chunks_exact(dv)))
                .map(|(w, (a, b))| w * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
                .sum::<f64>()
                / total_w
        };

        let mut opt = AdamW::new(self.net.params().len(), lr, self.options.weight_decay);
        let batch = batch.clamp(1, n);
        let all: Vec<usize> = (0..n).collect();
        let mut idx = vec![0usize; batch];
        let mut mse = full_mse(&self.net);
        let mut steps = 0;
        while mse >= tolerance && steps < budget {
            let chosen: &[usize] = if batch == n {
                &all
            } else {
                for i in idx.iter_mut() {
                    *i = rng.random_range(0..n);
                }
                &idx
            };
            let (loss, grad) =
                self.net.mse_loss_and_grad(&xs, &particles.v, &particles.w, target, chosen);
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence(format!(
                    "pretraining loss became {loss} at step {steps}"
                )));
            }
            let mut theta = self.net.params().to_vec();
            opt.step(&mut theta, &grad);
            self.net.params_mut().copy_from_slice(&theta);
            steps += 1;
            if steps % PRETRAIN_CHECK_EVERY == 0 || steps == budget {
                mse = full_mse(&self.net);
                debug!("pretrain step {steps}: mse {mse:.4e} (tol {tolerance:.4e})");
            }
        }
        let converged = mse < tolerance;
        if !converged {
            warn!("pretraining stopped at {steps} steps with mse {mse:.4e} above tolerance {tolerance:.4e}");
        }
        Ok(PretrainReport {
            steps,
            final_mse: mse,
            tolerance,
            converged,
        })
    }
}

impl ScoreEstimator for SbtmEstimator {
    fn name(&self) -> &'static str {
        "sbtm"
    }

    fn update(&mut self, particles: &ParticleEnsemble, _: &CellIndex, _: &Grid) -> Result<()> {
        self.train(particles, self.options.steps).map(|_| ())
    }

    fn estimate(&self, particles: &ParticleEnsemble, _: &CellIndex, _: &Grid) -> Result<Vec<f64>> {
        Ok(self.net.forward_batch(&self.inputs(particles), &particles.v))
    }

    fn recoveries(&self) -> usize {
        self.recoveries
    }
}
