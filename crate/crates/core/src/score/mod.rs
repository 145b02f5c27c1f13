//! Velocity-score estimators `s(x, v) ~ grad_v log f(x, v)`.
//!
//! Two interchangeable providers sit behind [`ScoreEstimator`]: the
//! kernel-density [`BlobEstimator`] and the neural [`SbtmEstimator`], a small
//! MLP trained along the flow by implicit score matching.

mod adamw;
mod blob;
mod mlp;
mod sbtm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::collision::CellIndex;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::fields::Grid;

pub use adamw::AdamW;
pub use blob::{blob_score, blob_score_at, silverman_bandwidth, BlobEstimator};
pub use mlp::{rademacher, Divergence, MlpScoreNet};
pub use sbtm::{PretrainReport, SbtmEstimator, TrainingOptions};

/// Common interface of the score estimators.
pub trait ScoreEstimator: Send {
    fn name(&self) -> &'static str;

    /// Adapts internal state to the current particles (training for SBTM,
    /// nothing for the blob method).
    fn update(&mut self, particles: &ParticleEnsemble, index: &CellIndex, grid: &Grid)
        -> Result<()>;

    /// One score vector per particle, row-major `n x dv`.
    fn estimate(
        &self,
        particles: &ParticleEnsemble,
        index: &CellIndex,
        grid: &Grid,
    ) -> Result<Vec<f64>>;

    /// Learning-rate halvings performed to recover from divergent training.
    fn recoveries(&self) -> usize {
        0
    }
}

/// How the divergence term of the score-matching loss is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceMode {
    /// Hutchinson estimate `z^T (grad_v s) z` with Rademacher `z`.
    Hutchinson,
    /// Exact Jacobian trace.
    Exact,
}

/// Whether each gradient step draws one Rademacher probe for all particles
/// or one per particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    Shared,
    PerParticle,
}

/// Blob kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BandwidthRule {
    /// Multivariate Silverman rule, computed per cell over its neighborhood.
    Silverman,
    Fixed(f64),
}

impl FromStr for DivergenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hutchinson" => Ok(DivergenceMode::Hutchinson),
            "exact" => Ok(DivergenceMode::Exact),
            other => Err(Error::Config(format!("unknown divergence mode '{other}'"))),
        }
    }
}

impl fmt::Display for DivergenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DivergenceMode::Hutchinson => "hutchinson",
            DivergenceMode::Exact => "exact",
        })
    }
}

impl FromStr for ProbeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shared" => Ok(ProbeMode::Shared),
            "per_particle" => Ok(ProbeMode::PerParticle),
            other => Err(Error::Config(format!("unknown probe mode '{other}'"))),
        }
    }
}

impl fmt::Display for ProbeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeMode::Shared => "shared",
            ProbeMode::PerParticle => "per_particle",
        })
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "silverman" {
            return Ok(BandwidthRule::Silverman);
        }
        s.parse()
            .map(BandwidthRule::Fixed)
            .map_err(|_| Error::Config(format!("bandwidth must be 'silverman' or a number, got '{s}'")))
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthRule::Silverman => f.write_str("silverman"),
            BandwidthRule::Fixed(h) => write!(f, "{h:?}"),
        }
    }
}

impl TryFrom<String> for BandwidthRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BandwidthRule> for String {
    fn from(b: BandwidthRule) -> String {
        b.to_string()
    }
}
