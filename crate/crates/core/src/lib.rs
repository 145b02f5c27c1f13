//! Deterministic collisional particle-in-cell solver for the
//! Vlasov-Maxwell-Landau and Vlasov-Poisson-Landau systems in one spatial and
//! two or three velocity dimensions.
//!
//! The Landau collision operator is written as a transport in velocity space
//! driven by the velocity score `grad_v log f`. That score is supplied by a
//! [`score::ScoreEstimator`]: either a kernel density ("blob") estimate or a
//! small neural network trained along the flow by implicit score matching.
//!
//! ```no_run
//! use vml_core::config::{Preset, SimConfig};
//!
//! let mut cfg = SimConfig::preset(Preset::LandauDamping);
//! cfg.n = 20_000;
//! cfg.dv = 2;
//! cfg.gamma = -2.0;
//! cfg.nu = 0.0;
//! let out = vml_core::sim::run(&cfg, None).unwrap();
//! println!("final E_l2 = {}", out.records.last().unwrap().e_l2);
//! ```

pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod fields;
pub mod kernels;
pub mod pic;
pub mod rng;
pub mod sampling;
pub mod score;
pub mod sim;
pub mod snapshot;

pub use error::{Error, Result};
