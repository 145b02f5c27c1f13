//! Simulation configuration, presets and the flat `key = value` config format.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment.
//! Keys are the [`SimConfig`] field names as they appear in the file format
//! (`L`, `M`, `dt`, `t_final`, `nu`, `dv`, `n`, `K`, ...). Unknown keys are a
//! hard error. The `preset` key selects the defaults every other key overrides,
//! regardless of where it appears in the file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{BandwidthRule, DivergenceMode, ProbeMode};

/// Every key accepted by [`SimConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "L",
    "M",
    "dt",
    "t_final",
    "nu",
    "dv",
    "n",
    "K",
    "mode",
    "gamma",
    "seed",
    "estimator",
    "preset",
    "alpha",
    "k",
    "c",
    "beta",
    "alpha_B",
    "H",
    "lr",
    "weight_decay",
    "divergence",
    "probe",
    "bandwidth",
    "pretrain_steps",
    "pretrain_lr",
    "pretrain_batch",
    "snapshot_every",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Full Vlasov-Maxwell-Landau: E1, E2, B3 evolve.
    #[serde(rename = "VML")]
    Vml,
    /// Electrostatic Vlasov-Poisson-Landau: only E1 evolves.
    #[serde(rename = "VPL")]
    Vpl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Blob,
    Sbtm,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    LandauDamping,
    TwoStream,
    Weibel,
    /// Perturbed Maxwellian `(1 + alpha cos kx) N(0, I)` with user parameters.
    Custom,
}

/// Initial-condition parameters; each preset reads the subset it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    /// Spatial perturbation amplitude.
    pub alpha: f64,
    /// Perturbation wavenumber.
    pub k: f64,
    /// Beam speed (two-stream, Weibel).
    pub c: f64,
    /// Weibel thermal parameter; velocity variance is `beta / 2`.
    pub beta: f64,
    /// Initial magnetic amplitude (Weibel).
    #[serde(rename = "alpha_B")]
    pub alpha_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "M")]
    pub cells: usize,
    pub dt: f64,
    pub t_final: f64,
    pub nu: f64,
    pub dv: usize,
    pub n: usize,
    /// ISM gradient steps per time step.
    #[serde(rename = "K")]
    pub ism_steps: usize,
    pub mode: Mode,
    pub gamma: f64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub preset: Preset,
    pub preset_params: PresetParams,
    /// Hidden width of the score network.
    #[serde(rename = "H")]
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub divergence: DivergenceMode,
    pub probe: ProbeMode,
    pub bandwidth: BandwidthRule,
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    /// Steps between snapshots; 0 selects ten snapshots per run.
    pub snapshot_every: usize,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($text:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let text = match self {
                    $(v if *v == $variant => $text,)+
                    _ => unreachable!(),
                };
                f.write_str(text)
            }
        }
    };
}

keyword_enum!(Mode, "mode", { "VML" => Mode::Vml, "VPL" => Mode::Vpl });
keyword_enum!(EstimatorKind, "estimator", {
    "blob" => EstimatorKind::Blob,
    "sbtm" => EstimatorKind::Sbtm,
    "none" => EstimatorKind::None,
});
keyword_enum!(Preset, "preset", {
    "landau_damping" => Preset::LandauDamping,
    "two_stream" => Preset::TwoStream,
    "weibel" => Preset::Weibel,
    "custom" => Preset::Custom,
});

impl SimConfig {
    /// Paper-scale defaults for a preset. Every field can be overridden.
    pub fn preset(preset: Preset) -> SimConfig {
        use std::f64::consts::PI;
        let base = SimConfig {
            length: 4.0 * PI,
            cells: 100,
            dt: 0.02,
            t_final: 15.0,
            nu: 0.4,
            dv: 3,
            n: 1_000_000,
            ism_steps: 100,
            mode: Mode::Vpl,
            gamma: -3.0,
            seed: 0,
            estimator: EstimatorKind::Sbtm,
            preset,
            preset_params: PresetParams {
                alpha: 0.1,
                k: 0.5,
                c: 0.0,
                beta: 1.0,
                alpha_b: 0.0,
            },
            hidden: 256,
            lr: 2e-4,
            weight_decay: 1e-4,
            divergence: DivergenceMode::Hutchinson,
            probe: ProbeMode::Shared,
            bandwidth: BandwidthRule::Silverman,
            pretrain_steps: 10_000,
            pretrain_lr: 1e-3,
            pretrain_batch: 4096,
            snapshot_every: 0,
        };
        match preset {
            Preset::LandauDamping | Preset::Custom => base,
            Preset::TwoStream => SimConfig {
                length: 2.0 * PI / 0.2,
                dt: 0.05,
                t_final: 50.0,
                nu: 0.32,
                preset_params: PresetParams {
                    alpha: 0.005,
                    k: 0.2,
                    c: 2.4,
                    beta: 1.0,
                    alpha_b: 0.0,
                },
                ..base
            },
            Preset::Weibel => SimConfig {
                length: 10.0 * PI,
                dt: 0.1,
                t_final: 125.0,
                nu: 8e-4,
                mode: Mode::Vml,
                hidden: 512,
                preset_params: PresetParams {
                    alpha: 0.0,
                    k: 0.2,
                    c: 0.3,
                    beta: 0.01,
                    alpha_b: 1e-3,
                },
                ..base
            },
        }
    }

    /// Builds a config from ordered key/value pairs: the last `preset` wins and
    /// supplies the defaults, then every other pair is applied in order.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<SimConfig> {
        let preset = match pairs.iter().rev().find(|(k, _)| k.as_ref() == "preset") {
            Some((_, v)) => v.as_ref().parse()?,
            None => Preset::LandauDamping,
        };
        let mut cfg = SimConfig::preset(preset);
        let mut gamma_explicit = false;
        for (key, value) in pairs {
            let key = key.as_ref();
            if key == "preset" {
                continue;
            }
            gamma_explicit |= key == "gamma";
            cfg.set(key, value.as_ref())?;
        }
        if !gamma_explicit {
            cfg.gamma = -(cfg.dv as f64);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<SimConfig> {
        SimConfig::from_pairs(&parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SimConfig::from_text(&text)
    }

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let p = &mut self.preset_params;
        match key {
            "L" => self.length = num(key, value)?,
            "M" => self.cells = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "t_final" => self.t_final = num(key, value)?,
            "nu" => self.nu = num(key, value)?,
            "dv" => self.dv = num(key, value)?,
            "n" => self.n = count(key, value)?,
            "K" => self.ism_steps = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "gamma" => self.gamma = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "estimator" => self.estimator = value.parse()?,
            "preset" => self.preset = value.parse()?,
            "alpha" => p.alpha = num(key, value)?,
            "k" => p.k = num(key, value)?,
            "c" => p.c = num(key, value)?,
            "beta" => p.beta = num(key, value)?,
            "alpha_B" => p.alpha_b = num(key, value)?,
            "H" => self.hidden = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "divergence" => self.divergence = value.parse()?,
            "probe" => self.probe = value.parse()?,
            "bandwidth" => self.bandwidth = value.parse()?,
            "pretrain_steps" => self.pretrain_steps = num(key, value)?,
            "pretrain_lr" => self.pretrain_lr = num(key, value)?,
            "pretrain_batch" => self.pretrain_batch = num(key, value)?,
            "snapshot_every" => self.snapshot_every = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.length.is_finite() && self.length > 0.0) {
            return fail(format!("L must be positive, got {}", self.length));
        }
        if self.cells == 0 {
            return fail("M must be at least 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return fail(format!("t_final must be non-negative, got {}", self.t_final));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return fail(format!("nu must be non-negative, got {}", self.nu));
        }
        if self.dv != 2 && self.dv != 3 {
            return fail(format!("dv must be 2 or 3, got {}", self.dv));
        }
        if self.gamma != -(self.dv as f64) {
            return fail(format!(
                "gamma must equal -dv = {}, got {}",
                -(self.dv as f64),
                self.gamma
            ));
        }
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if self.hidden == 0 {
            return fail("H must be at least 1".into());
        }
        if self.estimator == EstimatorKind::None && self.nu > 0.0 {
            return fail("collisions require an estimator".into());
        }
        if self.preset == Preset::Weibel && self.mode != Mode::Vml {
            return fail("weibel requires VML".into());
        }
        let p = &self.preset_params;
        if !(p.alpha.abs() < 1.0) {
            return fail(format!("|alpha| must be below 1, got {}", p.alpha));
        }
        if !(p.beta.is_finite() && p.beta > 0.0) {
            return fail(format!("beta must be positive, got {}", p.beta));
        }
        let harmonic = p.k * self.length / (2.0 * std::f64::consts::PI);
        if !(p.k > 0.0) || (harmonic - harmonic.round()).abs() > 1e-9 * harmonic.max(1.0) {
            return fail(format!(
                "k = {} is not a harmonic 2*pi*m/L of the domain L = {}",
                p.k, self.length
            ));
        }
        if !(self.lr > 0.0 && self.pretrain_lr > 0.0 && self.weight_decay >= 0.0) {
            return fail("learning rates must be positive and weight_decay non-negative".into());
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return fail(format!("fixed bandwidth must be positive, got {h}"));
            }
        }
        Ok(())
    }

    /// Cell width.
    pub fn eta(&self) -> f64 {
        self.length / self.cells as f64
    }

    /// Number of forward-Euler steps needed to reach `t_final`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn snapshot_stride(&self) -> usize {
        if self.snapshot_every > 0 {
            self.snapshot_every
        } else {
            (self.n_steps() / 10).max(1)
        }
    }

    /// Renders the config in the `key = value` file format; parsing the
    /// result reproduces `self`.
    pub fn to_config_text(&self) -> String {
        let p = &self.preset_params;
        let fmt_f = |x: f64| format!("{x:?}");
        let rows: Vec<(&str, String)> = vec![
            ("preset", self.preset.to_string()),
            ("mode", self.mode.to_string()),
            ("estimator", self.estimator.to_string()),
            ("L", fmt_f(self.length)),
            ("M", self.cells.to_string()),
            ("dt", fmt_f(self.dt)),
            ("t_final", fmt_f(self.t_final)),
            ("nu", fmt_f(self.nu)),
            ("dv", self.dv.to_string()),
            ("gamma", fmt_f(self.gamma)),
            ("n", self.n.to_string()),
            ("K", self.ism_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", fmt_f(p.alpha)),
            ("k", fmt_f(p.k)),
            ("c", fmt_f(p.c)),
            ("beta", fmt_f(p.beta)),
            ("alpha_B", fmt_f(p.alpha_b)),
            ("H", self.hidden.to_string()),
            ("lr", fmt_f(self.lr)),
            ("weight_decay", fmt_f(self.weight_decay)),
            ("divergence", self.divergence.to_string()),
            ("probe", self.probe.to_string()),
            ("bandwidth", self.bandwidth.to_string()),
            ("pretrain_steps", self.pretrain_steps.to_string()),
            ("pretrain_lr", fmt_f(self.pretrain_lr)),
            ("pretrain_batch", self.pretrain_batch.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
        ];
        rows.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Splits config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!(
                "line {}: unknown config key '{key}'",
                lineno + 1
            )));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse value '{value}' for key '{key}'")))
}

/// Accepts integer counts written as `20000` or `2e4`.
fn count(key: &str, value: &str) -> Result<usize> {
    if let Ok(v) = value.parse::<usize>() {
        return Ok(v);
    }
    let f: f64 = num(key, value)?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1e15 {
        Ok(f as usize)
    } else {
        Err(Error::Config(format!("key '{key}' needs a whole number, got '{value}'")))
    }
}
