//! `vml`: command-line driver for the collisional particle-in-cell solver.
//!
//! Configuration is layered: preset defaults, then the `--config` file, then
//! individual flags (and `--set key=value` for keys without a flag).

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use vml_core::config::{parse_pairs, SimConfig};
use vml_core::sim::{run, score_test, DIAGNOSTICS_FILE};

#[derive(Parser)]
#[command(name = "vml", version, about = "Deterministic collisional PIC for Vlasov-Maxwell/Poisson-Landau")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write diagnostics, snapshots and a manifest.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Compare the blob and SBTM scores against the analytic initial score.
    ScoreTest {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write per-particle true and estimated scores to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the resolved configuration in config-file format.
    ShowConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Number of particles (accepts `2e4`).
    #[arg(long)]
    n: Option<String>,
    /// Number of grid cells.
    #[arg(long = "M")]
    cells: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Collision strength.
    #[arg(long)]
    nu: Option<f64>,
    /// Velocity dimension (2 or 3).
    #[arg(long)]
    dv: Option<usize>,
    /// Score-matching steps per time step.
    #[arg(long = "K")]
    ism_steps: Option<usize>,
    /// Hidden width of the score network.
    #[arg(long = "H")]
    hidden: Option<usize>,
    /// blob, sbtm or none.
    #[arg(long)]
    estimator: Option<String>,
    /// VML or VPL.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Steps between snapshots (0: ten per run).
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// hutchinson or exact.
    #[arg(long)]
    divergence: Option<String>,
    /// Any other config key, e.g. `--set alpha=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            pairs = parse_pairs(&text).with_context(|| format!("in config file {}", path.display()))?;
        }
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push((key.to_string(), v));
            }
        };
        flag("preset", self.preset.clone());
        flag("n", self.n.clone());
        flag("M", self.cells.map(|v| v.to_string()));
        flag("dt", self.dt.map(|v| v.to_string()));
        flag("t_final", self.t_final.map(|v| v.to_string()));
        flag("nu", self.nu.map(|v| v.to_string()));
        flag("dv", self.dv.map(|v| v.to_string()));
        flag("K", self.ism_steps.map(|v| v.to_string()));
        flag("H", self.hidden.map(|v| v.to_string()));
        flag("estimator", self.estimator.clone());
        flag("mode", self.mode.clone());
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("snapshot_every", self.snapshot_every.map(|v| v.to_string()));
        flag("divergence", self.divergence.clone());
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(SimConfig::from_pairs(&pairs)?)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = config.resolve()?;
            info!(
                "{} ({}), n = {}, dv = {}, M = {}, nu = {}, estimator = {}, {} steps",
                cfg.preset,
                cfg.mode,
                cfg.n,
                cfg.dv,
                cfg.cells,
                cfg.nu,
                cfg.estimator,
                cfg.n_steps()
            );
            let result = run(&cfg, Some(&out))?;
            let (first, last) = (&result.records[0], result.records.last().unwrap());
            println!("steps:          {}", result.manifest.steps_completed);
            println!("final time:     {:.6}", last.t);
            println!(
                "energy drift:   {:.3e} (relative)",
                (last.e_total - first.e_total) / first.e_total
            );
            println!("final E_l2:     {:.6e}", last.e_l2);
            for w in &result.manifest.warnings {
                println!("warning:        {w}");
            }
            println!("diagnostics:    {}", out.join(DIAGNOSTICS_FILE).display());
        }
        Command::ScoreTest { config, csv } => {
            let cfg = config.resolve()?;
            let report = score_test(&cfg, csv.as_deref())?;
            println!(
                "pretraining: {} steps, mse {:.4e} (tolerance {:.4e}{})",
                report.pretrain.steps,
                report.pretrain.final_mse,
                report.pretrain.tolerance,
                if report.pretrain.converged { "" } else { ", not reached" }
            );
            for e in &report.errors {
                println!("{:<5} mse {:.6e}", e.estimator, e.mse);
            }
            if let Some(path) = csv {
                println!("scores written to {}", path.display());
            }
        }
        Command::ShowConfig { config } => {
            print!("{}", config.resolve()?.to_config_text());
        }
    }
    Ok(())
}
