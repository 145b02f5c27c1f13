//! The time-stepping loop and the score-estimation test harness.
//!
//! Each step runs, in order: interpolate fields to particles, Lorentz push,
//! position advance, deposit, field update, and, when collisions are on,
//! score update followed by the collision push. Diagnostics are recorded
//! after every step.

use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::collision::{collision_force, collision_push, entropy_production, CellIndex};
use crate::config::{EstimatorKind, Mode, SimConfig};
use crate::diagnostics::{compute_diagnostics, DiagnosticsRecord, DiagnosticsWriter};
use crate::ensemble::ParticleEnsemble;
use crate::equilibrium::analytic_scores;
use crate::error::{Error, Result};
use crate::fields::{FieldState, Grid};
use crate::pic::{advance_positions, deposit_into, interpolate_fields, lorentz_push, maxwell_step, vpl_field_step};
use crate::rng::{stream_rng, Stream};
use crate::sampling::{initial_fields, sample_ensemble};
use crate::score::{
    blob_score, BlobEstimator, MlpScoreNet, PretrainReport, SbtmEstimator, ScoreEstimator,
    TrainingOptions,
};
use crate::snapshot::{write_snapshot, RunManifest, Snapshot, SnapshotMeta};

/// Pipeline stages, recorded per step in instrumentation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Interpolate,
    LorentzPush,
    AdvancePositions,
    Deposit,
    FieldUpdate,
    ScoreUpdate,
    CollisionPush,
}

pub struct Simulation {
    pub config: SimConfig,
    pub grid: Grid,
    pub particles: ParticleEnsemble,
    pub fields: FieldState,
    estimator: Option<Box<dyn ScoreEstimator>>,
    pretrain: Option<PretrainReport>,
    step: usize,
    trace: Option<Vec<(usize, Stage)>>,
}

/// A boxed estimator and, for SBTM, its pretraining report.
pub type BuiltEstimator = (Option<Box<dyn ScoreEstimator>>, Option<PretrainReport>);

/// Builds the configured estimator; `None` when collisions are off. SBTM
/// networks are pretrained on the analytic initial score of the preset.
pub fn build_estimator(
    config: &SimConfig,
    particles: &ParticleEnsemble,
) -> Result<BuiltEstimator> {
    if config.nu == 0.0 {
        return Ok((None, None));
    }
    match config.estimator {
        EstimatorKind::None => Err(Error::Config("collisions require an estimator".into())),
        EstimatorKind::Blob => Ok((Some(Box::new(BlobEstimator::new(config.bandwidth))), None)),
        EstimatorKind::Sbtm => {
            let (est, report) = pretrained_sbtm(config, particles)?;
            Ok((Some(Box::new(est)), Some(report)))
        }
    }
}

/// A fresh network fitted to the analytic initial score of `particles`.
pub fn pretrained_sbtm(
    config: &SimConfig,
    particles: &ParticleEnsemble,
) -> Result<(SbtmEstimator, PretrainReport)> {
    let net = MlpScoreNet::init(config.dv, config.hidden, &mut stream_rng(config.seed, Stream::NetworkInit));
    let options = TrainingOptions {
        steps: config.ism_steps,
        lr: config.lr,
        weight_decay: config.weight_decay,
        divergence: config.divergence,
        probe: config.probe,
        ..TrainingOptions::default()
    };
    let mut est = SbtmEstimator::new(
        net,
        options,
        config.length,
        stream_rng(config.seed, Stream::Training),
    );
    let target = analytic_scores(config.preset, &config.preset_params, particles);
    let report = est.pretrain(
        particles,
        &target,
        config.pretrain_steps,
        config.pretrain_lr,
        config.pretrain_batch,
        &mut stream_rng(config.seed, Stream::Pretraining),
    )?;
    info!(
        "pretrained score network: {} steps, mse {:.3e} (tol {:.3e})",
        report.steps, report.final_mse, report.tolerance
    );
    Ok((est, report))
}

impl Simulation {
    /// Samples the initial condition, sets up the fields and, with collisions
    /// on, builds (and for SBTM pretrains) the score estimator.
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = Grid::new(config.length, config.cells)?;
        let particles = sample_ensemble(&config, &mut stream_rng(config.seed, Stream::Sampling))?;
        let fields = initial_fields(&config, &grid, &particles)?;
        let (estimator, pretrain) = build_estimator(&config, &particles)?;
        Ok(Simulation {
            config,
            grid,
            particles,
            fields,
            estimator,
            pretrain,
            step: 0,
            trace: None,
        })
    }

    /// Starts from a given state instead of sampling one.
    pub fn from_state(
        config: SimConfig,
        particles: ParticleEnsemble,
        fields: FieldState,
        estimator: Option<Box<dyn ScoreEstimator>>,
    ) -> Result<Self> {
        config.validate()?;
        if config.nu > 0.0 && estimator.is_none() {
            return Err(Error::Config("collisions require an estimator".into()));
        }
        let grid = Grid::new(config.length, config.cells)?;
        Ok(Simulation {
            config,
            grid,
            particles,
            fields,
            estimator,
            pretrain: None,
            step: 0,
            trace: None,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn has_estimator(&self) -> bool {
        self.estimator.is_some()
    }

    pub fn estimator_name(&self) -> Option<&'static str> {
        self.estimator.as_ref().map(|e| e.name())
    }

    pub fn pretrain_report(&self) -> Option<&PretrainReport> {
        self.pretrain.as_ref()
    }

    /// Records `(step, stage)` for every stage executed from now on.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[(usize, Stage)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn mark(&mut self, stage: Stage) {
        let step = self.step + 1;
        if let Some(t) = &mut self.trace {
            t.push((step, stage));
        }
    }

    pub fn diagnostics(&self, h_dot: f64) -> DiagnosticsRecord {
        compute_diagnostics(self.step, self.time(), &self.particles, &self.fields, self.grid.eta, h_dot)
    }

    /// Advances one time step and returns its diagnostics.
    pub fn step(&mut self) -> Result<DiagnosticsRecord> {
        let dt = self.config.dt;

        self.mark(Stage::Interpolate);
        let at = interpolate_fields(&self.particles, &self.fields, &self.grid);
        self.mark(Stage::LorentzPush);
        lorentz_push(&mut self.particles, &at, dt);
        drop(at);
        self.mark(Stage::AdvancePositions);
        advance_positions(&mut self.particles, dt)?;
        self.mark(Stage::Deposit);
        deposit_into(&self.particles, &self.grid, &mut self.fields);
        self.mark(Stage::FieldUpdate);
        match self.config.mode {
            Mode::Vml => maxwell_step(&mut self.fields, dt, &self.grid),
            Mode::Vpl => vpl_field_step(&mut self.fields, dt),
        }

        let mut h_dot = 0.0;
        if self.config.nu > 0.0 {
            self.mark(Stage::ScoreUpdate);
            let index = CellIndex::build(&self.particles, &self.grid);
            let est = self
                .estimator
                .as_mut()
                .ok_or_else(|| Error::Config("collisions require an estimator".into()))?;
            est.update(&self.particles, &index, &self.grid)?;
            let scores = est.estimate(&self.particles, &index, &self.grid)?;
            self.mark(Stage::CollisionPush);
            let u = collision_force(&self.particles, &scores, &index, &self.grid)?;
            h_dot = entropy_production(&self.particles.w, &scores, &u);
            collision_push(&mut self.particles, &u, self.config.nu, dt);
        }

        if !self.fields.is_finite() || self.particles.v.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: self.step + 1 });
        }
        self.step += 1;
        Ok(self.diagnostics(h_dot))
    }

    pub fn snapshot(&self) -> (Snapshot, SnapshotMeta) {
        (
            Snapshot {
                particles: self.particles.clone(),
                e1: self.fields.e1.clone(),
                e2: self.fields.e2.clone(),
                b3: self.fields.b3.clone(),
            },
            SnapshotMeta {
                step: self.step,
                t: self.time(),
                config: self.config.clone(),
            },
        )
    }
}

/// Outcome of [`run`].
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub manifest: RunManifest,
    pub simulation: Simulation,
}

/// Output file names inside a run directory.
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

pub fn snapshot_file(step: usize) -> String {
    format!("snapshot_{step:06}.bin")
}

/// Runs a full simulation. With `out` set, writes the manifest (at start and
/// end), the diagnostics CSV and snapshots every `snapshot_stride` steps
/// into that directory.
pub fn run(config: &SimConfig, out: Option<&Path>) -> Result<RunOutput> {
    config.validate()?;
    let mut manifest = RunManifest::new(config);
    let manifest_path: Option<PathBuf> = out.map(|d| d.join(MANIFEST_FILE));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        manifest.write(manifest_path.as_ref().unwrap())?;
    }

    let mut sim = Simulation::new(config.clone())?;
    if let Some(r) = sim.pretrain_report() {
        manifest.pretrain_mse = Some(r.final_mse);
        manifest.pretrain_steps = Some(r.steps);
        if !r.converged {
            manifest.warnings.push(format!(
                "pretraining budget of {} steps exhausted with mse {:.4e} above tolerance {:.4e}",
                r.steps, r.final_mse, r.tolerance
            ));
        }
    }

    let mut writer = match out {
        Some(dir) => Some(DiagnosticsWriter::create(&dir.join(DIAGNOSTICS_FILE), config.dv)?),
        None => None,
    };
    let stride = config.snapshot_stride();
    let n_steps = config.n_steps();
    let save = |sim: &Simulation| -> Result<()> {
        if let Some(dir) = out {
            let (snap, meta) = sim.snapshot();
            write_snapshot(&dir.join(snapshot_file(sim.step_index())), &snap, &meta)?;
        }
        Ok(())
    };

    let mut records = Vec::with_capacity(n_steps + 1);
    let first = sim.diagnostics(0.0);
    if let Some(w) = &mut writer {
        w.write(&first)?;
    }
    records.push(first);
    save(&sim)?;

    let result = (|| -> Result<()> {
        for _ in 0..n_steps {
            let rec = sim.step()?;
            if let Some(w) = &mut writer {
                w.write(&rec)?;
            }
            records.push(rec);
            if sim.step_index() % stride == 0 || sim.step_index() == n_steps {
                save(&sim)?;
            }
        }
        Ok(())
    })();

    manifest.steps_completed = sim.step_index();
    manifest.training_recoveries = sim.estimator.as_ref().map_or(0, |e| e.recoveries());
    manifest.status = match &result {
        Ok(()) => "completed".into(),
        Err(e) => format!("failed: {e}"),
    };
    if let Some(w) = writer {
        w.finish()?;
    }
    if let Some(p) = &manifest_path {
        manifest.write(p)?;
    }
    result?;
    if let Some(last) = records.last() {
        info!("run finished at t = {:.4}, E_total = {:.10e}", last.t, last.e_total);
    }
    Ok(RunOutput {
        records,
        manifest,
        simulation: sim,
    })
}

/// One estimator's error against the analytic initial score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreError {
    pub estimator: &'static str,
    /// Weighted mean of `|s_est - s_true|^2`.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTestReport {
    pub errors: Vec<ScoreError>,
    pub pretrain: PretrainReport,
}

impl ScoreTestReport {
    pub fn mse(&self, estimator: &str) -> Option<f64> {
        self.errors.iter().find(|e| e.estimator == estimator).map(|e| e.mse)
    }
}

fn weighted_mse(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let dv = a.len() / w.len();
    let total: f64 = w.iter().sum();
    w.iter()
        .zip(a.chunks_exact(dv).zip(b.chunks_exact(dv)))
        .map(|(w, (x, y))| w * x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum::<f64>()
        / total
}

/// Samples the initial condition and compares the blob and the pretrained
/// SBTM scores against the analytic score. With `csv` set, writes one row
/// per particle: `x, v.., s_true.., s_blob.., s_sbtm..`.
pub fn score_test(config: &SimConfig, csv: Option<&Path>) -> Result<ScoreTestReport> {
    config.validate()?;
    let grid = Grid::new(config.length, config.cells)?;
    let particles = sample_ensemble(config, &mut stream_rng(config.seed, Stream::Sampling))?;
    let truth = analytic_scores(config.preset, &config.preset_params, &particles);
    let index = CellIndex::build(&particles, &grid);
    let blob = blob_score(&particles, &index, &grid, config.bandwidth)?;
    let (sbtm, pretrain) = pretrained_sbtm(config, &particles)?;
    if !pretrain.converged {
        warn!("score network did not reach the pretraining tolerance");
    }
    let learned = sbtm.estimate(&particles, &index, &grid)?;
    let errors = vec![
        ScoreError {
            estimator: "blob",
            mse: weighted_mse(&particles.w, &blob, &truth),
        },
        ScoreError {
            estimator: "sbtm",
            mse: weighted_mse(&particles.w, &learned, &truth),
        },
    ];
    if let Some(path) = csv {
        write_score_csv(path, &particles, &[&truth, &blob, &learned])?;
    }
    Ok(ScoreTestReport { errors, pretrain })
}

fn write_score_csv(path: &Path, particles: &ParticleEnsemble, columns: &[&[f64]]) -> Result<()> {
    use std::io::Write;
    let dv = particles.dv;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = vec!["x".to_string()];
    for prefix in ["v", "s_true", "s_blob", "s_sbtm"] {
        header.extend((1..=dv).map(|i| format!("{prefix}{i}")));
    }
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for p in 0..particles.len() {
        let mut row = vec![format!("{:.16e}", particles.x[p])];
        row.extend(particles.velocity(p).iter().map(|v| format!("{v:.16e}")));
        for col in columns {
            row.extend(col[p * dv..(p + 1) * dv].iter().map(|v| format!("{v:.16e}")));
        }
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}
