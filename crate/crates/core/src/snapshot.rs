//! Binary particle/field snapshots and the run manifest.
//!
//! Snapshot layout (little-endian): magic `VMLS`, version `u32`, `n` `u64`,
//! `dv` `u32`, `M` `u32`, then `x[n]`, `v[n * dv]` (row-major), `w[n]`,
//! `E1[M]`, `E2[M]`, `B3[M]` as `f64`. A JSON sidecar `<file>.json` carries
//! the step, time and full configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VMLS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub particles: ParticleEnsemble,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub b3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub step: usize,
    pub t: f64,
    pub config: SimConfig,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_snapshot(path: &Path, snap: &Snapshot, meta: &SnapshotMeta) -> Result<()> {
    let p = &snap.particles;
    let m = snap.e1.len();
    if snap.e2.len() != m || snap.b3.len() != m {
        return Err(Error::Shape("field arrays differ in length".into()));
    }
    let mut buf = Vec::with_capacity(24 + 8 * (p.x.len() * (2 + p.dv) + 3 * m));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(p.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(p.dv as u32).to_le_bytes());
    buf.extend_from_slice(&(m as u32).to_le_bytes());
    for arr in [&p.x, &p.v, &p.w, &snap.e1, &snap.e2, &snap.b3] {
        for x in arr.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("snapshot metadata serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_snapshot(path: &Path) -> Result<(Snapshot, SnapshotMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing VMLS header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", u32_at(4))));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dv = u32_at(16) as usize;
    let m = u32_at(20) as usize;
    let count = n * (2 + dv) + 3 * m;
    let body = &bytes[24..];
    if body.len() != 8 * count {
        return Err(Error::format(
            path,
            format!("{} payload bytes, expected {} for n = {n}, dv = {dv}, M = {m}", body.len(), 8 * count),
        ));
    }
    let mut vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |k: usize| -> Vec<f64> { vals.by_ref().take(k).collect() };
    let (x, v, w) = (take(n), take(n * dv), take(n));
    let (e1, e2, b3) = (take(m), take(m), take(m));

    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: SnapshotMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
    let particles = ParticleEnsemble::new(meta.config.length, dv, x, v, w)?;
    Ok((Snapshot { particles, e1, e2, b3 }, meta))
}

/// Run record written at start and rewritten at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub seed: u64,
    pub config: SimConfig,
    pub status: String,
    pub steps_completed: usize,
    pub warnings: Vec<String>,
    /// Final pretraining error of the score network, when one was trained.
    pub pretrain_mse: Option<f64>,
    pub pretrain_steps: Option<usize>,
    /// Learning-rate halvings performed during score matching.
    pub training_recoveries: usize,
}

impl RunManifest {
    pub fn new(config: &SimConfig) -> Self {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            status: "running".into(),
            steps_completed: 0,
            warnings: Vec::new(),
            pretrain_mse: None,
            pretrain_steps: None,
            training_recoveries: 0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let particles = ParticleEnsemble::with_equal_weights(
            2.0,
            2,
            vec![0.1, 1.9, 1.0 / 3.0],
            vec![1e-310, -0.0, 5.5, f64::MAX, -1.25, 0.7],
        )
        .unwrap();
        let snap = Snapshot {
            particles,
            e1: vec![0.25, -1.0],
            e2: vec![0.0, 1e-20],
            b3: vec![3.0, -3.0],
        };
        let mut config = SimConfig::preset(Preset::LandauDamping);
        config.length = 2.0;
        let meta = SnapshotMeta { step: 7, t: 0.14, config };
        write_snapshot(&path, &snap, &meta).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"VMLS");
        assert_eq!(bytes.len(), 24 + 8 * (3 * 4 + 2 * 3));
        let (back, back_meta) = read_snapshot(&path).unwrap();
        assert_eq!(back_meta, meta);
        for (a, b) in back.particles.v.iter().zip(&snap.particles.v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, snap);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = RunManifest::new(&SimConfig::preset(Preset::TwoStream));
        m.warnings.push("pretraining stopped early".into());
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }
}
