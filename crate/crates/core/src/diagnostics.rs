//! Per-step scalar diagnostics and their CSV format.
//!
//! Header: `step,t,E_K,E_E,E_B,E_total,H_dot,P1,...,Pdv,E_l2`. Floats are
//! written with 17 significant digits so that parsing reproduces them
//! exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::fields::FieldState;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub e_k: f64,
    pub e_e: f64,
    pub e_b: f64,
    pub e_total: f64,
    /// Estimated entropy production `sum_p w_p s_p . U_p`; zero without
    /// collisions.
    pub h_dot: f64,
    pub momentum: Vec<f64>,
    pub e_l2: f64,
}

pub fn compute_diagnostics(
    step: usize,
    t: f64,
    particles: &ParticleEnsemble,
    fields: &FieldState,
    eta: f64,
    h_dot: f64,
) -> DiagnosticsRecord {
    let e_k = particles.kinetic_energy();
    let e_e = fields.electric_energy(eta);
    let e_b = fields.magnetic_energy(eta);
    DiagnosticsRecord {
        step,
        t,
        e_k,
        e_e,
        e_b,
        e_total: e_k + e_e + e_b,
        h_dot,
        momentum: particles.momentum(),
        e_l2: fields.electric_l2(eta),
    }
}

pub fn csv_header(dv: usize) -> String {
    let mut h = String::from("step,t,E_K,E_E,E_B,E_total,H_dot");
    for i in 1..=dv {
        h.push_str(&format!(",P{i}"));
    }
    h.push_str(",E_l2");
    h
}

fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut s = format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        r.step, r.t, r.e_k, r.e_e, r.e_b, r.e_total, r.h_dot
    );
    for p in &r.momentum {
        s.push_str(&format!(",{p:.16e}"));
    }
    s.push_str(&format!(",{:.16e}", r.e_l2));
    s
}

/// Streams records to a CSV file, one row per call.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    rows: usize,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, dv: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", csv_header(dv)).map_err(|e| Error::io(path, e))?;
        Ok(DiagnosticsWriter {
            out,
            path: path.to_path_buf(),
            rows: 0,
        })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.rows += 1;
        writeln!(self.out, "{}", csv_row(record)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let dv = records.first().map_or(3, |r| r.momentum.len());
    let mut w = DiagnosticsWriter::create(path, dv)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "empty file")),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    let dv = cols.len().saturating_sub(8);
    if !(2..=3).contains(&dv) || header.trim() != csv_header(dv) {
        return Err(Error::format(path, format!("unexpected header '{header}'")));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 2;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::format(path, format!("row {row} has {} columns", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::format(path, format!("row {row}, column {}: '{}'", cols[i], fields[i])))
        };
        let step = fields[0]
            .parse()
            .map_err(|_| Error::format(path, format!("row {row}: bad step '{}'", fields[0])))?;
        records.push(DiagnosticsRecord {
            step,
            t: num(1)?,
            e_k: num(2)?,
            e_e: num(3)?,
            e_b: num(4)?,
            e_total: num(5)?,
            h_dot: num(6)?,
            momentum: (0..dv).map(|i| num(7 + i)).collect::<Result<_>>()?,
            e_l2: num(7 + dv)?,
        });
    }
    Ok(records)
}
