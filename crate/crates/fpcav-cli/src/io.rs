//! File formats: geometry JSON and the CSV layouts shared with the
//! measurement pipeline. All file frequencies are Hz, lengths meters,
//! temperatures kelvin, fields tesla.

use fpcav::core::{CavityGeometry, Polarization};
use fpcav::geomfit::ModeAssignment;
use fpcav::measurement::{RingdownShot, SweepTrace};
use num_complex::Complex64;
use std::path::Path;

use crate::CliError;

pub fn read_geometry(path: &Path) -> Result<CavityGeometry, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let g: CavityGeometry = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    g.validate()
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    Ok(g)
}

/// Assignment CSV: header `freq_hz,q,pol,sigma_hz`.
pub fn read_assignments(path: &Path) -> Result<Vec<ModeAssignment>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        if r.len() != 4 {
            return Err(CliError::parse(format!(
                "{}: expected 4 columns freq_hz,q,pol,sigma_hz, got {}",
                path.display(),
                r.len()
            )));
        }
        let field = |i: usize, name: &str| -> Result<f64, CliError> {
            r[i].trim()
                .parse::<f64>()
                .map_err(|e| CliError::parse(format!("{}: field {name}: {e}", path.display())))
        };
        let pol = match r[2].trim() {
            "x" | "X" => Polarization::X,
            "y" | "Y" => Polarization::Y,
            other => {
                return Err(CliError::parse(format!(
                    "{}: field pol must be x or y, got `{other}`",
                    path.display()
                )))
            }
        };
        out.push(ModeAssignment {
            frequency_hz: field(0, "freq_hz")?,
            q: r[1]
                .trim()
                .parse::<i64>()
                .map_err(|e| CliError::parse(format!("{}: field q: {e}", path.display())))?,
            polarization: pol,
            sigma_hz: field(3, "sigma_hz")?,
        });
    }
    Ok(out)
}

/// Sweep CSV: header `freq_hz,re,im`.
pub fn read_sweep(path: &Path) -> Result<SweepTrace, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        if r.len() != 3 {
            return Err(CliError::parse(format!(
                "{}: expected 3 columns freq_hz,re,im, got {}",
                path.display(),
                r.len()
            )));
        }
        let num = |i: usize, n: &str| -> Result<f64, CliError> {
            r[i].trim()
                .parse::<f64>()
                .map_err(|e| CliError::parse(format!("{}: field {n}: {e}", path.display())))
        };
        pts.push((num(0, "freq_hz")?, Complex64::new(num(1, "re")?, num(2, "im")?)));
    }
    SweepTrace::new(pts).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

/// Ringdown CSV: header `shot_id,time_s,re,im`, grouped by shot.
pub fn read_ringdown_shots(path: &Path) -> Result<Vec<RingdownShot>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut by_shot: std::collections::BTreeMap<u64, Vec<(f64, Complex64)>> =
        std::collections::BTreeMap::new();
    for record in reader.records() {
        let r = record.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        if r.len() != 4 {
            return Err(CliError::parse(format!(
                "{}: expected 4 columns shot_id,time_s,re,im, got {}",
                path.display(),
                r.len()
            )));
        }
        let id = r[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| CliError::parse(format!("{}: field shot_id: {e}", path.display())))?;
        let num = |i: usize, n: &str| -> Result<f64, CliError> {
            r[i].trim()
                .parse::<f64>()
                .map_err(|e| CliError::parse(format!("{}: field {n}: {e}", path.display())))
        };
        by_shot
            .entry(id)
            .or_default()
            .push((num(1, "time_s")?, Complex64::new(num(2, "re")?, num(3, "im")?)));
    }
    by_shot
        .into_iter()
        .map(|(id, samples)| {
            RingdownShot::new(id, samples)
                .map_err(|e| CliError::parse(format!("{}: shot {id}: {e}", path.display())))
        })
        .collect()
}

/// Thru-calibration CSV: header `freq_hz,loss_db`.
pub fn read_thru_cal(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        if r.len() != 2 {
            return Err(CliError::parse(format!(
                "{}: expected 2 columns freq_hz,loss_db, got {}",
                path.display(),
                r.len()
            )));
        }
        let num = |i: usize, n: &str| -> Result<f64, CliError> {
            r[i].trim()
                .parse::<f64>()
                .map_err(|e| CliError::parse(format!("{}: field {n}: {e}", path.display())))
        };
        out.push((num(0, "freq_hz")?, num(1, "loss_db")?));
    }
    if out.is_empty() {
        return Err(CliError::parse(format!("{}: empty calibration table", path.display())));
    }
    Ok(out)
}
