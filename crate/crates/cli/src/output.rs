//! CSV writers and file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use strain_cascade_core::Trajectory;

use crate::error::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const VERIFY_CSV: &str = "verify.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

/// Seventeen significant digits.
pub fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_header(patches: usize, strains: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for l in 1..=patches {
        header.push(format!("S_{l}"));
        for k in 1..=strains {
            header.push(format!("T_{l}_{k}"));
        }
    }
    header
}

pub fn trajectory_csv(trajectory: &Trajectory) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trajectory_header(trajectory.patches, trajectory.strains))
        .expect("in-memory write");
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        let row = std::iter::once(*t)
            .chain(x.as_slice().iter().copied())
            .map(full_precision);
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Creates `dir` if needed and writes `name` inside it.
pub fn write_output(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
