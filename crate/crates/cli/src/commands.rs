//! The five subcommands, as library functions.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use strain_cascade_core::simulate::{converged_to, relative_distance};
use strain_cascade_core::{
    integrate, run_cascade, CascadeReport, EquilibriumPoint, StateVector, Trajectory, TrajectoryStatus,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{
    full_precision, trajectory_csv, write_output, REPORT_JSON, REPORT_TEXT, SWEEP_CSV, TRAJECTORY_CSV,
    VERIFY_CSV,
};
use crate::report::{format_set, ThresholdsReport};
use crate::sweep::{run_sweep, sweep_csv, Axis};

pub const THREADS_ENV: &str = "STRAIN_CASCADE_THREADS";

/// Random initial components are `N*_l · 10^u` with `u` uniform on this range.
pub const INITIAL_LOG_RANGE: (f64, f64) = (-3.0, 1.0);

/// What a successful command wants printed, plus the files it wrote.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary {
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Worker pool capped by `STRAIN_CASCADE_THREADS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

fn cascade(config: &RunConfig) -> Result<CascadeReport, CliError> {
    config.validate()?;
    Ok(run_cascade(&config.model)?)
}

/// Per-patch total population limit of the unreduced system.
fn population_limit(report: &CascadeReport) -> &[f64] {
    &report.verdicts[0].total_pop_limit
}

pub fn cmd_validate(config: &RunConfig) -> Result<Summary, CliError> {
    config.validate()?;
    Ok(Summary {
        lines: vec![format!(
            "config is valid: {} patch(es), {} strain(s)",
            config.model.patches, config.model.strains
        )],
        ..Summary::default()
    })
}

pub fn cmd_thresholds(config: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let report = cascade(config)?;
    let doc = ThresholdsReport::new(&config.model, &report);
    let mut summary = Summary::default();
    if config.outputs.json {
        summary.files.push(write_output(out, REPORT_JSON, doc.to_json().as_bytes())?);
    }
    let text = doc.to_text();
    if config.outputs.text {
        summary.files.push(write_output(out, REPORT_TEXT, text.as_bytes())?);
    }
    summary.lines.extend(text.lines().map(str::to_string));
    for t in doc.thresholds.iter().filter(|t| t.near_threshold) {
        summary.warnings.push(format!(
            "strain {} is within numerical noise of its threshold (s = {:e})",
            t.strain, t.threshold
        ));
    }
    if doc.single_patch.as_ref().is_some_and(|c| !c.agrees) {
        summary
            .warnings
            .push("single-patch reproduction numbers disagree with the cascade".into());
    }
    Ok(summary)
}

/// Strictly positive state with every compartment of patch `l` equal to
/// `n_star[l] · 10^u`, `u ~ U(INITIAL_LOG_RANGE)`.
pub fn random_initial_state(n_star: &[f64], strains: usize, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = INITIAL_LOG_RANGE;
    let mut values = Vec::with_capacity(n_star.len() * (strains + 1));
    for &n in n_star {
        for _ in 0..=strains {
            values.push(n * 10f64.powf(rng.random_range(lo..hi)));
        }
    }
    StateVector::new(n_star.len(), strains, values).expect("positive finite components")
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSource {
    /// JSON file holding a flat array `S_1, T_1_1, …, T_p_n`.
    File(PathBuf),
    Values(Vec<f64>),
    Seed(u64),
}

fn load_initial(config: &RunConfig, source: &InitialSource, n_star: &[f64]) -> Result<StateVector, CliError> {
    let (p, n) = (config.model.patches, config.model.strains);
    let values = match source {
        InitialSource::Seed(seed) => return Ok(random_initial_state(n_star, n, *seed)),
        InitialSource::Values(v) => v.clone(),
        InitialSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<Vec<f64>>(&text).map_err(|e| {
                CliError::Config(format!("{}: initial state must be a JSON array of numbers: {e}", path.display()))
            })?
        }
    };
    if values.len() != p * (n + 1) {
        return Err(CliError::Config(format!(
            "initial state has {} components, expected {}",
            values.len(),
            p * (n + 1)
        )));
    }
    StateVector::new(p, n, values).map_err(|e| CliError::Config(format!("initial state: {e}")))
}

fn describe_status(traj: &Trajectory) -> String {
    match (traj.status, traj.converged_at) {
        (TrajectoryStatus::Converged, Some(t)) => format!("converged at t = {t}"),
        (TrajectoryStatus::Converged, None) => "converged".into(),
        (TrajectoryStatus::MaxTime, _) => format!("max_time reached at t = {}", traj.final_time()),
    }
}

pub fn cmd_simulate(config: &RunConfig, out: &Path, source: &InitialSource) -> Result<Summary, CliError> {
    let report = cascade(config)?;
    let initial = load_initial(config, source, population_limit(&report))?;
    let traj = integrate(&config.model, &initial, &config.integrator)?;
    let mut summary = Summary::default();
    summary.files.push(write_output(out, TRAJECTORY_CSV, &trajectory_csv(&traj))?);
    let distance = relative_distance(
        traj.final_state().expect("nonempty trajectory").as_slice(),
        &report.equilibrium.to_values(),
    );
    summary.lines.push(format!("status: {}", describe_status(&traj)));
    summary
        .lines
        .push(format!("distance to cascade equilibrium: {distance:e}"));
    summary.lines.push(format!(
        "samples: {}  accepted steps: {}  rejected steps: {}  clamped components: {}",
        traj.times.len(),
        traj.accepted_steps,
        traj.rejected_steps,
        traj.clamped
    ));
    if traj.status == TrajectoryStatus::MaxTime {
        summary.warnings.push(format!(
            "integration stopped at max_time = {} before the convergence criterion held",
            config.integrator.max_time
        ));
    }
    Ok(summary)
}

/// One verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub seed: u64,
    /// Relative distance of the terminal state to the target.
    pub distance: Option<f64>,
    /// Earliest sample time after which every sample stays within `eps`.
    pub time_to_converge: Option<f64>,
    pub status: String,
    pub passed: bool,
}

fn time_to_converge(traj: &Trajectory, target: &[f64], eps: f64) -> Option<f64> {
    let mut first = None;
    for (t, x) in traj.times.iter().zip(&traj.states).rev() {
        if relative_distance(x.as_slice(), target) <= eps {
            first = Some(*t);
        } else {
            break;
        }
    }
    first
}

fn verify_one(config: &RunConfig, n_star: &[f64], target: &EquilibriumPoint, seed: u64) -> VerifyRow {
    let initial = random_initial_state(n_star, config.model.strains, seed);
    match integrate(&config.model, &initial, &config.integrator) {
        Ok(traj) => {
            let values = target.to_values();
            let distance = relative_distance(traj.final_state().expect("nonempty").as_slice(), &values);
            VerifyRow {
                seed,
                distance: Some(distance),
                time_to_converge: time_to_converge(&traj, &values, config.verify_eps),
                status: match traj.status {
                    TrajectoryStatus::Converged => "converged".into(),
                    TrajectoryStatus::MaxTime => "max_time".into(),
                },
                passed: converged_to(&traj, target, config.verify_eps),
            }
        }
        Err(e) => VerifyRow {
            seed,
            distance: None,
            time_to_converge: None,
            status: format!("failed: {e}"),
            passed: false,
        },
    }
}

pub fn verify_csv(rows: &[VerifyRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "distance", "time_to_converge", "status", "passed"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.distance.map(full_precision).unwrap_or_default(),
            r.time_to_converge.map(full_precision).unwrap_or_default(),
            r.status.clone(),
            r.passed.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn cmd_verify(config: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let report = cascade(config)?;
    run_verify(config, &report, &report.equilibrium, out)
}

/// Same as [`cmd_verify`] but checks convergence to an arbitrary `target`.
pub fn verify_against(config: &RunConfig, target: &EquilibriumPoint, out: &Path) -> Result<Summary, CliError> {
    let report = cascade(config)?;
    run_verify(config, &report, target, out)
}

fn run_verify(
    config: &RunConfig,
    report: &CascadeReport,
    target: &EquilibriumPoint,
    out: &Path,
) -> Result<Summary, CliError> {
    if config.seeds.is_empty() {
        return Err(CliError::Config("verify needs a nonempty `seeds` list".into()));
    }
    let n_star = population_limit(report);
    let rows: Vec<VerifyRow> = worker_pool()?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| verify_one(config, n_star, target, seed))
            .collect()
    });
    let mut summary = Summary::default();
    summary.files.push(write_output(out, VERIFY_CSV, &verify_csv(&rows))?);
    let passed = rows.iter().filter(|r| r.passed).count();
    summary.lines.push(format!(
        "persistence set {}: {passed}/{} runs converged to the equilibrium within {:e}",
        format_set(&report.persistence_set()),
        rows.len(),
        config.verify_eps
    ));
    if let Some(bad) = rows.iter().find(|r| !r.passed) {
        let reason = match bad.distance {
            Some(d) => format!("{} with terminal distance {d:e}", bad.status),
            None => bad.status.clone(),
        };
        return Err(CliError::VerifyFailed { seed: bad.seed, reason });
    }
    Ok(summary)
}

pub fn cmd_sweep(config: &RunConfig, out: &Path, axis: &Axis) -> Result<Summary, CliError> {
    config.validate()?;
    axis.check(&config.model)?;
    let rows = worker_pool()?.install(|| run_sweep(&config.model, axis));
    let mut summary = Summary::default();
    summary
        .files
        .push(write_output(out, SWEEP_CSV, &sweep_csv(config.model.strains, &rows))?);
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    summary
        .lines
        .push(format!("swept {} over {} point(s)", axis.path, rows.len()));
    if failed > 0 {
        summary
            .warnings
            .push(format!("{failed} grid point(s) failed; see the persistence_set column"));
    }
    Ok(summary)
}
