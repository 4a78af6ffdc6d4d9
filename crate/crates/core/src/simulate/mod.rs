//! Forward integration of the full system and of the reduced patch
//! Lotka–Volterra systems, with trailing-window convergence detection.

mod dopri;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::cascade::EquilibriumPoint;
use crate::math::norm_inf;
use crate::model::{ModelParameters, StateVector, VectorField, Violation};
use dopri::{Dopri5, StepFailure, StepOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid model parameters ({} violations)", .0.len())]
    InvalidParameters(Vec<Violation>),
    #[error("initial state has {found} components, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("initial component {index} is negative or not finite")]
    InvalidInitial { index: usize },
    #[error("step size underflow at t = {time}")]
    StepSizeUnderflow { time: f64, last_state: Vec<f64> },
    #[error("non-finite values produced after t = {time}")]
    NonFinite { time: f64, last_state: Vec<f64> },
    #[error("step limit of {steps} reached at t = {time}")]
    MaxSteps {
        steps: usize,
        time: f64,
        last_state: Vec<f64>,
    },
}

impl IntegrationError {
    /// Time and state of the last accepted step, for failures that have one.
    pub fn last_good(&self) -> Option<(f64, &[f64])> {
        match self {
            Self::StepSizeUnderflow { time, last_state }
            | Self::NonFinite { time, last_state }
            | Self::MaxSteps {
                time, last_state, ..
            } => Some((*time, last_state)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    /// Relative state diameter, over the trailing window, that counts as converged.
    pub convergence_eps: f64,
    /// Length of the trailing window in time units.
    pub convergence_window: f64,
    /// Spacing of recorded samples (dense output).
    pub sample_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_time: 5000.0,
            max_steps: 10_000_000,
            convergence_eps: 1e-9,
            convergence_window: 50.0,
            sample_interval: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.rel_tol) || self.rel_tol < 1e-13 {
            return Err(IntegrationError::InvalidConfig("rel_tol must be >= 1e-13"));
        }
        if !positive(self.abs_tol) {
            return Err(IntegrationError::InvalidConfig("abs_tol must be positive"));
        }
        if !positive(self.max_time) {
            return Err(IntegrationError::InvalidConfig("max_time must be positive"));
        }
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidConfig("max_steps must be positive"));
        }
        if !positive(self.convergence_eps) {
            return Err(IntegrationError::InvalidConfig("convergence_eps must be positive"));
        }
        if !positive(self.convergence_window) {
            return Err(IntegrationError::InvalidConfig("convergence_window must be positive"));
        }
        if !positive(self.sample_interval) {
            return Err(IntegrationError::InvalidConfig("sample_interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrajectoryStatus {
    Converged,
    MaxTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub patches: usize,
    pub strains: usize,
    /// Strictly increasing sample times, starting at 0.
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub status: TrajectoryStatus,
    /// Time at which the trailing-window criterion first held.
    pub converged_at: Option<f64>,
    pub convergence_window: f64,
    /// Number of components in `(-1e-12, 0)` that were clamped to zero.
    pub clamped: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// `‖x − target‖∞ / max(1, ‖target‖∞)`.
pub fn relative_distance(x: &[f64], target: &[f64]) -> f64 {
    let diff = x
        .iter()
        .zip(target)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    diff / norm_inf(target).max(1.0)
}

/// True iff the final sample and every sample in the trailing convergence
/// window lie within relative distance `eps` of `target`.
pub fn converged_to(trajectory: &Trajectory, target: &EquilibriumPoint, eps: f64) -> bool {
    converged_to_state(trajectory, &target.to_values(), eps)
}

pub fn converged_to_state(trajectory: &Trajectory, target: &[f64], eps: f64) -> bool {
    let Some(last) = trajectory.final_state() else {
        return false;
    };
    if last.as_slice().len() != target.len() {
        return false;
    }
    let start = trajectory.final_time() - trajectory.convergence_window;
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .filter(|(t, _)| **t >= start)
        .all(|(_, x)| relative_distance(x.as_slice(), target) <= eps)
}

struct WindowMonitor {
    window: f64,
    eps: f64,
    history: VecDeque<(f64, Vec<f64>)>,
    next_check: f64,
}

impl WindowMonitor {
    fn new(window: f64, eps: f64, y0: &[f64]) -> Self {
        let mut history = VecDeque::new();
        history.push_back((0.0, y0.to_vec()));
        Self {
            window,
            eps,
            history,
            next_check: window,
        }
    }

    /// Records an accepted step; returns true once the state diameter over
    /// the trailing window is within `eps · max(1, ‖y‖∞)`.
    fn push(&mut self, t: f64, y: &[f64]) -> bool {
        self.history.push_back((t, y.to_vec()));
        let cutoff = t - self.window;
        while self.history.len() > 2 && self.history[1].0 <= cutoff {
            self.history.pop_front();
        }
        if t < self.next_check {
            return false;
        }
        self.next_check = t + self.window / 16.0;
        let scale = norm_inf(y).max(1.0);
        let mut diameter = 0.0_f64;
        for i in 0..y.len() {
            let (lo, hi) = self
                .history
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
                    (lo.min(s[i]), hi.max(s[i]))
                });
            diameter = diameter.max(hi - lo);
        }
        diameter <= self.eps * scale
    }
}

/// True when a logarithmic component too small for the window test to see
/// is still growing.
fn hidden_growth<F: FnMut(&[f64], &[bool], &mut [f64])>(solver: &Dopri5<F>, state: &[f64], eps: f64) -> bool {
    let floor = eps * norm_inf(state).max(1.0);
    let rates = solver.derivative();
    (0..state.len()).any(|i| solver.is_log(i) && state[i] <= floor && rates[i] > 0.0)
}

struct RunOutput {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    converged_at: Option<f64>,
    clamped: usize,
    accepted: usize,
    rejected: usize,
}

/// Drives the integrator. Each group in `log_groups` lists components that
/// move to log coordinates together once all of them are positive.
fn run<F: FnMut(&[f64], &[bool], &mut [f64])>(
    field: F,
    y0: Vec<f64>,
    log_groups: Vec<Vec<usize>>,
    config: &IntegratorConfig,
    record: bool,
) -> Result<RunOutput, IntegrationError> {
    let dim = y0.len();
    let mut monitor = WindowMonitor::new(config.convergence_window, config.convergence_eps, &y0);
    let mut out = RunOutput {
        times: vec![0.0],
        states: vec![y0.clone()],
        converged_at: None,
        clamped: 0,
        accepted: 0,
        rejected: 0,
    };
    let mut solver = Dopri5::new(field, y0, config.rel_tol, config.abs_tol, true);
    let mut pending = log_groups;
    let mut switch_ready = |solver: &mut Dopri5<F>| {
        if pending.is_empty() {
            return;
        }
        let mut mask = vec![false; dim];
        pending.retain(|group| {
            let ready = group.iter().all(|&i| solver.y[i] > 0.0);
            if ready {
                group.iter().for_each(|&i| mask[i] = true);
            }
            !ready
        });
        if mask.iter().any(|&m| m) {
            solver.switch_to_log(&mask);
        }
    };
    switch_ready(&mut solver);
    let mut next_sample = config.sample_interval;
    let mut sample = vec![0.0; dim];
    let mut state = vec![0.0; dim];
    let mut sample_index = 1u64;

    loop {
        if solver.accepted + solver.rejected >= config.max_steps {
            return Err(IntegrationError::MaxSteps {
                steps: config.max_steps,
                time: solver.t,
                last_state: solver.state_vec(),
            });
        }
        match solver.step(config.max_time) {
            Err(StepFailure::Underflow) => {
                return Err(IntegrationError::StepSizeUnderflow {
                    time: solver.t,
                    last_state: solver.state_vec(),
                })
            }
            Err(StepFailure::NonFinite) => {
                return Err(IntegrationError::NonFinite {
                    time: solver.t,
                    last_state: solver.state_vec(),
                })
            }
            Ok(StepOutcome::Rejected) => continue,
            Ok(StepOutcome::Accepted { clamped }) => {
                out.clamped += clamped;
            }
        }
        if solver.derivative().iter().any(|d| !d.is_finite()) {
            return Err(IntegrationError::NonFinite {
                time: solver.t,
                last_state: solver.state_vec(),
            });
        }

        if record {
            while next_sample < solver.t {
                solver.interpolate(next_sample, &mut sample);
                for v in sample.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                        out.clamped += 1;
                    }
                }
                out.times.push(next_sample);
                out.states.push(sample.clone());
                sample_index += 1;
                next_sample = sample_index as f64 * config.sample_interval;
            }
        }

        switch_ready(&mut solver);
        solver.state(&mut state);
        let converged = monitor.push(solver.t, &state) && !hidden_growth(&solver, &state, config.convergence_eps);
        let done = converged || solver.t >= config.max_time;
        if done {
            if converged {
                out.converged_at = Some(solver.t);
            }
            if out.times.last().is_some_and(|&t| solver.t > t) {
                out.times.push(solver.t);
                out.states.push(state.clone());
            } else if let Some(last) = out.states.last_mut() {
                last.clone_from(&state);
            }
            out.accepted = solver.accepted;
            out.rejected = solver.rejected;
            return Ok(out);
        }
    }
}

/// Integrates the full system from `initial` until the trailing-window
/// criterion holds or `max_time` is reached.
pub fn integrate(
    params: &ModelParameters,
    initial: &StateVector,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    config.validate()?;
    params.validate().map_err(IntegrationError::InvalidParameters)?;
    if initial.patches() != params.patches || initial.strains() != params.strains {
        return Err(IntegrationError::DimensionMismatch {
            expected: params.state_dim(),
            found: initial.as_slice().len(),
        });
    }
    let field = VectorField::new(params);
    let (p, n) = (params.patches, params.strains);
    let w = n + 1;
    // infected compartments of each strain present somewhere move to log
    // coordinates together; absent strains stay identically zero
    let log_groups = (0..n)
        .map(|k| (0..p).map(|l| l * w + 1 + k).collect::<Vec<_>>())
        .filter(|g| g.iter().any(|&i| initial.as_slice()[i] > 0.0))
        .collect();
    let mut scratch = vec![0.0; params.state_dim()];
    let out = run(
        |z: &[f64], mask: &[bool], dz: &mut [f64]| field.eval_mixed(z, mask, &mut scratch, dz),
        initial.as_slice().to_vec(),
        log_groups,
        config,
        true,
    )?;
    let states = out
        .states
        .into_iter()
        .map(|v| StateVector::new(params.patches, params.strains, v))
        .collect::<Result<Vec<_>, _>>()
        .expect("integrator keeps states in the nonnegative orthant");
    Ok(Trajectory {
        patches: params.patches,
        strains: params.strains,
        times: out.times,
        states,
        status: if out.converged_at.is_some() {
            TrajectoryStatus::Converged
        } else {
            TrajectoryStatus::MaxTime
        },
        converged_at: out.converged_at,
        convergence_window: config.convergence_window,
        clamped: out.clamped,
        accepted_steps: out.accepted,
        rejected_steps: out.rejected,
    })
}

/// Terminal state of a reduced Lotka–Volterra integration.
#[derive(Debug, Clone, PartialEq)]
pub struct LvLimit {
    pub state: Vec<f64>,
    pub converged: bool,
    pub time: f64,
}

/// Right-hand side of the patch Lotka–Volterra system
/// `T_l' = T_l (c_l − β_l T_l) + Σ_{i≠l} (m_{li} T_i − m_{il} T_l)`.
pub fn lv_rhs(c: &[f64], beta: &[f64], migration: &[Vec<f64>], t: &[f64], dt: &mut [f64]) {
    let p = c.len();
    for l in 0..p {
        let mut acc = t[l] * (c[l] - beta[l] * t[l]);
        for i in 0..p {
            if i != l {
                acc += migration[l][i] * t[i] - migration[i][l] * t[l];
            }
        }
        dt[l] = acc;
    }
}

/// Integrates the reduced patch Lotka–Volterra system until the trailing
/// window criterion holds (or `max_time`) and returns the terminal state.
pub fn lv_integrate(
    c: &[f64],
    beta: &[f64],
    migration: &[Vec<f64>],
    initial: &[f64],
    config: &IntegratorConfig,
) -> Result<LvLimit, IntegrationError> {
    config.validate()?;
    let p = c.len();
    if beta.len() != p || initial.len() != p || migration.len() != p {
        return Err(IntegrationError::DimensionMismatch {
            expected: p,
            found: initial.len(),
        });
    }
    if let Some(index) = initial.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(IntegrationError::InvalidInitial { index });
    }
    let out = run(
        |t: &[f64], _: &[bool], dt: &mut [f64]| lv_rhs(c, beta, migration, t, dt),
        initial.to_vec(),
        Vec::new(),
        config,
        false,
    )?;
    Ok(LvLimit {
        state: out.states.last().cloned().unwrap_or_default(),
        converged: out.converged_at.is_some(),
        time: *out.times.last().unwrap_or(&0.0),
    })
}
