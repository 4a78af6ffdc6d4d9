//! Threshold cascade: eliminates strains from the most virulent down and
//! assembles the globally stable equilibrium.
//!
//! At step `q` (strain `k = n − q`, zero-based `n − 1 − q`) with effective
//! rates `b_(q)`, `B_(q)`:
//!
//! 1. `N*` solves `A N* = B_(q)` with `A = diag(b_(q) + outflow) − m`.
//! 2. `c_l = β^l_kk N*_l − (b^l_(q) + θ^l_k)` and the threshold matrix is
//!    `M_k = M + diag(c)`, `M` the connectivity matrix.
//! 3. `T*_k = 0` if `s(M_k) ≤ 0`, else the positive patch Lotka–Volterra
//!    equilibrium.
//! 4. `b_(q+1) = b_(q) + β_kk T*_k`, `B_(q+1) = B_(q) + θ_k T*_k`.
//!
//! After the last step `S̄ = N*_1 − T̄_1`.
//!
//! The diagonal of `M` is minus the total *outflow* `Σ_i m_{il}` of each
//! patch, matching the migration terms of the vector field; columns of `M`
//! sum to zero.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{is_irreducible, solve_dense, solve_z, stability_modulus, LinalgError, SquareMatrix, DEFAULT_EIGEN_TOL};
use crate::math::norm_inf;
use crate::model::{ModelParameters, StateVector, Violation};
use crate::simulate::{lv_integrate, lv_rhs, IntegrationError, IntegratorConfig};

/// Moduli closer to zero than this are flagged as near-threshold.
pub const NEAR_THRESHOLD: f64 = 1e-10;
/// Persisting levels below this are flagged as weak persistence.
pub const WEAK_PERSISTENCE: f64 = 1e-12;
/// Default relative residual tolerance for the Lotka–Volterra equilibrium.
pub const DEFAULT_LV_TOL: f64 = 1e-12;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error("invalid model parameters ({} violations)", .0.len())]
    InvalidParameters(Vec<Violation>),
    #[error("input lengths disagree: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("strain index {strain} out of range for {strains} strains")]
    StrainOutOfRange { strain: usize, strains: usize },
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("Lotka-Volterra equilibrium did not converge (residual {residual:e})")]
    LvNotConverged { best: Vec<f64>, residual: f64 },
    #[error("fallback integration failed: {0}")]
    Integration(#[from] IntegrationError),
    #[error("threshold matrix for strain {strain} is reducible")]
    ReducibleThreshold { strain: usize },
    #[error("assembled susceptible level {value} on patch {patch} is negative")]
    NegativeSusceptible { patch: usize, value: f64 },
    #[error("cascade step {step} (strain {strain}): {source}")]
    Step {
        step: usize,
        /// One-based strain label.
        strain: usize,
        source: Box<CascadeError>,
    },
}

/// Effective per-patch death and birth rates after `step` eliminations.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReductionCoefficients {
    pub step: usize,
    pub death: Vec<f64>,
    pub birth: Vec<f64>,
}

impl ReductionCoefficients {
    pub fn initial(params: &ModelParameters) -> Self {
        Self {
            step: 0,
            death: params.death.clone(),
            birth: params.birth.clone(),
        }
    }

    /// Coefficients for the next step after eliminating `strain` (zero-based)
    /// at levels `levels`.
    pub fn advance(&self, params: &ModelParameters, strain: usize, levels: &[f64]) -> Self {
        let p = self.death.len();
        Self {
            step: self.step + 1,
            death: (0..p)
                .map(|l| self.death[l] + params.beta_diag[l][strain] * levels[l])
                .collect(),
            birth: (0..p)
                .map(|l| self.birth[l] + params.theta[l][strain] * levels[l])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StrainVerdict {
    /// One-based strain label; larger is more virulent.
    pub strain: usize,
    /// `s(M_k)`.
    pub threshold: f64,
    pub persists: bool,
    /// `T*` per patch.
    pub levels: Vec<f64>,
    /// `N*` per patch at this step.
    pub total_pop_limit: Vec<f64>,
    /// `c` per patch at this step.
    pub growth_rates: Vec<f64>,
    pub near_threshold: bool,
    pub weak_persistence: bool,
    pub lv_fallback: bool,
}

/// Equilibrium levels per patch; `infected[l][k]` uses zero-based strains.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumPoint {
    pub susceptible: Vec<f64>,
    pub infected: Vec<Vec<f64>>,
}

impl EquilibriumPoint {
    /// Flattens into the state layout `(S^1, T^1_1..T^1_n, …)`.
    pub fn to_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.susceptible.len() * (self.strains() + 1));
        for (s, t) in self.susceptible.iter().zip(&self.infected) {
            out.push(*s);
            out.extend_from_slice(t);
        }
        out
    }

    pub fn to_state(&self) -> StateVector {
        StateVector::new(self.susceptible.len(), self.strains(), self.to_values())
            .expect("equilibrium levels are nonnegative")
    }

    pub fn strains(&self) -> usize {
        self.infected.first().map_or(0, Vec::len)
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.to_values())
    }

    pub fn is_disease_free(&self) -> bool {
        self.infected.iter().flatten().all(|&t| t == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CascadeReport {
    /// Strain `n` first, strain 1 last.
    pub verdicts: Vec<StrainVerdict>,
    /// `b_(q)`, `B_(q)` for `q = 0..n`; the last entry follows the final step.
    pub coefficients: Vec<ReductionCoefficients>,
    pub equilibrium: EquilibriumPoint,
}

impl CascadeReport {
    /// `(s(M_n), …, s(M_1))`.
    pub fn thresholds(&self) -> Vec<f64> {
        self.verdicts.iter().map(|v| v.threshold).collect()
    }

    /// One-based labels of persisting strains, ascending.
    pub fn persistence_set(&self) -> Vec<usize> {
        let mut set: Vec<usize> = self
            .verdicts
            .iter()
            .filter(|v| v.persists)
            .map(|v| v.strain)
            .collect();
        set.sort_unstable();
        set
    }

    /// Verdict for a one-based strain label.
    pub fn verdict(&self, strain: usize) -> Option<&StrainVerdict> {
        self.verdicts.iter().find(|v| v.strain == strain)
    }

    pub fn any_near_threshold(&self) -> bool {
        self.verdicts.iter().any(|v| v.near_threshold)
    }
}

/// Population matrix `A = diag(death + outflow) − m` of the total-population
/// dynamics `N' = B − A N`.
pub fn population_matrix(death: &[f64], migration: &[Vec<f64>]) -> SquareMatrix {
    let p = death.len();
    let mut a = SquareMatrix::zeros(p);
    for l in 0..p {
        let outflow: f64 = (0..p).filter(|&i| i != l).map(|i| migration[i][l]).sum();
        a[(l, l)] = death[l] + outflow;
        for i in 0..p {
            if i != l {
                a[(l, i)] = -migration[l][i];
            }
        }
    }
    a
}

/// Limiting total population per patch: the positive solution of `A N = B`.
pub fn total_population_limit(
    coeffs: &ReductionCoefficients,
    migration: &[Vec<f64>],
) -> Result<Vec<f64>, CascadeError> {
    let p = coeffs.death.len();
    if coeffs.birth.len() != p || migration.len() != p {
        return Err(CascadeError::Shape {
            expected: p,
            found: coeffs.birth.len().min(migration.len()),
        });
    }
    let a = population_matrix(&coeffs.death, migration);
    Ok(solve_z(&a, &coeffs.birth)?)
}

/// Per-patch growth rates `c_l = β^l_kk N*_l − (b^l_(q) + θ^l_k)` for the
/// zero-based `strain`.
pub fn growth_rates(
    strain: usize,
    coeffs: &ReductionCoefficients,
    n_star: &[f64],
    params: &ModelParameters,
) -> Result<Vec<f64>, CascadeError> {
    if strain >= params.strains {
        return Err(CascadeError::StrainOutOfRange {
            strain,
            strains: params.strains,
        });
    }
    let p = params.patches;
    if n_star.len() != p || coeffs.death.len() != p {
        return Err(CascadeError::Shape {
            expected: p,
            found: n_star.len(),
        });
    }
    Ok((0..p)
        .map(|l| {
            params.beta_diag[l][strain] * n_star[l] - (coeffs.death[l] + params.theta[l][strain])
        })
        .collect())
}

/// `M_k = M + diag(c)` for a zero-based `strain`.
pub fn threshold_matrix(
    strain: usize,
    coeffs: &ReductionCoefficients,
    n_star: &[f64],
    params: &ModelParameters,
) -> Result<SquareMatrix, CascadeError> {
    let c = growth_rates(strain, coeffs, n_star, params)?;
    Ok(lv_matrix(&c, &params.migration))
}

fn lv_matrix(c: &[f64], migration: &[Vec<f64>]) -> SquareMatrix {
    let p = c.len();
    let mut m = SquareMatrix::zeros(p);
    for l in 0..p {
        let mut outflow = 0.0;
        for i in 0..p {
            if i != l {
                m[(l, i)] = migration[l][i];
                outflow += migration[i][l];
            }
        }
        m[(l, l)] = c[l] - outflow;
    }
    m
}

/// Globally attracting equilibrium of a patch Lotka–Volterra system.
#[derive(Debug, Clone, PartialEq)]
pub struct LvEquilibrium {
    pub levels: Vec<f64>,
    /// `s(M)` of the associated threshold matrix.
    pub modulus: f64,
    pub residual: f64,
    /// True if Newton failed and long-time integration was needed.
    pub used_fallback: bool,
}

/// Solves `T_l (c_l − β_l T_l) + Σ_{i≠l} (m_{li} T_i − m_{il} T_l) = 0`.
///
/// Returns zeros when `s(M) ≤ 0`. Otherwise runs damped Newton from
/// `T_l = max(c_l, s)/β_l`; if Newton leaves the positive orthant or stalls,
/// integrates the system forward and polishes the terminal state.
/// `tol` is relative to `max(1, max_l β_l T_l²)`.
pub fn lv_equilibrium(
    c: &[f64],
    beta: &[f64],
    migration: &[Vec<f64>],
    tol: f64,
) -> Result<LvEquilibrium, CascadeError> {
    let p = c.len();
    if beta.len() != p || migration.len() != p || migration.iter().any(|r| r.len() != p) {
        return Err(CascadeError::Shape {
            expected: p,
            found: beta.len(),
        });
    }
    let m = lv_matrix(c, migration);
    let modulus = stability_modulus(&m, DEFAULT_EIGEN_TOL)?.modulus;
    if modulus <= 0.0 {
        return Ok(LvEquilibrium {
            levels: vec![0.0; p],
            modulus,
            residual: 0.0,
            used_fallback: false,
        });
    }

    let guess: Vec<f64> = (0..p).map(|l| c[l].max(modulus) / beta[l]).collect();
    match newton(c, beta, migration, guess.clone(), tol) {
        Ok((levels, residual)) => Ok(LvEquilibrium {
            levels,
            modulus,
            residual,
            used_fallback: false,
        }),
        Err(_) => {
            let config = IntegratorConfig {
                max_time: 1e6,
                convergence_eps: 1e-12,
                ..IntegratorConfig::default()
            };
            let limit = lv_integrate(c, beta, migration, &guess, &config)?;
            let (levels, residual) = match newton(c, beta, migration, limit.state.clone(), tol) {
                Ok(found) => found,
                Err(_) => {
                    let residual = lv_residual(c, beta, migration, &limit.state);
                    if residual > tol * lv_scale(beta, &limit.state) {
                        return Err(CascadeError::LvNotConverged {
                            best: limit.state,
                            residual,
                        });
                    }
                    (limit.state, residual)
                }
            };
            Ok(LvEquilibrium {
                levels,
                modulus,
                residual,
                used_fallback: true,
            })
        }
    }
}

fn lv_residual(c: &[f64], beta: &[f64], migration: &[Vec<f64>], t: &[f64]) -> f64 {
    let mut f = vec![0.0; t.len()];
    lv_rhs(c, beta, migration, t, &mut f);
    norm_inf(&f)
}

fn lv_scale(beta: &[f64], t: &[f64]) -> f64 {
    beta.iter()
        .zip(t)
        .map(|(b, x)| b * x * x)
        .fold(1.0, f64::max)
}

/// Damped Newton restricted to the open positive orthant.
fn newton(
    c: &[f64],
    beta: &[f64],
    migration: &[Vec<f64>],
    mut t: Vec<f64>,
    tol: f64,
) -> Result<(Vec<f64>, f64), CascadeError> {
    let p = t.len();
    let mut f = vec![0.0; p];
    lv_rhs(c, beta, migration, &t, &mut f);
    let mut res = norm_inf(&f);

    for _ in 0..NEWTON_MAX_ITER {
        if res <= tol * lv_scale(beta, &t) {
            return Ok((t, res));
        }
        let mut jac = lv_matrix(c, migration);
        for l in 0..p {
            jac[(l, l)] -= 2.0 * beta[l] * t[l];
        }
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let delta = solve_dense(&jac, &rhs)?;

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial: Vec<f64> = t.iter().zip(&delta).map(|(x, d)| x + lambda * d).collect();
            if trial.iter().all(|&x| x > 0.0 && x.is_finite()) {
                let mut ft = vec![0.0; p];
                lv_rhs(c, beta, migration, &trial, &mut ft);
                let r = norm_inf(&ft);
                if r < res {
                    accepted = Some((trial, ft, r));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, ft, r)) => {
                let step = norm_inf(&trial.iter().zip(&t).map(|(a, b)| a - b).collect::<Vec<_>>());
                t = trial;
                f = ft;
                res = r;
                if step <= 4.0 * f64::EPSILON * norm_inf(&t) && res <= 1e3 * tol * lv_scale(beta, &t) {
                    return Ok((t, res));
                }
            }
            None => {
                if res <= 1e3 * tol * lv_scale(beta, &t) {
                    // already at the round-off floor
                    return Ok((t, res));
                }
                return Err(CascadeError::LvNotConverged { best: t, residual: res });
            }
        }
    }
    if res <= tol * lv_scale(beta, &t) {
        Ok((t, res))
    } else {
        Err(CascadeError::LvNotConverged { best: t, residual: res })
    }
}

/// Builds `E` from the verdicts (strain `n` first) with `S̄ = N*_1 − T̄_1`.
///
/// A negative `S̄` beyond `−1e−9 · max(1, N*_1)` is an error; smaller
/// negative round-off is set to zero.
pub fn assemble_equilibrium(verdicts: &[StrainVerdict]) -> Result<EquilibriumPoint, CascadeError> {
    let n = verdicts.len();
    let last = verdicts.last().ok_or(CascadeError::Shape {
        expected: 1,
        found: 0,
    })?;
    let p = last.levels.len();
    let mut infected = vec![vec![0.0; n]; p];
    for v in verdicts {
        if v.strain == 0 || v.strain > n {
            return Err(CascadeError::StrainOutOfRange {
                strain: v.strain,
                strains: n,
            });
        }
        for l in 0..p {
            infected[l][v.strain - 1] = v.levels[l];
        }
    }
    let first = verdicts
        .iter()
        .find(|v| v.strain == 1)
        .ok_or(CascadeError::StrainOutOfRange { strain: 1, strains: n })?;
    let mut susceptible = Vec::with_capacity(p);
    for l in 0..p {
        let s = first.total_pop_limit[l] - first.levels[l];
        if s < 0.0 {
            if s < -1e-9 * first.total_pop_limit[l].max(1.0) {
                return Err(CascadeError::NegativeSusceptible { patch: l, value: s });
            }
            susceptible.push(0.0);
        } else {
            susceptible.push(s);
        }
    }
    Ok(EquilibriumPoint {
        susceptible,
        infected,
    })
}

/// Runs the full cascade for valid parameters.
pub fn run_cascade(params: &ModelParameters) -> Result<CascadeReport, CascadeError> {
    params.validate().map_err(CascadeError::InvalidParameters)?;
    let n = params.strains;
    let p = params.patches;

    let mut coeffs = ReductionCoefficients::initial(params);
    let mut trail = Vec::with_capacity(n + 1);
    let mut verdicts = Vec::with_capacity(n);

    for q in 0..n {
        let strain = n - 1 - q;
        let tag = |e: CascadeError| CascadeError::Step {
            step: q,
            strain: strain + 1,
            source: Box::new(e),
        };
        let n_star = total_population_limit(&coeffs, &params.migration).map_err(tag)?;
        let c = growth_rates(strain, &coeffs, &n_star, params).map_err(tag)?;
        if !is_irreducible(&lv_matrix(&c, &params.migration)) {
            return Err(tag(CascadeError::ReducibleThreshold { strain: strain + 1 }));
        }
        let beta: Vec<f64> = (0..p).map(|l| params.beta_diag[l][strain]).collect();
        let lv = lv_equilibrium(&c, &beta, &params.migration, DEFAULT_LV_TOL).map_err(tag)?;

        let persists = lv.modulus > 0.0;
        let weak = persists && lv.levels.iter().any(|&t| t < WEAK_PERSISTENCE);
        let next = coeffs.advance(params, strain, &lv.levels);
        trail.push(coeffs);
        coeffs = next;
        verdicts.push(StrainVerdict {
            strain: strain + 1,
            threshold: lv.modulus,
            persists,
            levels: lv.levels,
            total_pop_limit: n_star,
            growth_rates: c,
            near_threshold: lv.modulus.abs() < NEAR_THRESHOLD,
            weak_persistence: weak,
            lv_fallback: lv.used_fallback,
        });
    }
    trail.push(coeffs);

    let equilibrium = assemble_equilibrium(&verdicts)?;
    Ok(CascadeReport {
        verdicts,
        coefficients: trail,
        equilibrium,
    })
}
