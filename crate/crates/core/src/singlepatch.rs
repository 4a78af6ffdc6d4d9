//! Single-patch cascade driven by reproduction numbers.
//!
//! Written independently of [`crate::cascade`] (closed-form scalar formulas,
//! no linear algebra) so that the two can be compared at `p = 1`.
//!
//! With effective rates `B^(ℓ)`, `b^(ℓ)` at elimination step `ℓ`, strain
//! `k = n − ℓ` has `R₀ = B^(ℓ) β_kk / (b^(ℓ) (b^(ℓ) + θ_k))`. If `R₀ > 1`
//! its level is `T* = (B^(ℓ) β_kk − (b^(ℓ) + θ_k) b^(ℓ)) / (β_kk b^(ℓ))` and
//! the rates are updated with `θ_k T*` and `β_kk T*`; otherwise `T* = 0`.
//! The last strain is resolved from the two-dimensional `(S, T_1)` system.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::cascade::EquilibriumPoint;
use crate::model::{ModelParameters, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SinglePatchError {
    #[error("single-patch cascade needs exactly one patch, got {0}")]
    NotSinglePatch(usize),
    #[error("invalid model parameters ({} violations)", .0.len())]
    InvalidParameters(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct R0Sequence {
    /// Reproduction numbers in elimination order: strain `n` first, strain 1 last.
    pub values: Vec<f64>,
    /// `(B^(ℓ), b^(ℓ))` used at each step `ℓ = 0..n`.
    pub coefficients: Vec<(f64, f64)>,
}

impl R0Sequence {
    /// Reproduction number of a one-based strain label.
    pub fn for_strain(&self, strain: usize) -> f64 {
        self.values[self.values.len() - strain]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SinglePatchOutcome {
    pub r0: R0Sequence,
    pub equilibrium: EquilibriumPoint,
}

impl SinglePatchOutcome {
    /// One-based labels of strains with `R₀ > 1`, ascending.
    pub fn persistence_set(&self) -> Vec<usize> {
        let n = self.r0.values.len();
        (1..=n).filter(|&k| self.r0.for_strain(k) > 1.0).collect()
    }
}

pub fn r0_cascade(params: &ModelParameters) -> Result<SinglePatchOutcome, SinglePatchError> {
    if params.patches != 1 {
        return Err(SinglePatchError::NotSinglePatch(params.patches));
    }
    params.validate().map_err(SinglePatchError::InvalidParameters)?;
    let n = params.strains;
    let beta = &params.beta_diag[0];
    let theta = &params.theta[0];

    let mut big_b = params.birth[0];
    let mut small_b = params.death[0];
    let mut values = Vec::with_capacity(n);
    let mut coefficients = Vec::with_capacity(n + 1);
    let mut levels = vec![0.0; n];

    // strains n, n-1, ..., 2
    for k in (1..n).rev() {
        coefficients.push((big_b, small_b));
        let r0 = big_b * beta[k] / (small_b * (small_b + theta[k]));
        values.push(r0);
        if r0 > 1.0 {
            let t = (big_b * beta[k] - (small_b + theta[k]) * small_b) / (beta[k] * small_b);
            levels[k] = t;
            big_b += theta[k] * t;
            small_b += beta[k] * t;
        }
    }

    // terminal (S, T_1) system
    coefficients.push((big_b, small_b));
    let r0 = big_b * beta[0] / (small_b * (small_b + theta[0]));
    values.push(r0);
    let s = if r0 > 1.0 {
        let s = (small_b + theta[0]) / beta[0];
        levels[0] = big_b / small_b - s;
        s
    } else {
        big_b / small_b
    };

    Ok(SinglePatchOutcome {
        r0: R0Sequence {
            values,
            coefficients,
        },
        equilibrium: EquilibriumPoint {
            susceptible: vec![s],
            infected: vec![levels],
        },
    })
}
