//! Model parameters, phase-space points and the right-hand side of the
//! multistrain SIS system with superinfection on `p` coupled patches.
//!
//! Strains are indexed `0..n` internally; a larger index is a more virulent
//! strain, and strain `j` superinfects hosts carrying strain `i` when `i < j`.
//! Only the diagonal transmission rates are stored. The full per-patch rate
//! matrix is derived by [`ModelParameters::full_beta`]:
//! `β_kj = β_kk` for `j ≤ k` and `β_kj = −β_jj` for `j > k`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::linalg::{is_irreducible, SquareMatrix};
use crate::math::exp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("state has {found} components, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("patch index {index} out of range for {patches} patches")]
    PatchOutOfRange { index: usize, patches: usize },
    #[error("state component {index} is negative or not finite")]
    InvalidState { index: usize },
}

/// Rates of the patch model for `p` patches and `n` strains.
///
/// `migration[l][i]` is the travel rate from patch `i` to patch `l`; the
/// diagonal must be zero. One migration matrix applies to every compartment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParameters {
    pub patches: usize,
    pub strains: usize,
    /// `B^l`, recruitment per patch.
    pub birth: Vec<f64>,
    /// `b^l`, per-capita death rate per patch.
    pub death: Vec<f64>,
    /// `β^l_kk`, indexed `[patch][strain]`.
    pub beta_diag: Vec<Vec<f64>>,
    /// `θ^l_k`, recovery rates indexed `[patch][strain]`.
    pub theta: Vec<Vec<f64>>,
    pub migration: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ViolationKind {
    ZeroCount,
    WrongLength,
    NotFinite,
    NotPositive,
    Negative,
    NonzeroDiagonal,
    ReducibleConnectivity,
}

/// One failed parameter check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Violation {
    pub field: String,
    pub index: Vec<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.field)?;
        for i in &self.index {
            write!(f, "[{i}]")?;
        }
        write!(f, ": {}", self.detail)
    }
}

impl ModelParameters {
    /// Checks shapes, signs, finiteness and irreducibility of the migration
    /// graph. Never panics on any input; all violations are collected.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let p = self.patches;
        let n = self.strains;
        let mut push = |field: &str, index: Vec<usize>, kind: ViolationKind, detail: String| {
            out.push(Violation {
                field: field.into(),
                index,
                kind,
                detail,
            })
        };

        if p == 0 {
            push("patches", vec![], ViolationKind::ZeroCount, "must be at least 1".into());
        }
        if n == 0 {
            push("strains", vec![], ViolationKind::ZeroCount, "must be at least 1".into());
        }

        for (name, values) in [("birth", &self.birth), ("death", &self.death)] {
            if values.len() != p {
                push(
                    name,
                    vec![],
                    ViolationKind::WrongLength,
                    format!("has {} entries, expected {p}", values.len()),
                );
            }
            for (l, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    push(name, vec![l], ViolationKind::NotFinite, format!("{v} is not finite"));
                } else if v <= 0.0 {
                    push(name, vec![l], ViolationKind::NotPositive, format!("{v} must be > 0"));
                }
            }
        }

        for (name, table, strict) in [
            ("beta_diag", &self.beta_diag, true),
            ("theta", &self.theta, false),
        ] {
            if table.len() != p {
                push(
                    name,
                    vec![],
                    ViolationKind::WrongLength,
                    format!("has {} rows, expected {p}", table.len()),
                );
            }
            for (l, row) in table.iter().enumerate() {
                if row.len() != n {
                    push(
                        name,
                        vec![l],
                        ViolationKind::WrongLength,
                        format!("has {} entries, expected {n}", row.len()),
                    );
                }
                for (k, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        push(name, vec![l, k], ViolationKind::NotFinite, format!("{v} is not finite"));
                    } else if strict && v <= 0.0 {
                        push(name, vec![l, k], ViolationKind::NotPositive, format!("{v} must be > 0"));
                    } else if v < 0.0 {
                        push(name, vec![l, k], ViolationKind::Negative, format!("{v} must be >= 0"));
                    }
                }
            }
        }

        let mut square = self.migration.len() == p;
        if !square {
            push(
                "migration",
                vec![],
                ViolationKind::WrongLength,
                format!("has {} rows, expected {p}", self.migration.len()),
            );
        }
        let mut entries_ok = true;
        for (l, row) in self.migration.iter().enumerate() {
            if row.len() != p {
                square = false;
                push(
                    "migration",
                    vec![l],
                    ViolationKind::WrongLength,
                    format!("has {} entries, expected {p}", row.len()),
                );
            }
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    entries_ok = false;
                    push("migration", vec![l, i], ViolationKind::NotFinite, format!("{v} is not finite"));
                } else if l == i && v != 0.0 {
                    push(
                        "migration",
                        vec![l, i],
                        ViolationKind::NonzeroDiagonal,
                        format!("diagonal must be 0, found {v}"),
                    );
                } else if v < 0.0 {
                    entries_ok = false;
                    push("migration", vec![l, i], ViolationKind::Negative, format!("{v} must be >= 0"));
                }
            }
        }
        if square && entries_ok && p > 1 {
            let mut graph = SquareMatrix::zeros(p);
            for l in 0..p {
                for i in 0..p {
                    if l != i {
                        graph[(l, i)] = self.migration[l][i];
                    }
                }
            }
            if !is_irreducible(&graph) {
                push(
                    "migration",
                    vec![],
                    ViolationKind::ReducibleConnectivity,
                    "reducible connectivity: the migration graph is not strongly connected".into(),
                );
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Dimension `(n + 1) p` of the phase space.
    pub fn state_dim(&self) -> usize {
        (self.strains + 1) * self.patches
    }

    /// Full `n × n` transmission matrix of one patch.
    pub fn full_beta(&self, patch: usize) -> Result<SquareMatrix, ModelError> {
        let diag = self.beta_diag.get(patch).ok_or(ModelError::PatchOutOfRange {
            index: patch,
            patches: self.patches,
        })?;
        let n = diag.len();
        let mut m = SquareMatrix::zeros(n.max(1));
        for k in 0..n {
            for j in 0..n {
                m[(k, j)] = if j <= k { diag[k] } else { -diag[j] };
            }
        }
        Ok(m)
    }

    /// Total emigration rate out of patch `l`: `Σ_{i≠l} m_{il}`.
    pub fn outflow(&self, l: usize) -> f64 {
        (0..self.patches)
            .filter(|&i| i != l)
            .map(|i| self.migration[i][l])
            .sum()
    }

    /// Connectivity matrix `M`: off-diagonal `m_{li}`, diagonal minus the
    /// total outflow of each patch. Columns sum to zero.
    pub fn connectivity_matrix(&self) -> SquareMatrix {
        let p = self.patches;
        let mut m = SquareMatrix::zeros(p);
        for l in 0..p {
            for i in 0..p {
                if l != i {
                    m[(l, i)] = self.migration[l][i];
                }
            }
            m[(l, l)] = -self.outflow(l);
        }
        m
    }

    /// Evaluates the vector field at `state`.
    ///
    /// The result uses the state layout `(S^1, T^1_1..T^1_n, …, S^p, …, T^p_n)`.
    pub fn rhs(&self, state: &StateVector) -> Result<Vec<f64>, ModelError> {
        let expected = self.state_dim();
        if state.patches != self.patches || state.strains != self.strains {
            return Err(ModelError::DimensionMismatch {
                expected,
                found: state.values.len(),
            });
        }
        let field = VectorField::new(self);
        let mut dy = vec![0.0; expected];
        field.eval(&state.values, &mut dy);
        Ok(dy)
    }
}

/// Precomputed right-hand side of the full system.
///
/// Built once per parameter set; [`VectorField::eval`] is allocation-free.
#[derive(Debug, Clone)]
pub struct VectorField<'a> {
    params: &'a ModelParameters,
    betas: Vec<SquareMatrix>,
    outflow: Vec<f64>,
}

impl<'a> VectorField<'a> {
    pub fn new(params: &'a ModelParameters) -> Self {
        let betas = (0..params.patches)
            .map(|l| params.full_beta(l).expect("patch in range"))
            .collect();
        let outflow = (0..params.patches).map(|l| params.outflow(l)).collect();
        Self {
            params,
            betas,
            outflow,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.state_dim()
    }

    pub fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let pr = self.params;
        let p = pr.patches;
        let n = pr.strains;
        let w = n + 1;
        debug_assert_eq!(y.len(), w * p);
        debug_assert_eq!(dy.len(), w * p);

        for l in 0..p {
            let base = l * w;
            let s = y[base];
            let t = &y[base + 1..base + w];
            let beta = &self.betas[l];
            let theta = &pr.theta[l];

            let mut ds = pr.birth[l] - pr.death[l] * s;
            for k in 0..n {
                ds += (theta[k] - s * beta[(k, k)]) * t[k];
            }
            dy[base] = ds;

            for k in 0..n {
                let mut interaction = 0.0;
                for j in 0..n {
                    if j != k {
                        interaction += beta[(k, j)] * t[j];
                    }
                }
                dy[base + 1 + k] = t[k] * (s * beta[(k, k)] + interaction - (pr.death[l] + theta[k]));
            }

            // migration, identical for every compartment
            for c in 0..w {
                let mut inflow = 0.0;
                for i in 0..p {
                    if i != l {
                        inflow += pr.migration[l][i] * y[i * w + c];
                    }
                }
                dy[base + c] += inflow - self.outflow[l] * y[base + c];
            }
        }
    }
}

impl VectorField<'_> {
    /// The field in mixed coordinates: components flagged in `log_mask` hold
    /// `ln x` and receive `x'/x`, the others hold `x` and receive `x'`. Only
    /// infected compartments may be flagged; `x` is scratch space.
    pub fn eval_mixed(&self, z: &[f64], log_mask: &[bool], x: &mut [f64], dz: &mut [f64]) {
        let pr = self.params;
        let p = pr.patches;
        let n = pr.strains;
        let w = n + 1;
        debug_assert!(z.len() == w * p && log_mask.len() == z.len() && dz.len() == z.len());
        for ((xi, zi), &log) in x.iter_mut().zip(z).zip(log_mask) {
            *xi = if log { exp(*zi) } else { *zi };
        }

        for l in 0..p {
            let base = l * w;
            let s = x[base];
            let t = &x[base + 1..base + w];
            let beta = &self.betas[l];
            let theta = &pr.theta[l];

            let mut ds = pr.birth[l] - pr.death[l] * s;
            for k in 0..n {
                ds += (theta[k] - s * beta[(k, k)]) * t[k];
            }
            for i in 0..p {
                if i != l {
                    ds += pr.migration[l][i] * x[i * w];
                }
            }
            dz[base] = ds - self.outflow[l] * s;

            for k in 0..n {
                let idx = base + 1 + k;
                let mut g = s * beta[(k, k)] - (pr.death[l] + theta[k]);
                for j in 0..n {
                    if j != k {
                        g += beta[(k, j)] * t[j];
                    }
                }
                if log_mask[idx] {
                    // per-capita rate; inflow enters as a ratio so that it
                    // stays finite when x underflows
                    let mut rate = g - self.outflow[l];
                    for i in 0..p {
                        let m = pr.migration[l][i];
                        if i == l || m == 0.0 {
                            continue;
                        }
                        let src = i * w + 1 + k;
                        rate += if log_mask[src] {
                            m * exp(z[src] - z[idx])
                        } else if z[src] == 0.0 {
                            0.0
                        } else {
                            m * z[src] * exp(-z[idx])
                        };
                    }
                    dz[idx] = rate;
                } else {
                    let mut inflow = 0.0;
                    for i in 0..p {
                        if i != l {
                            inflow += pr.migration[l][i] * x[i * w + 1 + k];
                        }
                    }
                    dz[idx] = t[k] * g + inflow - self.outflow[l] * t[k];
                }
            }
        }
    }
}

/// A point `(S^1, T^1_1..T^1_n, …, S^p, T^p_1..T^p_n)` of the nonnegative
/// orthant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateVector {
    patches: usize,
    strains: usize,
    values: Vec<f64>,
}

impl StateVector {
    /// Checks the dimension and that every component is finite and `≥ 0`.
    pub fn new(patches: usize, strains: usize, values: Vec<f64>) -> Result<Self, ModelError> {
        let expected = patches * (strains + 1);
        if values.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ModelError::InvalidState { index });
        }
        Ok(Self {
            patches,
            strains,
            values,
        })
    }

    pub fn zeros(patches: usize, strains: usize) -> Self {
        Self {
            patches,
            strains,
            values: vec![0.0; patches * (strains + 1)],
        }
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn strains(&self) -> usize {
        self.strains
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn susceptible(&self, patch: usize) -> f64 {
        self.values[patch * (self.strains + 1)]
    }

    /// `T^patch_strain` with a zero-based strain index.
    pub fn infected(&self, patch: usize, strain: usize) -> f64 {
        debug_assert!(strain < self.strains);
        self.values[patch * (self.strains + 1) + 1 + strain]
    }

    pub fn set_susceptible(&mut self, patch: usize, value: f64) {
        self.values[patch * (self.strains + 1)] = value;
    }

    pub fn set_infected(&mut self, patch: usize, strain: usize, value: f64) {
        self.values[patch * (self.strains + 1) + 1 + strain] = value;
    }

    /// `N^l = S^l + Σ_k T^l_k`.
    pub fn total(&self, patch: usize) -> f64 {
        let w = self.strains + 1;
        self.values[patch * w..(patch + 1) * w].iter().sum()
    }
}
