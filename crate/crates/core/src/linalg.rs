//! Small dense linear algebra: Z-matrix solves, irreducibility and the
//! stability modulus of Metzler matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use thiserror::Error;

use crate::math::norm_inf;

/// Default residual tolerance for [`stability_modulus`].
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;

/// Iteration cap for the shifted power iteration.
pub const MAX_POWER_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix order must be at least 1")]
    EmptyMatrix,
    #[error("expected {expected} entries, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("off-diagonal entry ({row}, {col}) is positive; not a Z-matrix")]
    NotZMatrix { row: usize, col: usize },
    #[error("diagonal entry {row} is not positive")]
    NonPositiveDiagonal { row: usize },
    #[error("row {row} fails strict diagonal dominance (and so do the columns)")]
    NotDominant { row: usize },
    #[error("right-hand side component {index} is not positive")]
    NonPositiveRhs { index: usize },
    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("off-diagonal entry ({row}, {col}) is negative; not a Metzler matrix")]
    NotMetzler { row: usize, col: usize },
    #[error("matrix is reducible")]
    Reducible,
    #[error("power iteration hit the cap of {iterations} iterations (estimate {estimate}, residual {residual:e})")]
    IterationCap {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SquareMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(order: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        if order == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        if entries.len() != order * order {
            return Err(LinalgError::Shape {
                expected: order * order,
                found: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / order,
                col: pos % order,
            });
        }
        Ok(Self { order, entries })
    }

    pub fn zeros(order: usize) -> Self {
        assert!(order > 0, "matrix order must be at least 1");
        Self {
            order,
            entries: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let order = rows.len();
        let mut entries = Vec::with_capacity(order * order);
        for row in rows {
            if row.len() != order {
                return Err(LinalgError::Shape {
                    expected: order,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::new(order, entries)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.order).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.order);
        (0..self.order)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.order)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Returns `self + alpha * I`.
    pub fn transposed(&self) -> Self {
        let n = self.order;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn shifted(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.order {
            m[(i, i)] += alpha;
        }
        m
    }

    pub fn is_metzler(&self) -> bool {
        self.first_offdiag(|x| x < 0.0).is_none()
    }

    pub fn is_z_matrix(&self) -> bool {
        self.first_offdiag(|x| x > 0.0).is_none()
    }

    fn first_offdiag(&self, pred: impl Fn(f64) -> bool) -> Option<(usize, usize)> {
        for i in 0..self.order {
            for j in 0..self.order {
                if i != j && pred(self[(i, j)]) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Upper bound on the stability modulus from Gershgorin discs:
    /// `max_i (L_ii + sum_{j != i} |L_ij|)`.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.order)
            .map(|i| {
                let off: f64 = (0..self.order)
                    .filter(|&j| j != i)
                    .map(|j| self[(i, j)].abs())
                    .sum();
                self[(i, i)] + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.order + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.order + j]
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &SquareMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.order();
    if rhs.len() != n {
        return Err(LinalgError::Shape {
            expected: n,
            found: rhs.len(),
        });
    }
    let mut m = a.entries.clone();
    let mut x = rhs.to_vec();
    let scale = a.norm_inf().max(f64::MIN_POSITIVE);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))
            .unwrap_or(col);
        let pivot = m[pivot_row * n + col];
        if pivot.abs() <= f64::EPSILON * scale * 1e-3 || !pivot.is_finite() {
            return Err(LinalgError::Singular { pivot: col });
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        for r in col + 1..n {
            let factor = m[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[r * n + col] = 0.0;
            for k in col + 1..n {
                m[r * n + k] -= factor * m[col * n + k];
            }
            x[r] -= factor * x[col];
        }
    }

    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

/// Solves `A x = rhs` for a Z-matrix `A` with positive diagonal that is
/// strictly diagonally dominant by rows or by columns, and `rhs > 0`.
///
/// Such an `A` is a nonsingular M-matrix, so the solution is strictly positive.
pub fn solve_z(a: &SquareMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.order();
    if rhs.len() != n {
        return Err(LinalgError::Shape {
            expected: n,
            found: rhs.len(),
        });
    }
    if let Some((row, col)) = a.first_offdiag(|x| x > 0.0) {
        return Err(LinalgError::NotZMatrix { row, col });
    }
    if let Some(row) = (0..n).find(|&i| !(a[(i, i)] > 0.0)) {
        return Err(LinalgError::NonPositiveDiagonal { row });
    }
    let row_fail = (0..n).find(|&i| {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| -a[(i, j)]).sum();
        !(a[(i, i)] > off)
    });
    if let Some(row) = row_fail {
        let cols_ok = (0..n).all(|j| {
            let off: f64 = (0..n).filter(|&i| i != j).map(|i| -a[(i, j)]).sum();
            a[(j, j)] > off
        });
        if !cols_ok {
            return Err(LinalgError::NotDominant { row });
        }
    }
    if let Some(index) = rhs.iter().position(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(LinalgError::NonPositiveRhs { index });
    }
    solve_dense(a, rhs)
}

/// True iff the directed graph with an edge `i -> j` for every nonzero
/// off-diagonal entry `(i, j)` is strongly connected.
pub fn is_irreducible(m: &SquareMatrix) -> bool {
    let n = m.order();
    if n == 1 {
        return true;
    }
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { m[(u, v)] } else { m[(v, u)] };
                if v != u && w != 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Dominant eigenpair of an irreducible Metzler matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityResult {
    /// `s(L)`, the largest real part over the spectrum.
    pub modulus: f64,
    /// Positive Perron vector normalised to unit sum.
    pub eigenvector: Vec<f64>,
    pub iterations: usize,
    /// `‖L v − s v‖∞` at return.
    pub residual: f64,
}

/// Stability modulus `s(L)` of an irreducible Metzler matrix.
///
/// `L + σI` with `σ = 1 + max |L_ii|` is nonnegative, irreducible and has a
/// positive diagonal, hence primitive; its Perron root is `s(L) + σ`. The
/// Perron vector is found by power iteration on the shifted matrix. Once the
/// iterate is positive, Noda's inverse iteration (shift = the Collatz–Wielandt
/// upper bound) is used to accelerate; any failed accelerated step falls back
/// to plain power steps.
///
/// The same iteration on `Lᵀ` gives the left Perron vector `u`, and the
/// returned modulus is `uᵀ L v / uᵀ v`, whose error is quadratic in the two
/// residuals. Each iteration stops when `‖L v − s v‖∞ ≤ tol · max(1, ‖L‖∞)`.
pub fn stability_modulus(l: &SquareMatrix, tol: f64) -> Result<StabilityResult, LinalgError> {
    if let Some((row, col)) = l.first_offdiag(|x| x < 0.0) {
        return Err(LinalgError::NotMetzler { row, col });
    }
    if !is_irreducible(l) {
        return Err(LinalgError::Reducible);
    }
    let n = l.order();
    if n == 1 {
        return Ok(StabilityResult {
            modulus: l[(0, 0)],
            eigenvector: vec![1.0],
            iterations: 0,
            residual: 0.0,
        });
    }

    let threshold = tol * l.norm_inf().max(1.0);
    let right = perron_vector(l, threshold)?;
    let left = perron_vector(&l.transposed(), threshold)?;
    let lv = l.mul_vec(&right.vector);
    let num: f64 = left.vector.iter().zip(&lv).map(|(u, x)| u * x).sum();
    let den: f64 = left.vector.iter().zip(&right.vector).map(|(u, v)| u * v).sum();
    let modulus = if den > 0.0 && (num / den).is_finite() { num / den } else { right.estimate };
    Ok(StabilityResult {
        modulus,
        eigenvector: right.vector,
        iterations: right.iterations + left.iterations,
        residual: right.residual,
    })
}

struct PerronVector {
    estimate: f64,
    vector: Vec<f64>,
    residual: f64,
    iterations: usize,
}

/// Unit-sum Perron vector of an irreducible Metzler matrix with residual
/// at most `threshold`.
fn perron_vector(l: &SquareMatrix, threshold: f64) -> Result<PerronVector, LinalgError> {
    let n = l.order();
    let sigma = 1.0 + (0..n).map(|i| l[(i, i)].abs()).fold(0.0, f64::max);
    let shifted = l.shifted(sigma);

    let mut v = vec![1.0 / n as f64; n];
    let mut best = eigen_estimate(l, &v);
    let mut accelerate = false;
    let mut stalled = false;
    let mut misses = 0;
    const WARMUP: usize = 8;

    for it in 1..=MAX_POWER_ITERATIONS {
        let w = shifted.mul_vec(&v);
        let noda = if accelerate { noda_step(&shifted, &v, &w) } else { None };
        let accelerated = noda.is_some();
        v = noda.unwrap_or_else(|| normalized(w));
        let est = eigen_estimate(l, &v);
        if est.1 < best.1 {
            best = est;
            misses = 0;
        } else if accelerated {
            misses += 1;
            if misses >= 3 {
                // round-off floor reached for the accelerated step
                accelerate = false;
                stalled = true;
                v = best.2.clone();
            }
        }
        if best.1 <= threshold {
            return Ok(PerronVector {
                estimate: best.0,
                vector: best.2,
                residual: best.1,
                iterations: it,
            });
        }
        if !stalled && it >= WARMUP && v.iter().all(|&x| x > 0.0) {
            accelerate = true;
        }
    }
    Err(LinalgError::IterationCap {
        iterations: MAX_POWER_ITERATIONS,
        estimate: best.0,
        residual: best.1,
    })
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    if s > 0.0 && s.is_finite() {
        for x in &mut w {
            *x /= s;
        }
    }
    w
}

/// `(s, residual, v)` with `s = Σ (L v)_i` for a unit-sum `v`.
fn eigen_estimate(l: &SquareMatrix, v: &[f64]) -> (f64, f64, Vec<f64>) {
    let lv = l.mul_vec(v);
    let s: f64 = lv.iter().sum::<f64>() / v.iter().sum::<f64>();
    let r: Vec<f64> = lv.iter().zip(v).map(|(a, b)| a - s * b).collect();
    (s, norm_inf(&r), v.to_vec())
}

fn noda_step(shifted: &SquareMatrix, v: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let mu = w
        .iter()
        .zip(v)
        .map(|(a, b)| a / b)
        .fold(f64::NEG_INFINITY, f64::max);
    if !mu.is_finite() {
        return None;
    }
    let n = shifted.order();
    let mut a = shifted.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = -a[(i, j)];
        }
        a[(i, i)] += mu;
    }
    let y = solve_dense(&a, v).ok()?;
    let sign = if y.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let y: Vec<f64> = y.into_iter().map(|x| x * sign).collect();
    if y.iter().all(|x| x.is_finite() && *x > 0.0) {
        Some(normalized(y))
    } else {
        None
    }
}
