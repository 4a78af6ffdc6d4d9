#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use strain_cascade_core::{ModelParameters, StateVector};

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Irreducible migration: a directed ring plus random extra links.
pub fn random_migration<R: Rng>(rng: &mut R, p: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; p]; p];
    if p == 1 {
        return m;
    }
    for l in 0..p {
        m[(l + 1) % p][l] = log_uniform(rng, lo, hi);
    }
    for l in 0..p {
        for i in 0..p {
            if l != i && m[l][i] == 0.0 && rng.random_bool(0.5) {
                m[l][i] = log_uniform(rng, lo, hi);
            }
        }
    }
    m
}

/// Every rate log-uniform over three decades `[lo, 1000 lo]`.
pub fn random_params<R: Rng>(rng: &mut R, p: usize, n: usize, lo: f64) -> ModelParameters {
    let hi = 1000.0 * lo;
    let draw = |r: &mut R, len: usize| (0..len).map(|_| log_uniform(r, lo, hi)).collect::<Vec<_>>();
    let birth = draw(rng, p);
    let death = draw(rng, p);
    let beta_diag = (0..p).map(|_| draw(rng, n)).collect();
    let theta = (0..p).map(|_| draw(rng, n)).collect();
    let migration = random_migration(rng, p, lo, hi);
    ModelParameters {
        patches: p,
        strains: n,
        birth,
        death,
        beta_diag,
        theta,
        migration,
    }
}

/// Rates kept within one decade so that forward integration stays cheap.
pub fn moderate_params<R: Rng>(rng: &mut R, p: usize, n: usize) -> ModelParameters {
    let mut params = random_params(rng, p, n, 0.1);
    for l in 0..p {
        params.birth[l] = log_uniform(rng, 0.5, 5.0);
        params.death[l] = log_uniform(rng, 0.2, 2.0);
        for k in 0..n {
            params.beta_diag[l][k] = log_uniform(rng, 0.5, 10.0);
            params.theta[l][k] = log_uniform(rng, 0.1, 2.0);
        }
    }
    params.migration = random_migration(rng, p, 0.1, 2.0);
    params
}

/// Strictly positive state with components `10^U(-3, 1)` times the scale of
/// each patch.
pub fn random_positive_state<R: Rng>(rng: &mut R, scale: &[f64], strains: usize) -> StateVector {
    let p = scale.len();
    let mut values = Vec::with_capacity(p * (strains + 1));
    for s in scale {
        for _ in 0..=strains {
            values.push(s * 10f64.powf(rng.random_range(-3.0..1.0)));
        }
    }
    StateVector::new(p, strains, values).unwrap()
}

pub fn single_patch(birth: f64, death: f64, beta: &[f64], theta: &[f64]) -> ModelParameters {
    ModelParameters {
        patches: 1,
        strains: beta.len(),
        birth: vec![birth],
        death: vec![death],
        beta_diag: vec![beta.to_vec()],
        theta: vec![theta.to_vec()],
        migration: vec![vec![0.0]],
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
