mod common;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strain_cascade_core::linalg::DEFAULT_EIGEN_TOL;
use strain_cascade_core::{stability_modulus, SquareMatrix};

fn dense_modulus(l: &SquareMatrix) -> f64 {
    let n = l.order();
    let m = DMatrix::from_row_slice(n, n, l.entries());
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn agrees_with_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let order = rng.random_range(1..=6);
        let m = common::random_migration(&mut rng, order, 0.01, 10.0);
        let mut l = SquareMatrix::from_rows(&m).unwrap();
        for i in 0..order {
            l[(i, i)] = rng.random_range(-10.0..10.0);
        }
        let ours = stability_modulus(&l, DEFAULT_EIGEN_TOL).unwrap();
        let reference = dense_modulus(&l);
        let scale = l.norm_inf().max(1.0);
        assert!(
            (ours.modulus - reference).abs() <= 1e-10 * scale,
            "{} vs {} for {:?}",
            ours.modulus,
            reference,
            l.to_rows()
        );
        assert!(ours.eigenvector.iter().all(|&v| v > 0.0));
        assert!(ours.modulus <= l.gershgorin_bound() + 1e-12 * scale);
    }
}

#[test]
fn threshold_matrices_of_random_instances() {
    use strain_cascade_core::cascade::{threshold_matrix, total_population_limit, ReductionCoefficients};
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let p = rng.random_range(2..=4);
        let params = common::random_params(&mut rng, p, 2, 0.01);
        let coeffs = ReductionCoefficients::initial(&params);
        let n_star = total_population_limit(&coeffs, &params.migration).unwrap();
        let mk = threshold_matrix(1, &coeffs, &n_star, &params).unwrap();
        let s = stability_modulus(&mk, DEFAULT_EIGEN_TOL).unwrap().modulus;
        let scale = mk.norm_inf().max(1.0);
        assert!((s - dense_modulus(&mk)).abs() <= 1e-10 * scale);
    }
}
