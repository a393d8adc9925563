//! Shared helpers for integration tests: the benchmark system, independent
//! numerical oracles, and samplers over the spectral uncertainty region.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use rrl_core::estimation::UncertainModel;
use rrl_core::linalg::{symmetrize, sym_eigenvalues};
use rrl_core::rng::standard_normal_vector;
use rrl_core::simulation::{CostSpec, LinearSystem};

/// The three-state / two-input benchmark system used across the experiments.
pub fn benchmark_system() -> LinearSystem<f64> {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[1.1, 0.5, 0.0, 0.0, 0.9, 0.1, 0.0, -0.2, 0.8],
    );
    let b = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.1, 0.0, 0.0, 2.0]);
    LinearSystem::new(a, b, 0.5).unwrap()
}

pub fn benchmark_cost() -> CostSpec<f64> {
    let q = DMatrix::identity(3, 3);
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 1.0]));
    CostSpec::new(q, r).unwrap()
}

/// Stationary covariance of x' = A x + w, cov(w) = noise, by fixed-point
/// iteration; independent of the SDP machinery.
pub fn dlyap_iter(a: &DMatrix<f64>, noise: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for _ in 0..200_000 {
        let next = a * &w * a.transpose() + noise;
        let delta = (&next - &w).amax();
        w = next;
        if delta < 1e-13 {
            break;
        }
    }
    symmetrize(&w)
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Draw a uniform-direction perturbation X with X' D X ⪯ I and return the
/// perturbed parameters (A, B) = [Â B̂] − X'.
pub fn sample_in_spectral_region<R: Rng>(
    model: &UncertainModel<f64>,
    rng: &mut R,
    radius: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n_x = model.state_dim();
    let n_u = model.input_dim();
    let d = n_x + n_u;
    let u = DMatrix::from_fn(d, n_x, |_, _| standard_normal_vector::<f64, R>(rng, 1)[0]);
    let gram = u.transpose() * &u;
    let lam_max = sym_eigenvalues(&gram)[n_x - 1].max(1e-300);
    let x = inv_sqrt(&model.d) * u * (radius / lam_max.sqrt());
    let xt = x.transpose();
    let a = &model.a_hat - xt.columns(0, n_x).into_owned();
    let b = &model.b_hat - xt.columns(n_x, n_u).into_owned();
    (a, b)
}

/// Standard error of the mean of an autocorrelated series by batch means.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let n = series.len() / batches;
    assert!(n >= 1);
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * n..(b + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}
