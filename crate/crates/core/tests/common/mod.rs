//! Independent re-implementations used as test oracles.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Local-linear equivalent-kernel weights written out term by term.
pub fn literal_weights(u: &[f64], u0: f64, h: f64) -> Vec<f64> {
    let n = u.len() as f64;
    let k: Vec<f64> = u.iter().map(|v| gauss((v - u0) / h) / h).collect();
    let mut mu = [0.0; 3];
    for (v, kv) in u.iter().zip(&k) {
        let d = v - u0;
        mu[0] += kv / n;
        mu[1] += kv * d / n;
        mu[2] += kv * d * d / n;
    }
    let s2 = mu[0] * mu[2] - mu[1] * mu[1];
    u.iter().zip(&k).map(|(v, kv)| kv * (mu[2] - mu[1] * (v - u0)) / s2).collect()
}

/// Intercept of the weighted least-squares fit of `y` on `[1, z]`.
pub fn wls_intercept(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> f64 {
    let (n, q) = z.shape();
    let a = DMatrix::from_fn(n, q + 1, |i, j| w[i].sqrt() * if j == 0 { 1.0 } else { z[(i, j - 1)] });
    let b = DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&rhs).expect("full rank")[0]
}

/// Scalar local-linear fit at `u0` with a Gaussian kernel.
pub fn local_linear(u: &[f64], y: &[f64], u0: f64, h: f64) -> f64 {
    let z = DMatrix::from_fn(u.len(), 1, |i, _| u[i] - u0);
    let w: Vec<f64> = u.iter().map(|v| gauss((v - u0) / h)).collect();
    wls_intercept(&z, y, &w)
}
