//! Kernels and local-linear equivalent-kernel weights.
//!
//! For offsets `dᵢ = θ'(Xᵢ − x)` the weights are
//! `rᵢ = σ̂⁻² K_h(dᵢ) [μ̂₂ − μ̂₁ dᵢ]` with `μ̂_j = n⁻¹ Σ K_h(dᵢ) dᵢʲ` and
//! `σ̂² = μ̂₀μ̂₂ − μ̂₁²`, so that `n⁻¹ Σ rᵢ = 1` and `n⁻¹ Σ rᵢ Yᵢ` is the
//! local linear fit at `x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FsiError, Result};
use crate::index::IndexParam;

/// Relative floor on `σ̂² / (μ̂₀ μ̂₂)` below which a local window is degenerate.
const DEGENERATE_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    pub fn eval(self, w: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * w * w).exp() / (2.0 * PI).sqrt(),
            Kernel::Epanechnikov => {
                if w.abs() <= 1.0 {
                    0.75 * (1.0 - w * w)
                } else {
                    0.0
                }
            }
        }
    }

    /// `K_h(u) = K(u / h) / h`.
    pub fn scaled(self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }

    /// Composite Simpson integral of the kernel over its effective support.
    pub fn total_mass(self) -> f64 {
        let (lo, hi) = match self {
            Kernel::Gaussian => (-10.0, 10.0),
            Kernel::Epanechnikov => (-1.0, 1.0),
        };
        let n = 20_000;
        let step = (hi - lo) / n as f64;
        let mut sum = self.eval(lo) + self.eval(hi);
        for i in 1..n {
            let c = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += c * self.eval(lo + i as f64 * step);
        }
        sum * step / 3.0
    }
}

/// Local-linear weights at one query point.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWeights {
    /// One weight per observation; they average to one.
    pub weights: Vec<f64>,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl LocalWeights {
    /// Weights from precomputed offsets `dᵢ = uᵢ − u₀`.
    pub(crate) fn from_offsets(offsets: &[f64], h: f64, kernel: Kernel) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(FsiError::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        let n = offsets.len();
        if n < 2 {
            return Err(FsiError::InvalidInput("local weights need at least two observations".into()));
        }
        let kernel_values: Vec<f64> = offsets.iter().map(|&d| kernel.scaled(d, h)).collect();
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (&k, &d) in kernel_values.iter().zip(offsets) {
            s0 += k;
            s1 += k * d;
            s2 += k * d * d;
        }
        let nf = n as f64;
        let (mu0, mu1, mu2) = (s0 / nf, s1 / nf, s2 / nf);
        let sigma2 = mu0 * mu2 - mu1 * mu1;
        if !(sigma2 > DEGENERATE_REL * mu0 * mu2) || !sigma2.is_finite() {
            return Err(FsiError::DegenerateWindow { index: None });
        }
        let weights = kernel_values
            .iter()
            .zip(offsets)
            .map(|(&k, &d)| k * (mu2 - mu1 * d) / sigma2)
            .collect();
        Ok(LocalWeights { weights, mu0, mu1, mu2, sigma2 })
    }
}

/// Weights for a scalar predictor `u` at `u0`.
pub fn scalar_local_weights(u: &[f64], u0: f64, h: f64, kernel: Kernel) -> Result<LocalWeights> {
    let offsets: Vec<f64> = u.iter().map(|&v| v - u0).collect();
    LocalWeights::from_offsets(&offsets, h, kernel)
}

/// Weights for the projected predictor `θ'X` at `θ'x`.
pub fn projected_local_weights(
    x: &DMatrix<f64>,
    at: &[f64],
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<LocalWeights> {
    check_query(x, at)?;
    if theta.dim() != x.ncols() {
        return Err(FsiError::InvalidInput(format!(
            "index has dimension {}, covariates have {} columns",
            theta.dim(),
            x.ncols()
        )));
    }
    let t = theta.as_slice();
    let offsets: Vec<f64> = x
        .row_iter()
        .map(|row| row.iter().zip(at).zip(t).map(|((xi, xq), ti)| ti * (xi - xq)).sum())
        .collect();
    LocalWeights::from_offsets(&offsets, h, kernel)
}

/// Equivalent-kernel weights of multivariate local linear regression with a
/// product kernel, scaled to average to one.
pub fn multivariate_local_weights(x: &DMatrix<f64>, at: &[f64], h: f64, kernel: Kernel) -> Result<Vec<f64>> {
    check_query(x, at)?;
    let (n, p) = x.shape();
    if n <= p + 1 {
        return Err(FsiError::InvalidInput(format!(
            "multivariate local linear weights need n > p + 1 (n = {n}, p = {p})"
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(FsiError::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }

    let mut kappa = Vec::with_capacity(n);
    let mut design = DMatrix::<f64>::zeros(n, p + 1);
    for (i, row) in x.row_iter().enumerate() {
        let mut k = 1.0;
        design[(i, 0)] = 1.0;
        for j in 0..p {
            let d = row[j] - at[j];
            k *= kernel.scaled(d, h);
            design[(i, j + 1)] = d;
        }
        kappa.push(k);
    }

    let mut gram = DMatrix::<f64>::zeros(p + 1, p + 1);
    for (i, &k) in kappa.iter().enumerate() {
        if k == 0.0 {
            continue;
        }
        let z = design.row(i);
        gram += z.transpose() * z * k;
    }
    let diag: Vec<f64> = (0..=p).map(|j| gram[(j, j)]).collect();
    if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(FsiError::DegenerateWindow { index: None });
    }
    let scaled = DMatrix::from_fn(p + 1, p + 1, |a, b| gram[(a, b)] / (diag[a] * diag[b]).sqrt());
    let eig = scaled.symmetric_eigenvalues();
    let (min, max) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(min > DEGENERATE_REL * max) {
        return Err(FsiError::DegenerateWindow { index: None });
    }
    let chol = gram.cholesky().ok_or(FsiError::DegenerateWindow { index: None })?;
    let mut e1 = DVector::<f64>::zeros(p + 1);
    e1[0] = 1.0;
    let a = chol.solve(&e1);

    let nf = n as f64;
    Ok((0..n)
        .map(|i| nf * kappa[i] * design.row(i).iter().zip(a.iter()).map(|(z, c)| z * c).sum::<f64>())
        .collect())
}

fn check_query(x: &DMatrix<f64>, at: &[f64]) -> Result<()> {
    if at.len() != x.ncols() {
        return Err(FsiError::InvalidInput(format!(
            "query point has {} entries, covariates have {} columns",
            at.len(),
            x.ncols()
        )));
    }
    Ok(())
}
