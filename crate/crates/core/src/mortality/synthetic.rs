use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use std::fs;
use std::path::Path;

use super::lifetable::{Lifetable, RADIX};
use super::pipeline::{CovariateTable, DEFAULT_COVARIATES};
use crate::error::{FsiError, Result};
use crate::index::{normalize_identifiable, IndexParam};

/// Support of the synthetic age-at-death distributions.
pub const SYNTH_AGE_RANGE: (f64, f64) = (20.0, 110.0);

/// Affine maps from standardized covariates to plausible raw scales.
const RAW_SCALE: [(f64, f64); 5] = [(0.8, 0.08), (2500.0, 1500.0), (30000.0, 15000.0), (6.0, 3.0), (6.0, 3.5)];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub theta0: IndexParam,
    /// `θ₀'Xᵢ` on the standardized covariate scale.
    pub index: Vec<f64>,
    pub units: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SyntheticMortality {
    pub lifetables: Vec<Lifetable>,
    pub covariates: CovariateTable,
    pub truth: SyntheticTruth,
}

/// Beta shape parameters of the age-at-death distribution, rescaled to
/// `[20, 110]`, at index value `u`. Mean and concentration both vary
/// nonlinearly in `u`.
pub fn synthetic_link(u: f64) -> (f64, f64) {
    let mean = 0.6 + 0.1 * (1.6 * u).sin();
    let concentration = 10.0 + 5.0 * u * u;
    (mean * concentration, (1.0 - mean) * concentration)
}

/// Single index Wasserstein model: five correlated covariates, index
/// `θ₀'X` on the standardized scale, Beta-shaped age-at-death distribution
/// with unit-level perturbations, rounded to whole survivors.
pub fn generate_synthetic_mortality(n_units: usize, seed: u64) -> Result<SyntheticMortality> {
    if n_units < 10 {
        return Err(FsiError::InvalidInput("synthetic data needs at least 10 units".into()));
    }
    let theta0 = normalize_identifiable(&[0.6, 0.7, -0.25, 0.1, 0.2])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut raw = vec![[0.0; 5]; n_units];
    for row in raw.iter_mut() {
        let shared = z();
        row[0] = 0.6 * shared + 0.8 * z();
        row[1] = 0.5 * shared + 0.866 * z();
        row[2] = 0.3 * row[1] + 0.95 * z();
        row[3] = -0.4 * shared + 0.9 * z();
        row[4] = z();
    }
    let n = n_units as f64;
    for j in 0..5 {
        let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        for r in raw.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }

    let units: Vec<String> = (1..=n_units).map(|k| format!("U{k:02}")).collect();
    let mut index = Vec::with_capacity(n_units);
    let mut lifetables = Vec::with_capacity(n_units);
    let (lo, hi) = SYNTH_AGE_RANGE;
    for (unit, x) in units.iter().zip(&raw) {
        let u = theta0.dot(x);
        index.push(u);
        let (a, b) = synthetic_link(u);
        let jitter_a = (0.08 * z()).exp();
        let jitter_b = (0.08 * z()).exp();
        let beta = Beta::new(a * jitter_a, b * jitter_b).map_err(|e| FsiError::InvalidInput(e.to_string()))?;
        let ages: Vec<f64> = (0..=110).map(f64::from).collect();
        let survivors: Vec<f64> = ages
            .iter()
            .map(|&age| {
                if age <= lo {
                    RADIX
                } else if age >= hi {
                    0.0
                } else {
                    (RADIX * (1.0 - beta.cdf((age - lo) / (hi - lo)))).round()
                }
            })
            .collect();
        lifetables.push(Lifetable::new(unit.clone(), ages, survivors)?);
    }

    let covariates = CovariateTable {
        names: DEFAULT_COVARIATES.iter().map(|s| s.to_string()).collect(),
        units: units.clone(),
        values: raw
            .iter()
            .map(|x| x.iter().zip(RAW_SCALE).map(|(v, (c, s))| c + s * v).collect())
            .collect(),
    };
    Ok(SyntheticMortality { lifetables, covariates, truth: SyntheticTruth { seed, theta0, index, units } })
}

/// Writes `lifetables/<unit>.csv`, `covariates.csv` and `truth.json` under `dir`.
pub fn write_synthetic_mortality(data: &SyntheticMortality, dir: &Path) -> Result<()> {
    let tables = dir.join("lifetables");
    fs::create_dir_all(&tables)?;
    for lt in &data.lifetables {
        lt.write_csv(&tables.join(format!("{}.csv", lt.unit)))?;
    }
    data.covariates.write_csv(&dir.join("covariates.csv"))?;
    fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&data.truth)? + "\n")?;
    Ok(())
}
