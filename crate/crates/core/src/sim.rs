//! Sphere-valued simulation: data generation, estimation error metrics and a
//! replicate runner comparing the single index fit with multivariate local
//! Fréchet regression across a bandwidth grid.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{FsiError, Result};
use crate::fsi::{fit_at_bandwidth, FsiConfig};
use crate::geometry::{sphere_distance, sphere_exp, Sphere, SpherePoint};
use crate::index::{normalize_identifiable, IndexParam};
use crate::regression::{multivariate_local_frechet_at, RegressionDataset};

/// Bandwidths used when a simulation is run without an explicit grid.
pub const DEFAULT_SIM_GRID: [f64; 10] = [0.1, 0.125, 0.16, 0.2, 0.25, 0.32, 0.4, 0.5, 0.63, 0.8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub n: usize,
    pub p: usize,
    pub sigma2: f64,
    pub replicates: usize,
    pub theta0: IndexParam,
    pub seed: u64,
}

impl SimSetting {
    /// Setting with `θ₀ ∝ (1, …, 1)`.
    pub fn new(n: usize, p: usize, sigma2: f64, replicates: usize, seed: u64) -> Result<Self> {
        if p < 2 {
            return Err(FsiError::ScalarIndex);
        }
        let theta0 = normalize_identifiable(&vec![1.0; p])?;
        let setting = SimSetting { n, p, sigma2, replicates, theta0, seed };
        setting.validate()?;
        Ok(setting)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(FsiError::ScalarIndex);
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(FsiError::InvalidInput(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.replicates == 0 {
            return Err(FsiError::InvalidInput("replicates must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(FsiError::InvalidInput(format!("n must be at least 10, got {}", self.n)));
        }
        if self.theta0.dim() != self.p {
            return Err(FsiError::InvalidInput("theta0 dimension does not match p".into()));
        }
        Ok(())
    }

    fn rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        rng
    }
}

/// `m(U) = (√(1 − U²/p) cos(πU/√p), √(1 − U²/p) sin(πU/√p), U/√p)`.
pub fn conditional_mean(u: f64, p: usize) -> SpherePoint {
    let s = u / (p as f64).sqrt();
    let r = (1.0 - s * s).max(0.0).sqrt();
    SpherePoint::normalize(Vector3::new(r * (PI * s).cos(), r * (PI * s).sin(), s))
        .expect("conditional mean has unit norm")
}

/// Orthonormal basis of the tangent plane at `m`, from the two coordinate
/// axes least aligned with it.
fn tangent_basis(m: &SpherePoint) -> (Vector3<f64>, Vector3<f64>) {
    let v = m.as_vector();
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(2);
    for &k in &axes[..2] {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        let mut w = e - v * v[k];
        for b in &basis {
            let b: &Vector3<f64> = b;
            w -= b * b.dot(&w);
        }
        basis.push(w.normalize());
    }
    (basis[0], basis[1])
}

#[derive(Clone, Debug)]
pub struct SimDataset {
    pub data: RegressionDataset<Sphere>,
    /// `m(Xᵢ)` for every observation.
    pub truth: Vec<SpherePoint>,
    pub index: Vec<f64>,
}

/// One replicate of the sphere simulation. Each replicate has its own
/// random stream, so the result does not depend on execution order.
pub fn generate_sphere_dataset(setting: &SimSetting, replicate: u64) -> Result<SimDataset> {
    setting.validate()?;
    let mut rng = setting.rng(replicate);
    generate_with(setting, &mut rng)
}

fn generate_with(setting: &SimSetting, rng: &mut ChaCha8Rng) -> Result<SimDataset> {
    let (n, p) = (setting.n, setting.p);
    let scale = (p as f64).sqrt();
    let x = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.random_range(-1.0..1.0) / scale).collect::<Vec<f64>>());
    let noise = Normal::new(0.0, setting.sigma2.sqrt()).map_err(|e| FsiError::InvalidInput(e.to_string()))?;
    let mut truth = Vec::with_capacity(n);
    let mut index = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let u = setting.theta0.dot(&row);
        let m = conditional_mean(u, p);
        let (v1, v2) = tangent_basis(&m);
        let z = v1 * noise.sample(rng) + v2 * noise.sample(rng);
        y.push(sphere_exp(&m, &z)?);
        truth.push(m);
        index.push(u);
    }
    let data = RegressionDataset::new(x, y, Sphere::new())?;
    Ok(SimDataset { data, truth, index })
}

/// `arccos(|θ₀'θ̂|)²`.
pub fn se_theta(theta_hat: &IndexParam, theta0: &IndexParam) -> f64 {
    let c: f64 = theta_hat.as_slice().iter().zip(theta0.as_slice()).map(|(a, b)| a * b).sum();
    c.abs().min(1.0).acos().powi(2)
}

/// `n⁻¹ Σ d²(m(Xᵢ), Ŷᵢ)` with the geodesic distance.
pub fn msee(fitted: &[SpherePoint], truth: &[SpherePoint]) -> Result<f64> {
    if fitted.len() != truth.len() {
        return Err(FsiError::InvalidInput(format!(
            "{} fitted values for {} true values",
            fitted.len(),
            truth.len()
        )));
    }
    if fitted.is_empty() {
        return Err(FsiError::Empty("fitted values"));
    }
    let total: f64 = fitted.iter().zip(truth).map(|(a, b)| sphere_distance(a, b).powi(2)).sum();
    Ok(total / fitted.len() as f64)
}

/// Metrics of one replicate at one bandwidth; `None` where the fit failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub setting: usize,
    pub replicate: usize,
    pub h: f64,
    pub theta_hat: Option<Vec<f64>>,
    pub se: Option<f64>,
    pub msee_fsi: Option<f64>,
    pub msee_mlf: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (divisor `count − 1`; 0 for a single value).
    pub sd: f64,
    pub h: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SettingSummary {
    pub setting: usize,
    pub n: usize,
    pub p: usize,
    pub sigma2: f64,
    pub replicates: usize,
    /// Replicate-bandwidth pairs where some metric could not be computed.
    pub failures: usize,
    pub se: Option<MetricSummary>,
    pub msee_fsi: Option<MetricSummary>,
    pub msee_mlf: Option<MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub settings: Vec<SimSetting>,
    pub grid: Vec<f64>,
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<SettingSummary>,
}

impl SimReport {
    pub fn total_failures(&self) -> usize {
        self.summaries.iter().map(|s| s.failures).sum()
    }
}

fn replicate_records(
    setting_id: usize,
    setting: &SimSetting,
    replicate: usize,
    grid: &[f64],
    config: &FsiConfig,
) -> Vec<ReplicateRecord> {
    let mut rng = setting.rng(replicate as u64);
    let sim = match generate_with(setting, &mut rng) {
        Ok(sim) => sim,
        Err(e) => {
            return grid
                .iter()
                .map(|&h| ReplicateRecord {
                    setting: setting_id,
                    replicate,
                    h,
                    theta_hat: None,
                    se: None,
                    msee_fsi: None,
                    msee_mlf: None,
                    error: Some(e.to_string()),
                })
                .collect()
        }
    };
    let config = FsiConfig { seed: rng.random(), ..config.clone() };
    grid.par_iter()
        .map(|&h| {
            let mut errors = Vec::new();
            let fsi = fit_at_bandwidth(&sim.data, h, &config).map_err(|e| errors.push(format!("fsi: {e}"))).ok();
            let msee_fsi = fsi.as_ref().and_then(|fit| {
                let points: Vec<SpherePoint> = fit.fitted.iter().map(|f| f.point).collect();
                msee(&points, &sim.truth).ok()
            });
            let mlf: std::result::Result<Vec<SpherePoint>, FsiError> = (0..sim.data.n())
                .map(|i| multivariate_local_frechet_at(&sim.data, &sim.data.row(i), h, config.kernel).map(|f| f.point))
                .collect();
            let msee_mlf = match mlf {
                Ok(points) => msee(&points, &sim.truth).ok(),
                Err(e) => {
                    errors.push(format!("mlf: {e}"));
                    None
                }
            };
            ReplicateRecord {
                setting: setting_id,
                replicate,
                h,
                theta_hat: fsi.as_ref().map(|f| f.theta.as_slice().to_vec()),
                se: fsi.as_ref().map(|f| se_theta(&f.theta, &setting.theta0)),
                msee_fsi,
                msee_mlf,
                error: if errors.is_empty() { None } else { Some(errors.join("; ")) },
            }
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Averages a metric per bandwidth and reports it at the bandwidth with the
/// smallest average (ties go to the smaller bandwidth).
fn summarize_metric(records: &[&ReplicateRecord], grid: &[f64], metric: impl Fn(&ReplicateRecord) -> Option<f64>) -> Option<MetricSummary> {
    let mut best: Option<MetricSummary> = None;
    for &h in grid {
        let values: Vec<f64> = records.iter().filter(|r| r.h == h).filter_map(|r| metric(r)).collect();
        if values.is_empty() {
            continue;
        }
        let (mean, sd) = mean_sd(&values);
        if best.is_none_or(|b| mean < b.mean) {
            best = Some(MetricSummary { mean, sd, h, count: values.len() });
        }
    }
    best
}

/// Runs every replicate of every setting at every grid bandwidth. FSI is fit
/// per bandwidth without cross-validation, with fitted values at `h̃ = h`.
pub fn run_simulation(settings: &[SimSetting], grid: &[f64], config: &FsiConfig) -> Result<SimReport> {
    if grid.is_empty() {
        return Err(FsiError::Empty("bandwidth grid"));
    }
    if let Some(bad) = grid.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
        return Err(FsiError::InvalidInput(format!("bandwidth {bad} is not positive")));
    }
    for s in settings {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> = settings
        .iter()
        .enumerate()
        .flat_map(|(k, s)| (0..s.replicates).map(move |r| (k, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(k, r)| replicate_records(k, &settings[k], r, grid, config))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let summaries = settings
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.setting == k).collect();
            SettingSummary {
                setting: k,
                n: s.n,
                p: s.p,
                sigma2: s.sigma2,
                replicates: s.replicates,
                failures: mine.iter().filter(|r| r.error.is_some()).count(),
                se: summarize_metric(&mine, grid, |r| r.se),
                msee_fsi: summarize_metric(&mine, grid, |r| r.msee_fsi),
                msee_mlf: summarize_metric(&mine, grid, |r| r.msee_mlf),
            }
        })
        .collect();
    Ok(SimReport { settings: settings.to_vec(), grid: grid.to_vec(), records, summaries })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// One row per (setting, replicate, bandwidth).
pub fn write_replicates_csv<W: Write>(report: &SimReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "replicate", "h", "se", "msee_fsi", "msee_mlf", "theta_hat", "error"])?;
    for r in &report.records {
        let theta = r
            .theta_hat
            .as_ref()
            .map(|t| t.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" "))
            .unwrap_or_default();
        w.write_record([
            r.setting.to_string(),
            r.replicate.to_string(),
            format!("{}", r.h),
            opt(r.se),
            opt(r.msee_fsi),
            opt(r.msee_mlf),
            theta,
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per setting: each metric's average, standard deviation and
/// minimizing bandwidth.
pub fn write_summary_csv<W: Write>(report: &SimReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "setting", "p", "n", "sigma2", "replicates", "failures", "se_avg", "se_sd", "se_h", "msee_fsi_avg",
        "msee_fsi_sd", "msee_fsi_h", "msee_mlf_avg", "msee_mlf_sd", "msee_mlf_h",
    ])?;
    for s in &report.summaries {
        let mut row = vec![
            s.setting.to_string(),
            s.p.to_string(),
            s.n.to_string(),
            format!("{}", s.sigma2),
            s.replicates.to_string(),
            s.failures.to_string(),
        ];
        for m in [s.se, s.msee_fsi, s.msee_mlf] {
            match m {
                Some(m) => row.extend([format!("{:.17e}", m.mean), format!("{:.17e}", m.sd), format!("{}", m.h)]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `x1..xp,y1,y2,y3,m1,m2,m3` for one generated replicate.
pub fn write_dataset_csv<W: Write>(sim: &SimDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = sim.data.p();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.extend(["y1", "y2", "y3", "m1", "m2", "m3"].map(String::from));
    w.write_record(&header)?;
    for i in 0..sim.data.n() {
        let mut row: Vec<String> = sim.data.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        row.extend(sim.data.y()[i].coords().iter().map(|v| format!("{v:.17e}")));
        row.extend(sim.truth[i].coords().iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
