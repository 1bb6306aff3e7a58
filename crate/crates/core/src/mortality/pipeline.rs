use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::lifetable::{lifetable_to_quantile, Lifetable, Smoothing};
use super::metrics::{frechet_r2, mspe_splits, FsiModel, GlobalFrechetModel, LocalFrechetModel, MspeReport, SplitModel};
use crate::error::{FsiError, Result};
use crate::fsi::{auto_bandwidth_grid, fit_fsi, loocv_bandwidth, predict, BandwidthGrid, FsiConfig, FsiFit, LoocvModel, StartDesign};
use crate::geometry::{QuantileGrid, Wasserstein};
use crate::index::IndexParam;
use crate::regression::{local_frechet_at, GlobalFrechet, RegressionDataset, Standardization};

pub const DEFAULT_COVARIATES: [&str; 5] = ["hdi", "hce", "gdpc", "im", "co2e"];

/// Covariate values per unit, columns in `names` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub units: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CovariateTable {
    /// Reads a CSV with a `unit` column and one column per requested name.
    /// Rows with a missing or unparsable value are dropped with a warning.
    pub fn read_csv(path: &Path, names: &[String]) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| FsiError::InvalidInput(format!("covariates file has no `{name}` column")))
        };
        let unit_col = find("unit")?;
        let cols: Vec<usize> = names.iter().map(|n| find(n)).collect::<Result<_>>()?;
        let mut units = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let unit = record.get(unit_col).unwrap_or("").trim().to_string();
            let row: Option<Vec<f64>> = cols
                .iter()
                .map(|&c| record.get(c).and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite()))
                .collect();
            match row {
                Some(row) if !unit.is_empty() => {
                    if units.contains(&unit) {
                        return Err(FsiError::InvalidInput(format!("unit `{unit}` appears twice in the covariates file")));
                    }
                    units.push(unit);
                    values.push(row);
                }
                _ => log::warn!("dropping unit `{unit}`: missing covariate values"),
            }
        }
        Ok(CovariateTable { names: names.to_vec(), units, values })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["unit".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (unit, row) in self.units.iter().zip(&self.values) {
            let mut rec = vec![unit.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MortalityConfig {
    pub covariates: Vec<String>,
    pub age_range: (f64, f64),
    /// Number of equispaced probability levels, including 0 and 1.
    pub grid_size: usize,
    pub smoothing: Smoothing,
    pub fsi: FsiConfig,
    /// Size of the automatic bandwidth grid for each single-covariate fit.
    pub lf_grid_count: usize,
    pub splits: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Covariate values per curve in the what-if output.
    pub whatif_points: usize,
}

impl Default for MortalityConfig {
    fn default() -> Self {
        MortalityConfig {
            covariates: DEFAULT_COVARIATES.iter().map(|s| s.to_string()).collect(),
            age_range: (20.0, 110.0),
            grid_size: 101,
            smoothing: Smoothing::Silverman,
            fsi: FsiConfig {
                starts: StartDesign::Lattice { per_axis: 3 },
                bandwidths: BandwidthGrid::Auto { count: 10 },
                ..FsiConfig::default()
            },
            lf_grid_count: 10,
            splits: 30,
            test_size: 10,
            seed: 0,
            whatif_points: 21,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRow {
    pub model: String,
    pub h: Option<f64>,
    pub r2: f64,
    pub mspe_mean: Option<f64>,
    pub mspe_sd: Option<f64>,
    pub mspe_failures: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhatIfRow {
    pub covariate: String,
    pub standardized: f64,
    pub raw: f64,
    pub quantiles: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MortalityReport {
    pub units: Vec<String>,
    pub covariates: Vec<String>,
    pub grid: Arc<[f64]>,
    pub observed: Vec<QuantileGrid>,
    pub standardization: Standardization,
    pub fsi: FsiFit<QuantileGrid>,
    pub rows: Vec<ModelRow>,
    pub mspe: Option<MspeReport>,
    pub whatif: Vec<WhatIfRow>,
}

/// Lifetables for every unit in `units` found as `<unit>.csv` in `dir`.
/// Units without a file are dropped with a warning; malformed files abort.
pub fn read_lifetables(dir: &Path, units: &[String]) -> Result<BTreeMap<String, Lifetable>> {
    if !dir.is_dir() {
        return Err(FsiError::InvalidInput(format!("lifetable directory {} not found", dir.display())));
    }
    let mut out = BTreeMap::new();
    for unit in units {
        let path = dir.join(format!("{unit}.csv"));
        if !path.is_file() {
            log::warn!("dropping unit `{unit}`: no lifetable at {}", path.display());
            continue;
        }
        out.insert(unit.clone(), Lifetable::read_csv(&path, unit.clone())?);
    }
    Ok(out)
}

/// Reads inputs, builds quantile functions, and fits and compares the
/// global, single-covariate local and single index models.
pub fn run_mortality_pipeline(lifetable_dir: &Path, covariates_file: &Path, config: &MortalityConfig) -> Result<MortalityReport> {
    let table = CovariateTable::read_csv(covariates_file, &config.covariates)?;
    let lifetables = read_lifetables(lifetable_dir, &table.units)?;
    let (units, rows): (Vec<String>, Vec<Vec<f64>>) = table
        .units
        .iter()
        .zip(&table.values)
        .filter(|(u, _)| lifetables.contains_key(*u))
        .map(|(u, r)| (u.clone(), r.clone()))
        .unzip();
    if units.len() < 10 {
        return Err(FsiError::InvalidInput(format!("only {} usable units; at least 10 are required", units.len())));
    }
    let grid = QuantileGrid::uniform_grid(config.grid_size);
    let observed: Vec<QuantileGrid> = units
        .iter()
        .map(|u| lifetable_to_quantile(&lifetables[u], config.age_range, &grid, config.smoothing))
        .collect::<Result<_>>()?;
    let p = config.covariates.len();
    let x = DMatrix::from_row_iterator(units.len(), p, rows.iter().flatten().copied());
    run_models(units, config, grid, observed, x)
}

fn run_models(
    units: Vec<String>,
    config: &MortalityConfig,
    grid: Arc<[f64]>,
    observed: Vec<QuantileGrid>,
    x: DMatrix<f64>,
) -> Result<MortalityReport> {
    let space = Wasserstein::new(grid.clone())?;
    let data = RegressionDataset::new(x, observed.clone(), space.clone())?.standardized()?;
    let standardization = data.standardization().cloned().expect("standardized");
    let (n, p) = (data.n(), data.p());
    let kernel = config.fsi.kernel;

    // Global Fréchet is computed first: it also rejects singular designs.
    let gf = GlobalFrechet::new(data.x())?;
    let gf_fitted: Vec<QuantileGrid> = (0..n).map(|i| gf.fit_at(&data, &data.row(i)).map(|f| f.point)).collect::<Result<_>>()?;

    let lf: Vec<(f64, Vec<QuantileGrid>)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let theta = IndexParam::axis(p, j);
            let column = DMatrix::from_iterator(n, 1, data.x().column(j).iter().copied());
            let lf_grid = auto_bandwidth_grid(&column, config.lf_grid_count)?;
            let h = loocv_bandwidth(&data, LoocvModel::Projected(&theta), &lf_grid, kernel)?.h;
            let fitted = (0..n)
                .map(|i| local_frechet_at(&data, &data.row(i), &theta, h, kernel).map(|f| f.point))
                .collect::<Result<Vec<_>>>()?;
            Ok((h, fitted))
        })
        .collect::<Result<_>>()?;

    let fsi = fit_fsi(&data, &config.fsi)?;
    let fsi_fitted: Vec<QuantileGrid> = fsi.fitted.iter().map(|f| f.point.clone()).collect();

    let mut rows = vec![ModelRow {
        model: "GF".into(),
        h: None,
        r2: frechet_r2(&space, data.y(), &gf_fitted)?,
        mspe_mean: None,
        mspe_sd: None,
        mspe_failures: None,
    }];
    for (j, (h, fitted)) in lf.iter().enumerate() {
        rows.push(ModelRow {
            model: format!("LF_{}", config.covariates[j]),
            h: Some(*h),
            r2: frechet_r2(&space, data.y(), fitted)?,
            mspe_mean: None,
            mspe_sd: None,
            mspe_failures: None,
        });
    }
    rows.push(ModelRow {
        model: "FSI".into(),
        h: Some(fsi.h_star),
        r2: frechet_r2(&space, data.y(), &fsi_fitted)?,
        mspe_mean: None,
        mspe_sd: None,
        mspe_failures: None,
    });

    let mspe = if config.splits > 0 {
        let lf_models: Vec<LocalFrechetModel> = lf
            .iter()
            .enumerate()
            .map(|(j, (h, _))| LocalFrechetModel { label: format!("LF_{}", config.covariates[j]), column: j, h: *h, kernel })
            .collect();
        let fsi_model = FsiModel { h: fsi.h_star, config: config.fsi.clone() };
        let mut models: Vec<&dyn SplitModel<Wasserstein>> = vec![&GlobalFrechetModel];
        models.extend(lf_models.iter().map(|m| m as &dyn SplitModel<Wasserstein>));
        models.push(&fsi_model);
        let report = mspe_splits(&data, &models, config.splits, config.test_size, config.seed)?;
        for (row, summary) in rows.iter_mut().zip(&report.summaries) {
            row.mspe_mean = summary.mean;
            row.mspe_sd = summary.sd;
            row.mspe_failures = Some(summary.failures);
        }
        Some(report)
    } else {
        None
    };

    let whatif = what_if(&data, &fsi, &standardization, &config.covariates, config.whatif_points)?;
    Ok(MortalityReport {
        units,
        covariates: config.covariates.clone(),
        grid,
        observed,
        standardization,
        fsi,
        rows,
        mspe,
        whatif,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// FSI predictions while one covariate sweeps its observed range and the
/// others stay at their medians.
fn what_if(
    data: &RegressionDataset<Wasserstein>,
    fit: &FsiFit<QuantileGrid>,
    standardization: &Standardization,
    names: &[String],
    points: usize,
) -> Result<Vec<WhatIfRow>> {
    if points == 0 {
        return Ok(Vec::new());
    }
    let p = data.p();
    let medians: Vec<f64> = (0..p).map(|j| median(&mut data.x().column(j).iter().copied().collect::<Vec<_>>())).collect();
    let mut rows = Vec::new();
    for j in 0..p {
        let col = data.x().column(j);
        let (lo, hi) = (col.min(), col.max());
        for k in 0..points {
            let v = if points == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 };
            let mut x = medians.clone();
            x[j] = v;
            let pred = predict(fit, data, &x)?;
            rows.push(WhatIfRow {
                covariate: names[j].clone(),
                standardized: v,
                raw: standardization.mean[j] + standardization.sd[j] * v,
                quantiles: pred.point.values().to_vec(),
            });
        }
    }
    Ok(rows)
}

fn level_headers(grid: &[f64]) -> Vec<String> {
    grid.iter().map(|q| format!("q{q:.4}")).collect()
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Writes the comparison table, the index estimate, fitted quantiles, split
/// errors and what-if curves under `out`. Returns the paths written.
pub fn write_mortality_outputs(report: &MortalityReport, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let path = out.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let with_mspe = report.mspe.is_some();
    let mut header = vec!["model", "h", "r2"];
    if with_mspe {
        header.extend(["mspe_mean", "mspe_sd", "mspe_failures"]);
    }
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.model.clone(), row.h.map(fmt).unwrap_or_default(), fmt(row.r2)];
        if with_mspe {
            rec.push(row.mspe_mean.map(fmt).unwrap_or_default());
            rec.push(row.mspe_sd.map(fmt).unwrap_or_default());
            rec.push(row.mspe_failures.map(|f| f.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    written.push(path);

    let path = out.join("theta_hat.json");
    let json = serde_json::json!({
        "covariates": report.covariates,
        "theta_hat": report.fsi.theta_hat,
        "h_star": report.fsi.h_star,
        "criterion": report.fsi.criterion,
        "standardization": { "mean": report.standardization.mean, "sd": report.standardization.sd },
        "bandwidths": report.fsi.bandwidths,
    });
    fs::write(&path, serde_json::to_string_pretty(&json)? + "\n")?;
    written.push(path);

    let path = out.join("fitted_quantiles.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["unit".to_string(), "kind".to_string()];
    header.extend(level_headers(&report.grid));
    w.write_record(&header)?;
    for (k, unit) in report.units.iter().enumerate() {
        for (kind, q) in [("observed", &report.observed[k]), ("fsi", &report.fsi.fitted[k].point)] {
            let mut rec = vec![unit.clone(), kind.to_string()];
            rec.extend(q.values().iter().map(|v| fmt(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = out.join("splits.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["split", "model", "mspe", "test_units", "error"])?;
    if let Some(mspe) = &report.mspe {
        for r in &mspe.records {
            let test: Vec<&str> = mspe.test_sets[r.split].iter().map(|&i| report.units[i].as_str()).collect();
            w.write_record([
                r.split.to_string(),
                r.model.clone(),
                r.mspe.map(fmt).unwrap_or_default(),
                test.join(" "),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = out.join("whatif.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["covariate".to_string(), "standardized".to_string(), "raw".to_string()];
    header.extend(level_headers(&report.grid));
    w.write_record(&header)?;
    for r in &report.whatif {
        let mut rec = vec![r.covariate.clone(), fmt(r.standardized), fmt(r.raw)];
        rec.extend(r.quantiles.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}
