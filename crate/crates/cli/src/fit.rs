//! Generic single index fit on a user CSV file.

use fsi_core::fsi::{fit_fsi, FsiConfig, FsiFit, StartTrace};
use fsi_core::{Euclidean, MetricSpace, QuantileGrid, RegressionDataset, Sphere, SpherePoint, Wasserstein};
use nalgebra::DMatrix;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Sphere,
    Wasserstein,
    Euclidean,
}

/// Covariate columns `x1, x2, …` and geometry-specific response columns.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, CliError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::input(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::input(e.to_string()))?;
            let row = record
                .iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::input(format!("row {}: cannot parse `{v}` as a number", line + 1)))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }

    fn numbered(&self, prefix: &str) -> Vec<usize> {
        let mut cols: Vec<(usize, usize)> = self
            .headers
            .iter()
            .enumerate()
            .filter_map(|(k, h)| h.strip_prefix(prefix).and_then(|rest| rest.parse::<usize>().ok()).map(|j| (j, k)))
            .collect();
        cols.sort_unstable();
        cols.into_iter().map(|(_, k)| k).collect()
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(format!("missing required column `{name}`")))
    }

    fn design(&self) -> Result<DMatrix<f64>, CliError> {
        let cols = self.numbered("x");
        if cols.is_empty() {
            return Err(CliError::input("missing required covariate columns `x1`, `x2`, …"));
        }
        Ok(DMatrix::from_fn(self.rows.len(), cols.len(), |i, j| self.rows[i][cols[j]]))
    }
}

trait CsvPoint: Sized {
    fn fields(&self) -> Vec<f64>;
}

impl CsvPoint for f64 {
    fn fields(&self) -> Vec<f64> {
        vec![*self]
    }
}

impl CsvPoint for SpherePoint {
    fn fields(&self) -> Vec<f64> {
        self.coords().to_vec()
    }
}

impl CsvPoint for QuantileGrid {
    fn fields(&self) -> Vec<f64> {
        self.values().to_vec()
    }
}

pub struct FitOutcome {
    pub outputs: Vec<PathBuf>,
}

pub fn run(geometry: Geometry, data: &Path, config: &FsiConfig, standardize: bool, out: &Path) -> Result<FitOutcome, CliError> {
    let table = Table::read(data)?;
    let x = table.design()?;
    match geometry {
        Geometry::Euclidean => {
            let col = table.column("y")?;
            let y = table.rows.iter().map(|r| r[col]).collect();
            fit_and_write(RegressionDataset::new(x, y, Euclidean)?, config, standardize, out, &["y".into()])
        }
        Geometry::Sphere => {
            let cols = [table.column("y1")?, table.column("y2")?, table.column("y3")?];
            let y = table
                .rows
                .iter()
                .map(|r| SpherePoint::new(r[cols[0]], r[cols[1]], r[cols[2]]))
                .collect::<Result<Vec<_>, _>>()?;
            let names = ["y1", "y2", "y3"].map(String::from);
            fit_and_write(RegressionDataset::new(x, y, Sphere::new())?, config, standardize, out, &names)
        }
        Geometry::Wasserstein => {
            let cols = table.numbered("q");
            if cols.len() < 2 {
                return Err(CliError::input("wasserstein responses need quantile columns `q1`, `q2`, … (at least two)"));
            }
            let grid = QuantileGrid::uniform_grid(cols.len());
            let y = table
                .rows
                .iter()
                .map(|r| QuantileGrid::new(grid.clone(), cols.iter().map(|&c| r[c]).collect()))
                .collect::<Result<Vec<_>, _>>()?;
            let names: Vec<String> = cols.iter().map(|&c| table.headers[c].clone()).collect();
            fit_and_write(RegressionDataset::new(x, y, Wasserstein::new(grid)?)?, config, standardize, out, &names)
        }
    }
}

fn fit_and_write<S>(
    data: RegressionDataset<S>,
    config: &FsiConfig,
    standardize: bool,
    out: &Path,
    response_names: &[String],
) -> Result<FitOutcome, CliError>
where
    S: MetricSpace,
    S::Point: CsvPoint,
{
    let data = if standardize { data.standardized()? } else { data };
    let fit = fit_fsi(&data, config)?;
    fs::create_dir_all(out)?;
    let mut outputs = Vec::new();

    let path = out.join("theta_hat.json");
    let json = serde_json::json!({
        "theta_hat": fit.theta_hat,
        "eta_hat": fit.theta_hat.eta(),
        "h_star": fit.h_star,
        "criterion": fit.criterion,
        "standardization": data.standardization().map(|s| serde_json::json!({ "mean": s.mean, "sd": s.sd })),
        "bandwidths": fit.bandwidths,
    });
    fs::write(&path, serde_json::to_string_pretty(&json).map_err(CliError::internal)? + "\n")?;
    outputs.push(path);

    let path = out.join("fitted.csv");
    write_fitted(&fit, &data, response_names, &path)?;
    outputs.push(path);

    let path = out.join("trace.csv");
    write_trace(&fit.trace, &path)?;
    outputs.push(path);
    Ok(FitOutcome { outputs })
}

fn write_fitted<S>(fit: &FsiFit<S::Point>, data: &RegressionDataset<S>, names: &[String], path: &Path) -> Result<(), CliError>
where
    S: MetricSpace,
    S::Point: CsvPoint,
{
    let mut w = csv::Writer::from_path(path).map_err(CliError::internal)?;
    let mut header = vec!["row".to_string(), "index".to_string()];
    header.extend(names.iter().map(|n| format!("fitted_{n}")));
    w.write_record(&header).map_err(CliError::internal)?;
    let u = data.projections(&fit.theta_hat);
    for (i, f) in fit.fitted.iter().enumerate() {
        let mut rec = vec![i.to_string(), format!("{:.12e}", u[i])];
        rec.extend(f.point.fields().iter().map(|v| format!("{v:.12e}")));
        w.write_record(&rec).map_err(CliError::internal)?;
    }
    w.flush()?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:.12e}")).collect::<Vec<_>>().join(" ")
}

fn write_trace(trace: &[StartTrace], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::internal)?;
    w.write_record(["start", "eta_start", "eta_refined", "proxy", "screen", "retained", "eta_final", "final"])
        .map_err(CliError::internal)?;
    for (k, t) in trace.iter().enumerate() {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        w.write_record([
            k.to_string(),
            join(&t.start),
            t.refined.as_deref().map(join).unwrap_or_default(),
            opt(t.proxy_value),
            format!("{:.12e}", t.screen_value),
            t.retained.to_string(),
            t.final_angles.as_deref().map(join).unwrap_or_default(),
            opt(t.final_value),
        ])
        .map_err(CliError::internal)?;
    }
    w.flush()?;
    Ok(())
}
