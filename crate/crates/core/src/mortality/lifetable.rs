use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::SQRT_2;
use std::path::Path;
use std::sync::Arc;

use crate::error::{FsiError, Result};
use crate::geometry::QuantileGrid;

/// Radix of a period lifetable.
pub const RADIX: f64 = 100_000.0;

/// Survivor counts `l(x)` at increasing ages for one population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lifetable {
    pub unit: String,
    pub ages: Vec<f64>,
    pub survivors: Vec<f64>,
}

impl Lifetable {
    pub fn new(unit: impl Into<String>, ages: Vec<f64>, survivors: Vec<f64>) -> Result<Self> {
        let unit = unit.into();
        let fail = |reason: String| FsiError::Lifetable { unit: unit.clone(), reason };
        if ages.len() != survivors.len() {
            return Err(fail(format!("{} ages but {} survivor counts", ages.len(), survivors.len())));
        }
        if ages.len() < 2 {
            return Err(fail("need at least two ages".into()));
        }
        if let Some(k) = ages.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(fail(format!("ages not increasing at {}", ages[k + 1])));
        }
        if let Some(v) = survivors.iter().chain(&ages).find(|v| !v.is_finite() || **v < 0.0) {
            return Err(fail(format!("invalid entry {v}")));
        }
        if let Some(k) = survivors.windows(2).position(|w| w[1] > w[0]) {
            return Err(fail(format!("survivors increase at age {}", ages[k + 1])));
        }
        if (survivors[0] - RADIX).abs() > 0.5 {
            return Err(fail(format!("first survivor count {} is not the radix {RADIX}", survivors[0])));
        }
        Ok(Lifetable { unit, ages, survivors })
    }

    /// Reads a CSV with header `age,lx`.
    pub fn read_csv(path: &Path, unit: impl Into<String>) -> Result<Self> {
        let unit = unit.into();
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name)).ok_or_else(|| FsiError::Lifetable {
                unit: unit.clone(),
                reason: format!("missing column `{name}`"),
            })
        };
        let (age_col, lx_col) = (col("age")?, col("lx")?);
        let mut ages = Vec::new();
        let mut survivors = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                let field = record.get(k).unwrap_or("").trim();
                field.parse::<f64>().map_err(|_| FsiError::Lifetable {
                    unit: unit.clone(),
                    reason: format!("cannot parse `{field}` as a number"),
                })
            };
            ages.push(parse(age_col)?);
            survivors.push(parse(lx_col)?);
        }
        Lifetable::new(unit, ages, survivors)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["age", "lx"])?;
        for (a, l) in self.ages.iter().zip(&self.survivors) {
            w.write_record([format!("{a}"), format!("{l}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Death counts per age interval `[aⱼ, aⱼ₊₁)`. Survivors at the last age
    /// die in an open interval treated as one year wide.
    pub fn deaths(&self) -> Vec<(f64, f64, f64)> {
        let k = self.ages.len();
        let mut out: Vec<(f64, f64, f64)> = (0..k - 1)
            .map(|j| (self.ages[j], self.ages[j + 1], self.survivors[j] - self.survivors[j + 1]))
            .collect();
        let last = self.survivors[k - 1];
        if last > 0.0 {
            out.push((self.ages[k - 1], self.ages[k - 1] + 1.0, last));
        }
        out
    }
}

/// Density smoothing applied before converting a histogram to quantiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Piecewise uniform density within each histogram bin.
    None,
    /// Gaussian kernel with the given bandwidth in years.
    Bandwidth(f64),
    /// Gaussian kernel with Silverman's rule of thumb.
    Silverman,
}

/// Histogram on `[lo, hi)` as `(left, right, probability)` bins.
pub fn age_histogram(lt: &Lifetable, lo: f64, hi: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(lo < hi) {
        return Err(FsiError::InvalidInput(format!("age range [{lo}, {hi}) is empty")));
    }
    let first = lt.ages[0];
    let end = *lt.ages.last().expect("nonempty") + 1.0;
    if lo < first || hi > end {
        return Err(FsiError::Lifetable {
            unit: lt.unit.clone(),
            reason: format!("age range [{lo}, {hi}) outside the table's span [{first}, {end})"),
        });
    }
    let mut bins = Vec::new();
    for (a, b, d) in lt.deaths() {
        let (l, r) = (a.max(lo), b.min(hi));
        if r > l {
            bins.push((l, r, d * (r - l) / (b - a)));
        }
    }
    let total: f64 = bins.iter().map(|b| b.2).sum();
    if !(total > 0.0) {
        return Err(FsiError::Lifetable { unit: lt.unit.clone(), reason: format!("no deaths in [{lo}, {hi})") });
    }
    Ok(bins.into_iter().map(|(l, r, d)| (l, r, d / total)).collect())
}

/// `0.9 · min(sd, IQR/1.34) · n^{-1/5}` for the binned ages with `n` the
/// number of deaths in range.
pub fn silverman_bandwidth(bins: &[(f64, f64, f64)], deaths: f64) -> f64 {
    let mids: Vec<(f64, f64)> = bins.iter().map(|&(l, r, p)| (0.5 * (l + r), p)).collect();
    let mean: f64 = mids.iter().map(|(c, p)| c * p).sum();
    let var: f64 = mids.iter().map(|(c, p)| p * (c - mean).powi(2)).sum();
    let cdf_quantile = |q: f64| {
        let mut acc = 0.0;
        for &(l, r, p) in bins {
            if acc + p >= q && p > 0.0 {
                return l + (r - l) * (q - acc) / p;
            }
            acc += p;
        }
        bins.last().map(|b| b.1).unwrap_or(0.0)
    };
    let iqr = cdf_quantile(0.75) - cdf_quantile(0.25);
    let spread = if iqr > 0.0 { var.sqrt().min(iqr / 1.34) } else { var.sqrt() };
    0.9 * spread * deaths.max(1.0).powf(-0.2)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

/// Inverts a nondecreasing CDF on `[lo, hi]` with `F(lo) = 0`, `F(hi) = 1`
/// by bisection: `inf{x : F(x) ≥ q}`.
fn invert_cdf(cdf: impl Fn(f64) -> f64, lo: f64, hi: f64, q: f64) -> f64 {
    if q <= 0.0 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if cdf(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        return a;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if cdf(m) >= q {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

/// Age-at-death quantile function on `grid` from a lifetable restricted to
/// `[lo, hi)`, optionally smoothed by a boundary-reflected Gaussian kernel
/// density estimate.
pub fn lifetable_to_quantile(lt: &Lifetable, age_range: (f64, f64), grid: &Arc<[f64]>, smoothing: Smoothing) -> Result<QuantileGrid> {
    let (lo, hi) = age_range;
    let bins = age_histogram(lt, lo, hi)?;
    let bw = match smoothing {
        Smoothing::None => None,
        Smoothing::Bandwidth(b) if b > 0.0 && b.is_finite() => Some(b),
        Smoothing::Bandwidth(b) => return Err(FsiError::InvalidInput(format!("smoothing bandwidth {b} is not positive"))),
        Smoothing::Silverman => {
            let deaths: f64 = lt.deaths().iter().filter(|d| d.0 < hi && d.1 > lo).map(|d| d.2).sum();
            Some(silverman_bandwidth(&bins, deaths))
        }
    };
    let values: Vec<f64> = match bw {
        None => {
            let cdf = |x: f64| -> f64 {
                bins.iter()
                    .map(|&(l, r, p)| if x >= r { p } else if x > l { p * (x - l) / (r - l) } else { 0.0 })
                    .sum::<f64>()
                    .min(1.0)
            };
            grid.iter().map(|&q| invert_cdf(cdf, lo, hi, q.min(1.0 - 1e-15))).collect()
        }
        Some(b) => {
            let centers: Vec<(f64, f64)> = bins.iter().map(|&(l, r, p)| (0.5 * (l + r), p)).collect();
            // Mass in [lo, x] of the kernel at c plus its mirror images at 2lo − c and 2hi − c.
            let raw = |x: f64| -> f64 {
                centers
                    .iter()
                    .map(|&(c, p)| {
                        let seg = |m: f64| normal_cdf((x - m) / b) - normal_cdf((lo - m) / b);
                        p * (seg(c) + seg(2.0 * lo - c) + seg(2.0 * hi - c))
                    })
                    .sum()
            };
            let total = raw(hi);
            let cdf = |x: f64| (raw(x) / total).clamp(0.0, 1.0);
            grid.iter()
                .map(|&q| if q <= 0.0 { lo } else if q >= 1.0 { hi } else { invert_cdf(cdf, lo, hi, q) })
                .collect()
        }
    };
    let mut values = values;
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    QuantileGrid::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_masses() {
        let lt = Lifetable::new("A", vec![50.0, 51.0, 52.0], vec![100000.0, 60000.0, 0.0]).unwrap();
        let bins = age_histogram(&lt, 50.0, 52.0).unwrap();
        assert_eq!(bins.len(), 2);
        assert!((bins[0].2 - 0.4).abs() < 1e-15 && (bins[1].2 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(Lifetable::new("B", vec![0.0, 1.0, 2.0], vec![100000.0, 90000.0, 95000.0]).is_err());
        assert!(Lifetable::new("B", vec![0.0, 1.0], vec![90000.0, 0.0]).is_err());
        assert!(Lifetable::new("B", vec![0.0, 0.0], vec![100000.0, 0.0]).is_err());
        let err = Lifetable::new("XYZ", vec![0.0, 1.0, 2.0], vec![100000.0, 1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("XYZ"));
    }

    #[test]
    fn point_mass_without_smoothing() {
        let lt = Lifetable::new("C", vec![20.0, 21.0, 22.0, 23.0], vec![100000.0, 100000.0, 0.0, 0.0]).unwrap();
        let grid = QuantileGrid::uniform_grid(11);
        let q = lifetable_to_quantile(&lt, (20.0, 23.0), &grid, Smoothing::None).unwrap();
        assert!(q.values().iter().all(|v| (21.0..=22.0).contains(v)));
        assert!((q.values()[5] - 21.5).abs() < 1e-9);
    }

    #[test]
    fn point_mass_with_narrow_kernel() {
        let lt = Lifetable::new("D", vec![20.0, 21.0, 22.0, 23.0], vec![100000.0, 100000.0, 0.0, 0.0]).unwrap();
        let grid = QuantileGrid::uniform_grid(11);
        let q = lifetable_to_quantile(&lt, (20.0, 23.0), &grid, Smoothing::Bandwidth(1e-3)).unwrap();
        assert!(q.values()[1..10].iter().all(|v| (v - 21.5).abs() < 0.01));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lt = Lifetable::new("E", vec![0.0, 1.0, 2.0], vec![100000.0, 40000.0, 0.0]).unwrap();
        let path = dir.path().join("E.csv");
        lt.write_csv(&path).unwrap();
        assert_eq!(Lifetable::read_csv(&path, "E").unwrap(), lt);
    }

    #[test]
    fn silverman_is_positive() {
        let lt = Lifetable::new("F", vec![0.0, 10.0, 20.0, 30.0], vec![100000.0, 70000.0, 20000.0, 0.0]).unwrap();
        let bins = age_histogram(&lt, 0.0, 30.0).unwrap();
        let b = silverman_bandwidth(&bins, 100000.0);
        assert!(b > 0.0 && b < 10.0);
    }
}
