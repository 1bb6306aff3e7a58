//! Single index estimation: the `W_n` criterion, multi-start optimization
//! over hyperspherical angles, bandwidth selection and prediction.

mod bandwidth;
mod criterion;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

pub use bandwidth::{auto_bandwidth_grid, loocv_bandwidth, LoocvModel, LoocvSelection};
pub use criterion::{fitted_values, wn_criterion, wn_proxy, wn_proxy_sphere};

use crate::error::{FsiError, Result};
use crate::geometry::{FittedObject, MetricSpace};
use crate::index::{polar_to_theta_unchecked, IndexParam};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::regression::{fit_on_index, RegressionDataset};
use crate::smoothing::Kernel;

/// Ties between final criterion values closer than this go to the lower start index.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthGrid {
    Auto { count: usize },
    Explicit(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartDesign {
    /// Uniform draws on `[−π/2, π/2]^{p−1}` from the configured seed.
    Random,
    /// Cell centers of a regular lattice with `per_axis` points per angle.
    Lattice { per_axis: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsiConfig {
    pub bandwidths: BandwidthGrid,
    pub starts: StartDesign,
    /// Number of random starts; defaults to [`default_num_starts`].
    pub num_starts: Option<usize>,
    /// Starts kept for the final optimization; defaults to [`default_num_retained`].
    pub num_retained: Option<usize>,
    pub seed: u64,
    pub kernel: Kernel,
    /// Re-estimate the index for every held-out observation during bandwidth selection.
    pub loocv_refit_theta: bool,
    pub optimizer: NelderMeadOptions,
}

impl Default for FsiConfig {
    fn default() -> Self {
        FsiConfig {
            bandwidths: BandwidthGrid::Auto { count: 10 },
            starts: StartDesign::Random,
            num_starts: None,
            num_retained: None,
            seed: 0,
            kernel: Kernel::Gaussian,
            loocv_refit_theta: false,
            optimizer: NelderMeadOptions::default(),
        }
    }
}

/// 10 starts at p = 2, 50 at p = 5, 100 at p = 10.
pub fn default_num_starts(p: usize) -> usize {
    if p <= 2 {
        10
    } else {
        10 * p
    }
}

/// 2 retained starts at p = 2, 3 at p = 5, 5 at p = 10.
pub fn default_num_retained(p: usize) -> usize {
    match p {
        0..=2 => 2,
        3..=5 => 3,
        _ => 5,
    }
}

impl FsiConfig {
    /// Starting angle vectors for dimension `p`.
    pub fn start_points(&self, p: usize) -> Vec<Vec<f64>> {
        let dim = p - 1;
        match self.starts {
            StartDesign::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let k = self.num_starts.unwrap_or_else(|| default_num_starts(p));
                (0..k)
                    .map(|_| (0..dim).map(|_| rng.random_range(-FRAC_PI_2..FRAC_PI_2)).collect())
                    .collect()
            }
            StartDesign::Lattice { per_axis } => {
                let per_axis = per_axis.max(1);
                let levels: Vec<f64> = (0..per_axis)
                    .map(|k| -FRAC_PI_2 + (k as f64 + 0.5) * PI / per_axis as f64)
                    .collect();
                let total = per_axis.pow(dim as u32);
                (0..total)
                    .map(|mut code| {
                        (0..dim)
                            .map(|_| {
                                let level = levels[code % per_axis];
                                code /= per_axis;
                                level
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }

    pub fn retained(&self, p: usize, available: usize) -> usize {
        self.num_retained.unwrap_or_else(|| default_num_retained(p)).clamp(1, available.max(1))
    }

    pub fn resolve_grid(&self, x: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
        let grid = match &self.bandwidths {
            BandwidthGrid::Auto { count } => auto_bandwidth_grid(x, *count)?,
            BandwidthGrid::Explicit(grid) => grid.clone(),
        };
        if grid.is_empty() {
            return Err(FsiError::Empty("bandwidth grid"));
        }
        if let Some(bad) = grid.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
            return Err(FsiError::InvalidInput(format!("bandwidth {bad} is not positive")));
        }
        Ok(grid)
    }
}

/// One starting point's path through the two optimization stages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartTrace {
    pub start: Vec<f64>,
    /// Angles after the proxy refinement (sphere only).
    pub refined: Option<Vec<f64>>,
    pub proxy_value: Option<f64>,
    /// Value used to rank starts: the refined proxy value, or `W_n` at the raw start.
    pub screen_value: f64,
    pub retained: bool,
    pub final_angles: Option<Vec<f64>>,
    pub final_value: Option<f64>,
}

/// Index estimate and fitted values at one bandwidth.
#[derive(Clone, Debug)]
pub struct BandwidthFit<P> {
    pub h: f64,
    pub theta: IndexParam,
    /// `W_n(θ̂(h))` recomputed at the normalized estimate.
    pub criterion: f64,
    pub trace: Vec<StartTrace>,
    pub fitted: Vec<FittedObject<P>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandwidthOutcome {
    pub h: f64,
    pub theta: Option<IndexParam>,
    pub criterion: Option<f64>,
    pub loocv_score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct FsiFit<P> {
    pub theta_hat: IndexParam,
    pub h_star: f64,
    /// `W_n(θ̂, h*)`.
    pub criterion: f64,
    pub kernel: Kernel,
    pub trace: Vec<StartTrace>,
    /// `m̂(Xᵢ)` with `h̃ = h*`.
    pub fitted: Vec<FittedObject<P>>,
    pub bandwidths: Vec<BandwidthOutcome>,
}

fn criterion_at<S: MetricSpace>(data: &RegressionDataset<S>, eta: &[f64], h: f64, kernel: Kernel, proxy: bool) -> f64 {
    let theta = match IndexParam::new(&polar_to_theta_unchecked(eta)) {
        Ok(t) => t,
        Err(_) => return f64::INFINITY,
    };
    let value = if proxy {
        wn_proxy(data, &theta, h, kernel)
    } else {
        wn_criterion(data, &theta, h, kernel)
    };
    value.unwrap_or(f64::INFINITY)
}

/// Stable ranking by value, infinite values last, lower index first on ties.
fn rank(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Estimates `θ̂(h)` at a fixed bandwidth with the two-stage multi-start schedule.
pub fn fit_at_bandwidth<S: MetricSpace>(
    data: &RegressionDataset<S>,
    h: f64,
    config: &FsiConfig,
) -> Result<BandwidthFit<S::Point>> {
    let p = data.p();
    if p < 2 {
        return Err(FsiError::ScalarIndex);
    }
    let starts = config.start_points(p);
    if starts.is_empty() {
        return Err(FsiError::InvalidInput("no starting points".into()));
    }
    fit_from_starts(data, h, config, &starts)
}

fn fit_from_starts<S: MetricSpace>(
    data: &RegressionDataset<S>,
    h: f64,
    config: &FsiConfig,
    starts: &[Vec<f64>],
) -> Result<BandwidthFit<S::Point>> {
    let kernel = config.kernel;
    let p = data.p();
    let proxy = criterion::has_proxy(data);

    // Stage 1: proxy refinement (sphere) or direct screening.
    let mut trace: Vec<StartTrace> = starts
        .par_iter()
        .map(|start| {
            if proxy {
                let m = nelder_mead(|eta| criterion_at(data, eta, h, kernel, true), start, &config.optimizer);
                StartTrace {
                    start: start.clone(),
                    refined: Some(m.x),
                    proxy_value: Some(m.value),
                    screen_value: m.value,
                    retained: false,
                    final_angles: None,
                    final_value: None,
                }
            } else {
                StartTrace {
                    start: start.clone(),
                    refined: None,
                    proxy_value: None,
                    screen_value: criterion_at(data, start, h, kernel, false),
                    retained: false,
                    final_angles: None,
                    final_value: None,
                }
            }
        })
        .collect();

    let screen: Vec<f64> = trace.iter().map(|t| t.screen_value).collect();
    let keep = config.retained(p, trace.len());
    let retained: Vec<usize> = rank(&screen).into_iter().take(keep).collect();

    // Stage 2: direct minimization of W_n from each retained start.
    let finals: Vec<(usize, Vec<f64>, f64)> = retained
        .par_iter()
        .map(|&k| {
            let from = trace[k].refined.clone().unwrap_or_else(|| trace[k].start.clone());
            let m = nelder_mead(|eta| criterion_at(data, eta, h, kernel, false), &from, &config.optimizer);
            (k, m.x, m.value)
        })
        .collect();

    for (k, eta, value) in &finals {
        trace[*k].retained = true;
        trace[*k].final_angles = Some(eta.clone());
        trace[*k].final_value = Some(*value);
    }
    let min = finals.iter().map(|f| f.2).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(FsiError::AllInfeasible(format!("every start failed at bandwidth {h}")));
    }
    let (_, eta, _) = finals
        .iter()
        .filter(|f| f.2 <= min + TIE_TOL)
        .min_by_key(|f| f.0)
        .expect("minimum is attained");

    let theta = IndexParam::new(&polar_to_theta_unchecked(eta))?;
    let fitted = fitted_values(data, &theta, h, kernel)?;
    let criterion = criterion::mean_squared_distance(data, fitted.iter().map(|f| &f.point));
    Ok(BandwidthFit { h, theta, criterion, trace, fitted })
}

/// Full single index fit: `θ̂(h)` for every grid bandwidth, `h*` by
/// leave-one-out cross-validation, and fitted values at `(θ̂(h*), h*)`.
pub fn fit_fsi<S: MetricSpace>(data: &RegressionDataset<S>, config: &FsiConfig) -> Result<FsiFit<S::Point>> {
    let (n, p) = (data.n(), data.p());
    if p < 2 {
        return Err(FsiError::ScalarIndex);
    }
    if n < 10 {
        return Err(FsiError::InvalidInput(format!("single index fitting needs n >= 10, got {n}")));
    }
    let grid = config.resolve_grid(data.x())?;
    let starts = config.start_points(p);

    let per_h: Vec<Result<BandwidthFit<S::Point>>> =
        grid.par_iter().map(|&h| fit_from_starts(data, h, config, &starts)).collect();

    let scores: Vec<Option<f64>> = if grid.len() == 1 {
        vec![None]
    } else if config.loocv_refit_theta {
        grid.par_iter()
            .zip(&per_h)
            .map(|(&h, fit)| fit.as_ref().ok().and_then(|_| loo_score_refit(data, h, config, &starts)))
            .collect()
    } else {
        grid.par_iter()
            .zip(&per_h)
            .map(|(&h, fit)| {
                fit.as_ref()
                    .ok()
                    .and_then(|f| bandwidth::loo_score_projected(data, &f.theta, h, config.kernel))
            })
            .collect()
    };

    let h_star = if grid.len() == 1 {
        if per_h[0].is_err() {
            let msg = per_h[0].as_ref().err().map(|e| e.to_string()).unwrap_or_default();
            return Err(FsiError::AllInfeasible(msg));
        }
        grid[0]
    } else {
        bandwidth::select_min(&grid, &scores)?
    };

    let bandwidths = grid
        .iter()
        .zip(&per_h)
        .zip(&scores)
        .map(|((&h, fit), &score)| match fit {
            Ok(f) => BandwidthOutcome {
                h,
                theta: Some(f.theta.clone()),
                criterion: Some(f.criterion),
                loocv_score: score,
                error: None,
            },
            Err(e) => BandwidthOutcome { h, theta: None, criterion: None, loocv_score: None, error: Some(e.to_string()) },
        })
        .collect();

    let chosen = per_h
        .into_iter()
        .zip(&grid)
        .find(|(_, &h)| h == h_star)
        .map(|(f, _)| f)
        .expect("selected bandwidth comes from the grid")?;
    Ok(FsiFit {
        theta_hat: chosen.theta,
        h_star,
        criterion: chosen.criterion,
        kernel: config.kernel,
        trace: chosen.trace,
        fitted: chosen.fitted,
        bandwidths,
    })
}

/// Leave-one-out score with the index re-estimated on every reduced sample.
fn loo_score_refit<S: MetricSpace>(
    data: &RegressionDataset<S>,
    h: f64,
    config: &FsiConfig,
    starts: &[Vec<f64>],
) -> Option<f64> {
    let n = data.n();
    let scores: Option<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let train = data.subset(&keep);
            let fit = fit_from_starts(&train, h, config, starts).ok()?;
            let u = train.projections(&fit.theta);
            let pred = fit_on_index(train.space(), train.y(), &u, fit.theta.dot(&data.row(i)), h, config.kernel, None, None)
                .ok()?;
            Some(data.space().squared_distance(&data.y()[i], &pred.point))
        })
        .collect();
    scores.map(|s| s.iter().sum())
}

/// `m̂(x) = g̃(θ̂'x, θ̂)` at bandwidth `h*`.
pub fn predict<S: MetricSpace>(
    fit: &FsiFit<S::Point>,
    data: &RegressionDataset<S>,
    x_new: &[f64],
) -> Result<FittedObject<S::Point>> {
    if x_new.len() != data.p() {
        return Err(FsiError::InvalidInput(format!(
            "query has {} covariates, model has {}",
            x_new.len(),
            data.p()
        )));
    }
    let u = data.projections(&fit.theta_hat);
    let u0 = fit.theta_hat.dot(x_new);
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if u0 < lo - fit.h_star || u0 > hi + fit.h_star {
        log::warn!("prediction at index value {u0:.4} extrapolates beyond [{lo:.4}, {hi:.4}] by more than one bandwidth");
    }
    fit_on_index(data.space(), data.y(), &u, u0, fit.h_star, fit.kernel, None, None)
}
