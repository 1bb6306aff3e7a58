use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FsiError, Result};
use crate::fsi::{fit_at_bandwidth, FsiConfig};
use crate::geometry::{weighted_frechet_mean, MetricSpace, QuantileGrid, Wasserstein};
use crate::index::IndexParam;
use crate::regression::{fit_on_index, GlobalFrechet, RegressionDataset};
use crate::smoothing::Kernel;

/// Pointwise average of quantile functions.
pub fn sample_frechet_mean_wasserstein(y: &[QuantileGrid]) -> Result<QuantileGrid> {
    let first = y.first().ok_or(FsiError::Empty("quantile functions"))?;
    let space = Wasserstein::new(first.grid().clone())?;
    Ok(weighted_frechet_mean(&space, y, &vec![1.0; y.len()])?.point)
}

/// `1 − Σ d²(Yᵢ, Ŷᵢ) / Σ d²(Yᵢ, ω̂)` with `ω̂` the sample Fréchet mean.
pub fn frechet_r2<S: MetricSpace>(space: &S, y: &[S::Point], fitted: &[S::Point]) -> Result<f64> {
    if y.len() != fitted.len() {
        return Err(FsiError::InvalidInput(format!("{} responses but {} fitted values", y.len(), fitted.len())));
    }
    let mean = weighted_frechet_mean(space, y, &vec![1.0; y.len()])?.point;
    let total: f64 = y.iter().map(|v| space.squared_distance(v, &mean)).sum();
    if !(total > 0.0) {
        return Err(FsiError::InvalidInput("responses have zero Fréchet variance".into()));
    }
    let resid: f64 = y.iter().zip(fitted).map(|(v, f)| space.squared_distance(v, f)).sum();
    Ok(1.0 - resid / total)
}

/// A regression model refit on each training split.
pub trait SplitModel<S: MetricSpace>: Sync {
    fn name(&self) -> String;
    fn fit_predict(&self, train: &RegressionDataset<S>, test_x: &[Vec<f64>]) -> Result<Vec<S::Point>>;
}

/// Predicts the training sample's Fréchet mean everywhere.
pub struct SampleMeanModel;

impl<S: MetricSpace> SplitModel<S> for SampleMeanModel {
    fn name(&self) -> String {
        "Mean".into()
    }

    fn fit_predict(&self, train: &RegressionDataset<S>, test_x: &[Vec<f64>]) -> Result<Vec<S::Point>> {
        let mean = weighted_frechet_mean(train.space(), train.y(), &vec![1.0; train.n()])?.point;
        Ok(vec![mean; test_x.len()])
    }
}

pub struct GlobalFrechetModel;

impl<S: MetricSpace> SplitModel<S> for GlobalFrechetModel {
    fn name(&self) -> String {
        "GF".into()
    }

    fn fit_predict(&self, train: &RegressionDataset<S>, test_x: &[Vec<f64>]) -> Result<Vec<S::Point>> {
        let gf = GlobalFrechet::new(train.x())?;
        test_x.iter().map(|x| gf.fit_at(train, x).map(|f| f.point)).collect()
    }
}

/// Local Fréchet regression on one covariate at a fixed bandwidth.
pub struct LocalFrechetModel {
    pub label: String,
    pub column: usize,
    pub h: f64,
    pub kernel: Kernel,
}

impl<S: MetricSpace> SplitModel<S> for LocalFrechetModel {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn fit_predict(&self, train: &RegressionDataset<S>, test_x: &[Vec<f64>]) -> Result<Vec<S::Point>> {
        let theta = IndexParam::axis(train.p(), self.column);
        predict_on_index(train, &theta, self.h, self.kernel, test_x)
    }
}

/// Single index model with the index re-estimated on every training split
/// at a fixed bandwidth.
pub struct FsiModel {
    pub h: f64,
    pub config: FsiConfig,
}

impl<S: MetricSpace> SplitModel<S> for FsiModel {
    fn name(&self) -> String {
        "FSI".into()
    }

    fn fit_predict(&self, train: &RegressionDataset<S>, test_x: &[Vec<f64>]) -> Result<Vec<S::Point>> {
        let fit = fit_at_bandwidth(train, self.h, &self.config)?;
        predict_on_index(train, &fit.theta, self.h, self.config.kernel, test_x)
    }
}

fn predict_on_index<S: MetricSpace>(
    train: &RegressionDataset<S>,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
    test_x: &[Vec<f64>],
) -> Result<Vec<S::Point>> {
    let u = train.projections(theta);
    test_x
        .iter()
        .map(|x| fit_on_index(train.space(), train.y(), &u, theta.dot(x), h, kernel, None, None).map(|f| f.point))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitRecord {
    pub split: usize,
    pub model: String,
    pub mspe: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MspeSummary {
    pub model: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MspeReport {
    pub test_sets: Vec<Vec<usize>>,
    pub records: Vec<SplitRecord>,
    pub summaries: Vec<MspeSummary>,
}

/// Random test sets of size `test_size`, one random stream per split.
pub fn split_indices(n: usize, n_splits: usize, test_size: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if test_size == 0 || test_size >= n {
        return Err(FsiError::InvalidInput(format!("test size {test_size} must be in 1..{n}")));
    }
    Ok((0..n_splits)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut test = idx[..test_size].to_vec();
            let mut train = idx[test_size..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            (train, test)
        })
        .collect())
}

/// Mean squared prediction error of each model over random train/test splits.
pub fn mspe_splits<S: MetricSpace>(
    data: &RegressionDataset<S>,
    models: &[&dyn SplitModel<S>],
    n_splits: usize,
    test_size: usize,
    seed: u64,
) -> Result<MspeReport> {
    let splits = split_indices(data.n(), n_splits, test_size, seed)?;
    let jobs: Vec<(usize, usize)> = (0..splits.len()).flat_map(|k| (0..models.len()).map(move |m| (k, m))).collect();
    let records: Vec<SplitRecord> = jobs
        .par_iter()
        .map(|&(k, m)| {
            let (train_idx, test_idx) = &splits[k];
            let train = data.subset(train_idx);
            let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| data.row(i)).collect();
            let outcome = models[m].fit_predict(&train, &test_x).map(|pred| {
                test_idx
                    .iter()
                    .zip(&pred)
                    .map(|(&i, p)| data.space().squared_distance(&data.y()[i], p))
                    .sum::<f64>()
                    / test_idx.len() as f64
            });
            SplitRecord {
                split: k,
                model: models[m].name(),
                mspe: outcome.as_ref().ok().copied(),
                error: outcome.err().map(|e| e.to_string()),
            }
        })
        .collect();
    let summaries = models
        .iter()
        .map(|model| {
            let name = model.name();
            let mine: Vec<&SplitRecord> = records.iter().filter(|r| r.model == name).collect();
            let values: Vec<f64> = mine.iter().filter_map(|r| r.mspe).collect();
            let failures = mine.len() - values.len();
            let (mean, sd) = if values.is_empty() {
                (None, None)
            } else {
                let k = values.len() as f64;
                let mean = values.iter().sum::<f64>() / k;
                let sd = if values.len() > 1 {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
                } else {
                    0.0
                };
                (Some(mean), Some(sd))
            };
            MspeSummary { model: name, mean, sd, failures }
        })
        .collect();
    Ok(MspeReport { test_sets: splits.into_iter().map(|(_, t)| t).collect(), records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Euclidean;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn grid_of(values: Vec<f64>) -> QuantileGrid {
        QuantileGrid::new(QuantileGrid::uniform_grid(values.len()), values).unwrap()
    }

    #[test]
    fn mean_of_point_masses() {
        let m = sample_frechet_mean_wasserstein(&[grid_of(vec![0.0; 5]), grid_of(vec![2.0; 5])]).unwrap();
        assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let one = grid_of(vec![0.0, 1.0, 3.0]);
        assert_eq!(sample_frechet_mean_wasserstein(std::slice::from_ref(&one)).unwrap().values(), one.values());
    }

    #[test]
    fn mean_is_elementwise_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ys: Vec<QuantileGrid> = (0..5)
            .map(|_| {
                let mut acc = rng.random_range(-1.0..1.0);
                grid_of((0..7).map(|_| { acc += rng.random_range(0.0..1.0); acc }).collect())
            })
            .collect();
        let m = sample_frechet_mean_wasserstein(&ys).unwrap();
        for k in 0..7 {
            let direct = ys.iter().map(|y| y.values()[k]).sum::<f64>() / 5.0;
            assert!((m.values()[k] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn r2_extremes() {
        let y = vec![1.0, 2.0, 4.0];
        assert_eq!(frechet_r2(&Euclidean, &y, &y).unwrap(), 1.0);
        let mean = 7.0 / 3.0;
        assert!(frechet_r2(&Euclidean, &y, &[mean; 3]).unwrap().abs() < 1e-15);
        assert!(frechet_r2(&Euclidean, &[1.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn splits_partition() {
        let splits = split_indices(12, 5, 4, 9).unwrap();
        for (train, test) in &splits {
            let mut all: Vec<usize> = train.iter().chain(test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..12).collect::<Vec<_>>());
            assert_eq!(test.len(), 4);
        }
        assert_eq!(splits, split_indices(12, 5, 4, 9).unwrap());
        assert!(split_indices(5, 1, 5, 0).is_err());
    }

    struct Truth;
    impl SplitModel<Euclidean> for Truth {
        fn name(&self) -> String {
            "truth".into()
        }
        fn fit_predict(&self, _: &RegressionDataset<Euclidean>, test_x: &[Vec<f64>]) -> Result<Vec<f64>> {
            Ok(test_x.iter().map(|x| x[0] * 2.0).collect())
        }
    }

    #[test]
    fn oracle_model_has_zero_error() {
        let x = DMatrix::from_fn(15, 1, |i, _| i as f64 / 14.0);
        let y = (0..15).map(|i| 2.0 * x[(i, 0)]).collect();
        let data = RegressionDataset::new(x, y, Euclidean).unwrap();
        let report = mspe_splits(&data, &[&Truth, &SampleMeanModel], 3, 5, 1).unwrap();
        assert_eq!(report.summaries[0].mean, Some(0.0));
        assert!(report.summaries[1].mean.unwrap() > 0.0);
    }

    #[test]
    fn mean_model_error_matches_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(20, 1, |_, _| rng.random_range(0.0..1.0));
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = RegressionDataset::new(x, y.clone(), Euclidean).unwrap();
        let report = mspe_splits(&data, &[&SampleMeanModel], 4, 5, 3).unwrap();
        let mut total = 0.0;
        for (train, test) in split_indices(20, 4, 5, 3).unwrap() {
            let mean = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
            total += test.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / 5.0;
        }
        assert!((report.summaries[0].mean.unwrap() - total / 4.0).abs() < 1e-14);
    }
}
