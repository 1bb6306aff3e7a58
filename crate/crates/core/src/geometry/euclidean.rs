use super::{check_weights, FittedObject, MetricSpace, MetricSpaceKind};
use crate::error::{FsiError, Result};

/// The real line with the absolute-difference metric.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Euclidean;

impl MetricSpace for Euclidean {
    type Point = f64;

    fn kind(&self) -> MetricSpaceKind {
        MetricSpaceKind::Euclidean1D
    }

    fn distance(&self, a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    fn validate(&self, p: &f64) -> Result<()> {
        if p.is_finite() {
            Ok(())
        } else {
            Err(FsiError::InvalidInput("non-finite scalar response".into()))
        }
    }

    fn weighted_mean(&self, points: &[f64], weights: &[f64], _init: Option<&f64>) -> Result<FittedObject<f64>> {
        check_weights(points.len(), weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(FsiError::NonPositiveWeightSum { sum: total });
        }
        let mean = points.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / total;
        let criterion = points
            .iter()
            .zip(weights)
            .map(|(y, w)| w * (y - mean).powi(2))
            .sum::<f64>()
            / points.len() as f64;
        Ok(FittedObject {
            point: mean,
            criterion_value: criterion,
            iterations: 0,
            grad_norm: 0.0,
        })
    }
}
