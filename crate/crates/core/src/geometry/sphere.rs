use nalgebra::Vector3;
use std::f64::consts::PI;

use super::{check_weights, FittedObject, MetricSpace, MetricSpaceKind};
use crate::error::{FsiError, Result};

const UNIT_TOL: f64 = 1e-8;
const TANGENT_TOL: f64 = 1e-8;
const ANTIPODAL_TOL: f64 = 1e-10;

/// A point on the unit sphere S² ⊂ R³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint(Vector3<f64>);

impl SpherePoint {
    /// Accepts vectors whose norm is within 1e-8 of one and renormalizes them.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(FsiError::NotUnitNorm { norm });
        }
        Ok(SpherePoint(v / norm))
    }

    /// Radial projection of a nonzero vector onto the sphere.
    pub fn normalize(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(FsiError::ZeroNormProjection);
        }
        Ok(SpherePoint(v / norm))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.0.dot(&other.0)
    }
}

/// Geodesic distance `arccos(a·b)`, in radians.
///
/// Evaluated as `atan2(|a×b|, a·b)`, which equals the clamped arccosine but
/// keeps full precision for nearly coincident points.
pub fn sphere_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    let cross = a.0.cross(&b.0).norm();
    let dot = a.0.dot(&b.0).clamp(-1.0, 1.0);
    cross.atan2(dot)
}

/// Exponential map: walk `|v|` radians from `base` along tangent `v`.
pub fn sphere_exp(base: &SpherePoint, tangent: &Vector3<f64>) -> Result<SpherePoint> {
    let inner = base.0.dot(tangent);
    if inner.abs() > TANGENT_TOL {
        return Err(FsiError::NotTangent { inner });
    }
    Ok(exp_unchecked(base, tangent))
}

fn exp_unchecked(base: &SpherePoint, tangent: &Vector3<f64>) -> SpherePoint {
    let norm = tangent.norm();
    if norm == 0.0 {
        return *base;
    }
    let v = base.0 * norm.cos() + tangent * (norm.sin() / norm);
    SpherePoint(v / v.norm())
}

/// Logarithm map, the inverse of [`sphere_exp`]. Undefined for antipodal pairs.
pub fn sphere_log(base: &SpherePoint, target: &SpherePoint) -> Result<Vector3<f64>> {
    let c = base.0.dot(&target.0).clamp(-1.0, 1.0);
    if c <= -1.0 + ANTIPODAL_TOL {
        return Err(FsiError::Antipodal);
    }
    let perp = target.0 - base.0 * c;
    let s = perp.norm();
    if s == 0.0 {
        return Ok(Vector3::zeros());
    }
    let angle = s.atan2(c);
    Ok(perp * (angle / s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereSolverOptions {
    /// Stop once the gradient norm of the normalized objective drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SphereSolverOptions {
    fn default() -> Self {
        SphereSolverOptions { tol: 1e-10, max_iter: 500 }
    }
}

/// The unit sphere S² with the geodesic metric.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sphere {
    pub solver: SphereSolverOptions,
}

impl Sphere {
    pub fn new() -> Self {
        Self::default()
    }

    /// `Σ w̃ᵢ d²(yᵢ, ω)` and `Σ w̃ᵢ log_ω(yᵢ)`; the Riemannian gradient is `-2` times the latter.
    fn objective(points: &[SpherePoint], weights: &[f64], omega: &SpherePoint) -> Result<(f64, Vector3<f64>)> {
        let mut value = 0.0;
        let mut direction = Vector3::zeros();
        for (y, &w) in points.iter().zip(weights) {
            match sphere_log(omega, y) {
                Ok(log) => {
                    value += w * log.norm_squared();
                    direction += log * w;
                }
                // d² is not differentiable at the antipode; zero is a valid subgradient there.
                Err(FsiError::Antipodal) => value += w * sphere_distance(omega, y).powi(2),
                Err(e) => return Err(e),
            }
        }
        // Rounding can leave a small radial component; drop it.
        let radial = direction.dot(&omega.0);
        direction -= omega.0 * radial;
        Ok((value, direction))
    }

    /// Newton direction `H⁻¹ v` in the tangent plane at `ω`, where `v = Σ w̃ᵢ log_ω(yᵢ)`
    /// and `H` is half the Riemannian Hessian. `None` unless `H` is positive definite.
    fn newton_direction(
        points: &[SpherePoint],
        weights: &[f64],
        omega: &SpherePoint,
        direction: &Vector3<f64>,
    ) -> Option<Vector3<f64>> {
        let w0 = omega.0;
        let seed = if w0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - w0 * w0.dot(&seed)).normalize();
        let e2 = w0.cross(&e1);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for (y, &w) in points.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let Ok(log) = sphere_log(omega, y) else { return None };
            let r = log.norm();
            let (u1, u2, k) = if r < 1e-12 {
                (0.0, 0.0, 1.0)
            } else {
                (log.dot(&e1) / r, log.dot(&e2) / r, r / r.tan())
            };
            // Radial curvature 1, transverse r·cot r.
            a += w * (k + (1.0 - k) * u1 * u1);
            b += w * (1.0 - k) * u1 * u2;
            c += w * (k + (1.0 - k) * u2 * u2);
        }
        let det = a * c - b * b;
        if !(a > 0.0 && det > 1e-14 * (a * c).abs()) {
            return None;
        }
        let (g1, g2) = (direction.dot(&e1), direction.dot(&e2));
        let s1 = (c * g1 - b * g2) / det;
        let s2 = (a * g2 - b * g1) / det;
        let step = e1 * s1 + e2 * s2;
        (step.dot(direction) > 0.0 && step.iter().all(|v| v.is_finite())).then_some(step)
    }

    /// A negatively weighted point makes its antipode a cone-shaped local
    /// minimum of the objective. When `ω` is near such an antipode, returns it
    /// with its value if zero lies in the subdifferential there.
    fn kink_minimum(
        points: &[SpherePoint],
        weights: &[f64],
        omega: &SpherePoint,
        value: f64,
        tol: f64,
    ) -> Result<Option<(SpherePoint, f64)>> {
        let nearest = points
            .iter()
            .zip(weights)
            .enumerate()
            .filter(|(_, (_, &w))| w < 0.0)
            .map(|(j, (y, _))| (j, omega.dot(y)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, c)) = nearest else { return Ok(None) };
        if c > -(0.1f64).cos() {
            return Ok(None);
        }
        let kink = SpherePoint(-points[j].0);
        let (kink_value, rest) = Self::objective(points, weights, &kink)?;
        let cone = weights[j].abs() * PI;
        if kink_value <= value + 1e-13 * (1.0 + value.abs()) && 2.0 * (rest.norm() - cone) < tol {
            Ok(Some((kink, kink_value)))
        } else {
            Ok(None)
        }
    }

    fn extrinsic(points: &[SpherePoint], weights: &[f64]) -> Result<SpherePoint> {
        let sum: Vector3<f64> = points
            .iter()
            .zip(weights)
            .fold(Vector3::zeros(), |acc, (y, &w)| acc + y.0 * w);
        let scale: f64 = weights.iter().map(|w| w.abs()).sum();
        if sum.norm() <= 1e-12 * scale {
            return Err(FsiError::ZeroNormProjection);
        }
        SpherePoint::normalize(sum)
    }
}

impl MetricSpace for Sphere {
    type Point = SpherePoint;

    fn kind(&self) -> MetricSpaceKind {
        MetricSpaceKind::Sphere
    }

    fn distance(&self, a: &SpherePoint, b: &SpherePoint) -> f64 {
        sphere_distance(a, b)
    }

    fn validate(&self, p: &SpherePoint) -> Result<()> {
        let norm = p.0.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(FsiError::NotUnitNorm { norm });
        }
        Ok(())
    }

    /// Riemannian Newton steps with Armijo backtracking, falling back to
    /// gradient steps where the Hessian is indefinite.
    fn weighted_mean(
        &self,
        points: &[SpherePoint],
        weights: &[f64],
        init: Option<&SpherePoint>,
    ) -> Result<FittedObject<SpherePoint>> {
        check_weights(points.len(), weights)?;
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(FsiError::NonPositiveWeightSum { sum: weights.iter().sum() });
        }
        let total: f64 = weights.iter().sum();
        let scale = if total > 0.0 { total } else { weights.iter().map(|w| w.abs()).sum() };
        let normalized: Vec<f64> = weights.iter().map(|w| w / scale).collect();

        let mut omega = match init {
            Some(p) => *p,
            None => Self::extrinsic(points, &normalized).unwrap_or_else(|_| {
                let best = normalized
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                points[best]
            }),
        };

        let (mut value, mut direction) = Self::objective(points, &normalized, &omega)?;
        let mut iterations = 0;
        let grad_norm = loop {
            let step_norm = direction.norm();
            let grad_norm = 2.0 * step_norm;
            if grad_norm < self.solver.tol {
                break grad_norm;
            }
            if iterations >= self.solver.max_iter {
                if let Some((kink, _)) = Self::kink_minimum(points, &normalized, &omega, value, self.solver.tol)? {
                    omega = kink;
                    break 0.0;
                }
                return Err(FsiError::NonConvergence { iterations, grad_norm });
            }
            iterations += 1;

            let newton = Self::newton_direction(points, &normalized, &omega, &direction);
            let mut accepted = None;
            for (search, t_min) in [(newton, 1e-3), (Some(direction), 1e-12)] {
                let Some(search) = search else { continue };
                let slope = search.dot(&direction);
                let mut t = 1.0;
                while t >= t_min {
                    let candidate = exp_unchecked(&omega, &(search * t));
                    let (cand_value, cand_direction) = Self::objective(points, &normalized, &candidate)?;
                    let sufficient = cand_value <= value - 2e-4 * t * slope;
                    // Near the optimum the objective decrease falls below rounding;
                    // there a step that shrinks the gradient is accepted.
                    let flat = cand_value <= value + 1e-13 * (1.0 + value.abs())
                        && cand_direction.norm() < step_norm;
                    if sufficient || flat {
                        accepted = Some((candidate, cand_value, cand_direction));
                        break;
                    }
                    t *= 0.5;
                }
                if accepted.is_some() {
                    break;
                }
            }
            match accepted {
                Some((candidate, cand_value, cand_direction)) => {
                    omega = candidate;
                    value = cand_value;
                    direction = cand_direction;
                }
                None => match Self::kink_minimum(points, &normalized, &omega, value, self.solver.tol)? {
                    Some((kink, _)) => {
                        omega = kink;
                        break 0.0;
                    }
                    None => return Err(FsiError::NonConvergence { iterations, grad_norm }),
                },
            }
        };

        let criterion_value = points
            .iter()
            .zip(weights)
            .map(|(y, w)| w * sphere_distance(y, &omega).powi(2))
            .sum::<f64>()
            / points.len() as f64;
        Ok(FittedObject { point: omega, criterion_value, iterations, grad_norm })
    }

    fn warm_start(&self, points: &[SpherePoint], kernel_weights: &[f64], exclude: Option<usize>) -> Option<SpherePoint> {
        let mask = |w: Vec<f64>| -> Vec<f64> {
            let mut w = w;
            if let Some(i) = exclude {
                w[i] = 0.0;
            }
            w
        };
        Self::extrinsic(points, &mask(kernel_weights.to_vec()))
            .or_else(|_| Self::extrinsic(points, &mask(vec![1.0; points.len()])))
            .ok()
    }

    fn project_extrinsic(&self, points: &[SpherePoint], weights: &[f64]) -> Option<Result<SpherePoint>> {
        Some(Self::extrinsic(points, weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn p(x: f64, y: f64, z: f64) -> SpherePoint {
        SpherePoint::new(x, y, z).unwrap()
    }

    #[test]
    fn distance_examples() {
        let e1 = p(1.0, 0.0, 0.0);
        assert_eq!(sphere_distance(&e1, &e1), 0.0);
        assert!((sphere_distance(&e1, &p(-1.0, 0.0, 0.0)) - PI).abs() < 1e-15);
        assert!((sphere_distance(&e1, &p(0.0, 1.0, 0.0)) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_unit() {
        assert!(matches!(
            SpherePoint::new(1.0, 1e-3, 0.0),
            Err(FsiError::NotUnitNorm { .. })
        ));
        assert!(SpherePoint::new(1.0 + 1e-9, 0.0, 0.0).is_ok());
    }

    #[test]
    fn exp_examples() {
        let e1 = p(1.0, 0.0, 0.0);
        assert_eq!(sphere_exp(&e1, &Vector3::zeros()).unwrap(), e1);
        let quarter = sphere_exp(&e1, &Vector3::new(0.0, FRAC_PI_2, 0.0)).unwrap();
        assert!((quarter.as_vector() - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let half = sphere_exp(&e1, &Vector3::new(0.0, PI, 0.0)).unwrap();
        assert!((half.as_vector() - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(matches!(
            sphere_exp(&e1, &Vector3::new(0.1, 0.0, 0.0)),
            Err(FsiError::NotTangent { .. })
        ));
    }

    #[test]
    fn log_examples() {
        let e1 = p(1.0, 0.0, 0.0);
        assert_eq!(sphere_log(&e1, &e1).unwrap(), Vector3::zeros());
        let v = sphere_log(&e1, &p(0.0, 1.0, 0.0)).unwrap();
        assert!((v - Vector3::new(0.0, FRAC_PI_2, 0.0)).norm() < 1e-15);
        assert!(matches!(sphere_log(&e1, &p(-1.0, 0.0, 0.0)), Err(FsiError::Antipodal)));
    }

    #[test]
    fn midpoint_matches_great_circle_search() {
        let a = p(1.0, 0.0, 0.0);
        let b = p(0.0, 1.0, 0.0);
        let fit = Sphere::new().weighted_mean(&[a, b], &[1.0, 1.0], None).unwrap();

        // Oracle: dense search over the connecting great circle.
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=200_000 {
            let s = FRAC_PI_2 * k as f64 / 200_000.0;
            let w = p(s.cos(), s.sin(), 0.0);
            let f = sphere_distance(&a, &w).powi(2) + sphere_distance(&b, &w).powi(2);
            if f < best.0 {
                best = (f, s);
            }
        }
        let oracle = p(best.1.cos(), best.1.sin(), 0.0);
        assert!(sphere_distance(&fit.point, &oracle) < 1e-5);
        assert!((fit.point.as_vector() - Vector3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn singleton_mean() {
        let y = p(0.3, -0.4, (1.0f64 - 0.25).sqrt());
        let fit = Sphere::new().weighted_mean(&[y], &[1.0], None).unwrap();
        assert!(sphere_distance(&fit.point, &y) < 1e-15);
    }

    #[test]
    fn requires_a_positive_weight() {
        let y = p(1.0, 0.0, 0.0);
        assert!(Sphere::new().weighted_mean(&[y, y], &[-1.0, 0.0], None).is_err());
    }

    #[test]
    fn warm_start_falls_back_to_equal_weights() {
        let a = p(1.0, 0.0, 0.0);
        let b = p(0.0, 1.0, 0.0);
        let w = Sphere::new().warm_start(&[a, b], &[0.0, 0.0], None).unwrap();
        let c = p(0.0, 0.0, 1.0);
        let loo = Sphere::new().warm_start(&[a, b, c], &[0.0, 0.0, 0.0], Some(2)).unwrap();
        assert!((loo.as_vector() - w.as_vector()).norm() < 1e-15);
        assert!((w.as_vector() - Vector3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }
}
