//! Mutual prediction between two correlated normal attributes: the squared
//! conditional density `∫∫ f(x,y)²/f_x(x)` grows with `|R|` and scales as
//! `1/σ_y`, so attribute importance depends on the unit of measurement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Check, ExperimentReport, LabError};

/// Two-dimensional quadrature over `±half_width` standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub half_width: f64,
    /// Target absolute error of the outer integral; the inner one is run
    /// a hundred times tighter.
    pub target_error: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { half_width: 8.0, target_error: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateParams {
    pub sigma_y: f64,
    pub correlations: Vec<f64>,
    pub quadrature: QuadratureSpec,
}

/// Relative tolerance between a closed form and the quadrature.
pub const MATCH_TOLERANCE: f64 = 1e-6;

fn check_sigma(sigma_y: f64) -> Result<(), LabError> {
    if sigma_y > 0.0 && sigma_y.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidSpec(format!("σ_y must be positive, got {sigma_y}")))
    }
}

/// `(2σ_y√π·√(1−2R²))⁻¹`, defined only for `R² < 1/2`.
pub fn bivariate_overfit_score(sigma_y: f64, r: f64) -> Result<f64, LabError> {
    check_sigma(sigma_y)?;
    let d = 1.0 - 2.0 * r * r;
    if !(d > 0.0) {
        return Err(LabError::CorrelationOutOfRange { r });
    }
    Ok(1.0 / (2.0 * sigma_y * PI.sqrt() * d.sqrt()))
}

/// `(2σ_y√π·√(1−R²))⁻¹`, the exact value of the double integral.
pub fn conditional_density_score(sigma_y: f64, r: f64) -> Result<f64, LabError> {
    check_sigma(sigma_y)?;
    let d = 1.0 - r * r;
    if !(d > 0.0) {
        return Err(LabError::InvalidSpec(format!("need |R| < 1, got {r}")));
    }
    Ok(1.0 / (2.0 * sigma_y * PI.sqrt() * d.sqrt()))
}

fn nested(f: impl Fn(f64, f64) -> f64, sigma_y: f64, spec: &QuadratureSpec) -> f64 {
    let (hx, hy) = (spec.half_width, spec.half_width * sigma_y);
    let inner = spec.target_error * 1e-2;
    quadrature::integrate(|x| quadrature::integrate(|y| f(x, y), -hy, hy, inner).integral, -hx, hx, spec.target_error)
        .integral
}

/// Numerical `∫∫ f(x,y)²/f_x(x) dy dx` for a standard-normal `x` and
/// zero-mean `y`; the scale of `x` cancels.
pub fn quadrature_score(sigma_y: f64, r: f64, spec: &QuadratureSpec) -> Result<f64, LabError> {
    check_sigma(sigma_y)?;
    if !(r.abs() < 1.0) {
        return Err(LabError::InvalidSpec(format!("need |R| < 1, got {r}")));
    }
    let k = 1.0 - r * r;
    let norm = 1.0 / (2.0 * PI * sigma_y * k.sqrt());
    let joint = |x: f64, y: f64| {
        let z = y / sigma_y;
        norm * (-(x * x - 2.0 * r * x * z + z * z) / (2.0 * k)).exp()
    };
    let marginal = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
    Ok(nested(|x, y| joint(x, y).powi(2) / marginal(x), sigma_y, spec))
}

/// `∫∫ f_x(x)·f_y(y)² dy dx`, the uncorrelated integrand written as a
/// product of marginals.
fn independent_product_score(sigma_y: f64, spec: &QuadratureSpec) -> f64 {
    let fx = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
    let fy = |y: f64| (-y * y / (2.0 * sigma_y * sigma_y)).exp() / (sigma_y * (2.0 * PI).sqrt());
    nested(|x, y| fx(x) * fy(y).powi(2), sigma_y, spec)
}

fn max_relative_error(lhs: &[f64], rhs: &[f64]) -> f64 {
    lhs.iter().zip(rhs).map(|(a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max)
}

pub fn bivariate_experiment(params: &BivariateParams) -> Result<ExperimentReport, LabError> {
    if params.correlations.is_empty() {
        return Err(LabError::InvalidSpec("need at least one correlation".into()));
    }
    let (sigma, spec) = (params.sigma_y, &params.quadrature);
    let rs = &params.correlations;
    let closed = rs.iter().map(|&r| bivariate_overfit_score(sigma, r)).collect::<Result<Vec<_>, _>>()?;
    let halved = rs.iter().map(|&r| bivariate_overfit_score(sigma / 2.0, r)).collect::<Result<Vec<_>, _>>()?;
    let corrected = rs.iter().map(|&r| conditional_density_score(sigma, r)).collect::<Result<Vec<_>, _>>()?;
    let numeric = rs.iter().map(|&r| quadrature_score(sigma, r, spec)).collect::<Result<Vec<_>, _>>()?;

    let mut by_strength: Vec<(f64, f64)> = rs.iter().map(|r| r.abs()).zip(closed.iter().copied()).collect();
    by_strength.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Equal |R| must give equal scores; distinct |R| strictly larger ones.
    let monotone = by_strength.windows(2).all(|w| if w[0].0 == w[1].0 { w[0].1 == w[1].1 } else { w[0].1 < w[1].1 });
    let scale = halved.iter().zip(&closed).map(|(h, c)| (h / c - 2.0).abs()).fold(0.0, f64::max);

    let mut report = ExperimentReport::new("bivariate", params);
    let series = |ys: &[f64]| rs.iter().copied().zip(ys.iter().copied()).collect();
    report.series.insert("closed_form".into(), series(&closed));
    report.series.insert("quadrature".into(), series(&numeric));
    report.series.insert("corrected".into(), series(&corrected));
    let err = max_relative_error(&closed, &numeric);
    let corrected_err = max_relative_error(&corrected, &numeric);
    report.scalar("match_max_relative_error", err);
    report.scalar("corrected_max_relative_error", corrected_err);
    report.check("match", Check::absolute(err, 0.0, MATCH_TOLERANCE));
    report.check("corrected_match", Check::absolute(corrected_err, 0.0, MATCH_TOLERANCE));
    report.check("monotone", Check { pass: monotone, tolerance: 0.0, lhs: f64::from(u8::from(monotone)), rhs: 1.0 });
    report.check("scale", Check::absolute(scale, 0.0, 1e-12));
    if let Some(k) = rs.iter().position(|&r| r == 0.0) {
        let product = independent_product_score(sigma, spec);
        report.scalar("independent_product", product);
        report.check("independent", Check::relative(numeric[k], product, 1e-9));
    }
    Ok(report)
}
