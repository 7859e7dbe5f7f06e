//! Boundary shift between two neighbouring uniform intervals: class `C1`
//! holds `[−b, 0)` at density `D1` plus `[0, x)` at density `D2`, class `C2`
//! the rest of `[0, a)`. Maximizing `p(C1)/σ(C1)` over `x` drives the
//! boundary to whichever end lets the lower-density interval take over.

use serde::{Deserialize, Serialize};

use super::{Check, ExperimentReport, LabError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub b: f64,
    pub a: f64,
    pub d1: f64,
    pub d2: f64,
    /// Number of grid steps over `[0, a]`.
    pub grid: usize,
}

impl DensityParams {
    fn validate(&self) -> Result<(), LabError> {
        for (name, v) in [("b", self.b), ("a", self.a), ("d1", self.d1), ("d2", self.d2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid < 100 {
            return Err(LabError::InvalidSpec(format!("grid needs at least 100 steps, got {}", self.grid)));
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        self.d2 / self.d1
    }
}

/// `σ²(C1)/(b+qx)²`, the squared denominator of `p(C1)/σ(C1)` with `D1`
/// factored out. The usual five-term form
/// `b³/3u³ + qx³/3u³ − b⁴/4u⁴ − q²x⁴/4u⁴ + 2qb²x²/4u⁴` (with `u = b+qx`)
/// cancels badly near `x = 0`; over a common denominator every term is
/// positive.
pub fn squared_denominator(b: f64, q: f64, x: f64) -> f64 {
    let u = b + q * x;
    let numerator = b.powi(4) + 4.0 * q * b.powi(3) * x + 6.0 * q * b * b * x * x + 4.0 * q * b * x.powi(3) + q * q * x.powi(4);
    numerator / (12.0 * u.powi(4))
}

/// `q(1−q)b²x(b+x)/(b+qx)⁵`.
pub fn squared_denominator_derivative(b: f64, q: f64, x: f64) -> f64 {
    q * (1.0 - q) * b * b * x * (b + x) / (b + q * x).powi(5)
}

/// `p(C1)/σ(C1) = D1/√S(x)`.
pub fn density_objective(params: &DensityParams, x: f64) -> f64 {
    params.d1 / squared_denominator(params.b, params.q(), x).sqrt()
}

/// Five-point central difference of the squared denominator.
fn central_difference(b: f64, q: f64, x: f64, h: f64) -> f64 {
    let s = |t: f64| squared_denominator(b, q, t);
    (s(x - 2.0 * h) - 8.0 * s(x - h) + 8.0 * s(x + h) - s(x + 2.0 * h)) / (12.0 * h)
}

/// Relative tolerance of the derivative check.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-6;

/// Derivatives below this magnitude are compared absolutely.
const DERIVATIVE_FLOOR: f64 = 1e-6;

/// Tolerance on `max − min` of the objective when `q = 1`.
pub const FLAT_TOLERANCE: f64 = 1e-12;

pub fn density_shift_experiment(params: &DensityParams) -> Result<ExperimentReport, LabError> {
    params.validate()?;
    let (b, a, q) = (params.b, params.a, params.q());
    let xs: Vec<f64> = (0..=params.grid).map(|k| a * (k as f64 / params.grid as f64)).collect();
    let objective: Vec<f64> = xs.iter().map(|&x| density_objective(params, x)).collect();

    let (mut star, mut best) = (0, f64::NEG_INFINITY);
    for (k, &f) in objective.iter().enumerate() {
        if f > best {
            (star, best) = (k, f);
        }
    }
    let x_star = xs[star];
    let lo = objective.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = objective.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // `b/q` is the length scale of `b+qx`; the step balances truncation
    // against roundoff for the five-point stencil.
    let h = 1e-3 * a.min(b / q.max(1.0));
    let mut worst = 0.0f64;
    let mut derivative = Vec::with_capacity(xs.len());
    for &x in &xs[1..xs.len() - 1] {
        let closed = squared_denominator_derivative(b, q, x);
        let numeric = central_difference(b, q, x, h);
        worst = worst.max((numeric - closed).abs() / closed.abs().max(DERIVATIVE_FLOOR));
        derivative.push((x, closed));
    }

    let mut report = ExperimentReport::new("density", params);
    report.scalar("q", q);
    report.scalar("x_star", x_star);
    report.scalar("objective_min", lo);
    report.scalar("objective_max", hi);
    report.scalar("derivative_max_relative_error", worst);
    report.series.insert("objective".into(), xs.iter().copied().zip(objective.iter().copied()).collect());
    report.series.insert("derivative".into(), derivative);
    report.check(
        "derivative",
        Check { pass: worst <= DERIVATIVE_TOLERANCE, tolerance: DERIVATIVE_TOLERANCE, lhs: worst, rhs: 0.0 },
    );
    let swallow = if q > 1.0 {
        Check::absolute(x_star, a, 0.0)
    } else if q < 1.0 {
        Check::absolute(x_star, 0.0, 0.0)
    } else {
        Check::absolute(hi - lo, 0.0, FLAT_TOLERANCE)
    };
    report.check("swallow", swallow);
    Ok(report)
}
