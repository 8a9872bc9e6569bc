//! Sample eccentricity, its confidence interval, and normal-distribution helpers.

use serde::{Deserialize, Serialize};

use crate::data::{KTuple, Point};
use crate::error::{Error, Result};
use crate::metric::Metric;

/// Sample eccentricity with its variance-of-mean and symmetric interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EccEstimate {
    pub mean: f64,
    pub n: u64,
    pub var_of_mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
}

/// Running (Σ Δ, Σ Δ², count) with compensation terms.
///
/// Sums are kept as an unevaluated pair (value, rounding error) using
/// error-free two-sum steps, so merging partial accumulators in a different
/// grouping lands on the same rounded totals except in vanishingly rare cases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EccAccumulator {
    pub sum: f64,
    pub sumsq: f64,
    pub count: u64,
    #[serde(default)]
    pub sum_err: f64,
    #[serde(default)]
    pub sumsq_err: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl EccAccumulator {
    #[inline]
    pub fn push(&mut self, d: f64) {
        let (s, e) = two_sum(self.sum, d);
        self.sum = s;
        self.sum_err += e;
        let (s, e) = two_sum(self.sumsq, d * d);
        self.sumsq = s;
        self.sumsq_err += e;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &EccAccumulator) {
        let (s, e) = two_sum(self.sum, other.sum);
        self.sum = s;
        self.sum_err += e + other.sum_err;
        let (s, e) = two_sum(self.sumsq, other.sumsq);
        self.sumsq = s;
        self.sumsq_err += e + other.sumsq_err;
        self.count += other.count;
    }

    /// Compensated Σ Δ.
    pub fn total(&self) -> f64 {
        self.sum + self.sum_err
    }

    /// Compensated Σ Δ².
    pub fn total_sq(&self) -> f64 {
        self.sumsq + self.sumsq_err
    }

    pub fn estimate(&self, alpha: f64) -> Result<EccEstimate> {
        let z = z_quantile(alpha)?;
        self.estimate_with_z(alpha, z)
    }

    /// Estimate using a precomputed `z = z_quantile(alpha)`.
    pub fn estimate_with_z(&self, alpha: f64, z: f64) -> Result<EccEstimate> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("eccentricity of an empty sample".into()));
        }
        Ok(self.estimate_unchecked(alpha, z))
    }

    #[inline]
    pub(crate) fn estimate_unchecked(&self, alpha: f64, z: f64) -> EccEstimate {
        moments_estimate(self.total(), self.total_sq(), self.count, alpha, z)
    }
}

/// Estimate from raw sums; shared with the uncompensated hot loop.
#[inline]
pub(crate) fn moments_estimate(sum: f64, sumsq: f64, count: u64, alpha: f64, z: f64) -> EccEstimate {
    let n = count as f64;
    let mean = sum / n;
    let var_of_mean = if count > 1 { ((sumsq - sum * mean) / (n - 1.0)).max(0.0) / n } else { 0.0 };
    let half = z * var_of_mean.sqrt();
    EccEstimate { mean, n: count, var_of_mean, lo: mean - half, hi: mean + half, alpha }
}

/// Êcc of `candidate` over `sample` with a (1−alpha) interval.
pub fn sample_ecc(candidate: &KTuple, sample: &[Point], metric: &Metric, alpha: f64) -> Result<EccEstimate> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut acc = EccAccumulator::default();
    for p in sample {
        acc.push(metric.try_min_distance(p, candidate)?);
    }
    acc.estimate(alpha)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf Φ, via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided quantile z with Φ(z) = 1 − alpha/2.
///
/// Acklam's rational approximation (relative error about 1.15e-9) followed by
/// one Halley step against the erfc-based Φ, which brings it to machine precision.
pub fn z_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(inverse_normal_cdf(1.0 - alpha / 2.0))
}

/// Φ⁻¹(p) for p in (0,1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// E|Y − x| for Y ~ Normal(mu, sigma²).
pub fn analytic_ecc_gaussian_l1(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let t = (x - mu) / sigma;
    Ok(sigma * (2.0 * normal_pdf(t) + t * (2.0 * normal_cdf(t) - 1.0)))
}
