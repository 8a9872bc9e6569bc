//! Error bounds for minimum-mean estimation over power-variance families.
//!
//! All tolerances `p` are percentages: the target is a relative error below p/100.
//! `f64::INFINITY` stands for δ_c when β = 0; it serializes to JSON `null`.

use serde::{Deserialize, Serialize};

use crate::eccentricity::{normal_cdf, normal_pdf};
use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const PI: f64 = std::f64::consts::PI;

/// Distributions with mean μ ≥ γ and variance α μ^β + k_var.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerVarianceFamily {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_var: f64,
    pub kappa_ub: f64,
}

impl PowerVarianceFamily {
    /// Non-central χ² with one degree of freedom, parametrized by its mean.
    pub fn noncentral_chi2() -> Self {
        PowerVarianceFamily { alpha: 4.0, beta: 1.0, gamma: 1.0, k_var: -2.0, kappa_ub: 15.0 }
    }

    /// Constant-variance Gaussian arms with variance `sigma2`.
    pub fn gaussian(sigma2: f64, gamma: f64) -> Self {
        PowerVarianceFamily { alpha: sigma2, beta: 0.0, gamma, k_var: 0.0, kappa_ub: 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta >= 0.0
            && self.gamma > 0.0
            && self.kappa_ub >= 1.0
            && self.k_var.is_finite()
            && self.alpha * self.gamma.powf(self.beta) >= -self.k_var;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid power-variance family {self:?}")))
        }
    }

    pub fn variance(&self, mu: f64) -> f64 {
        self.alpha * mu.powf(self.beta) + self.k_var
    }
}

/// Family-derived constants. `beta` is carried along for the piecewise functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub delta_c: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub beta: f64,
}

/// Largest admissible Berry–Esseen constant; also the default.
pub const C4_MAX: f64 = 32.0;

pub fn derive_constants(fam: &PowerVarianceFamily, c4: f64) -> Result<BoundConstants> {
    fam.validate()?;
    if !(c4 > 0.0 && c4 <= C4_MAX) {
        return Err(Error::Config(format!("c4 must lie in (0, 32], got {c4}")));
    }
    let b = fam.beta;
    if b > 2.0 {
        return Err(Error::Config(format!("beta = {b} is outside [0, 2]")));
    }
    let c1 = if fam.k_var > 0.0 { 1.0 + 2.0 * fam.k_var / (fam.alpha * fam.gamma.powf(b)) } else { 1.0 };
    let delta_c = if b > 0.0 { (c1.powf(1.0 / b) - 1.0).max(1.0) } else { f64::INFINITY };
    let lead = fam.gamma.powf(1.0 - b / 2.0) / fam.alpha.sqrt();
    let c2 = if b == 0.0 {
        lead / (1.0 + c1).sqrt()
    } else {
        lead / (2f64.powf((1.0 + b) / 2.0) * delta_c.powf(b / 2.0))
    };
    let c3 = lead / 2f64.powf((1.0 + b) / 2.0);
    let c5 = familywise_kurtosis_bound(fam.kappa_ub).powf(0.75);
    let c6 = c4 * c5;
    let c7 = c6.cbrt() / c2 * 3.0 / 2f64.cbrt();
    Ok(BoundConstants { c1, delta_c, c2, c3, c4, c5, c6, c7, beta: b })
}

/// A named inequality `lhs relation rhs` with its truth value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub relation: String,
    pub rhs: f64,
    pub ok: bool,
}

impl Condition {
    fn new(name: &str, lhs: f64, relation: &str, rhs: f64) -> Self {
        let ok = match relation {
            ">" => lhs > rhs,
            ">=" => lhs >= rhs,
            "<" => lhs < rhs,
            "<=" => lhs <= rhs,
            _ => unreachable!("relation {relation}"),
        };
        Condition { name: name.to_string(), lhs, relation: relation.to_string(), rhs, ok }
    }
}

fn violations(cs: &[Condition]) -> Option<String> {
    let bad: Vec<String> = cs
        .iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{} ({} {} {} fails)", c.name, c.lhs, c.relation, c.rhs))
        .collect();
    (!bad.is_empty()).then(|| bad.join("; "))
}

/// z-score of zero for the difference of two sample means with means μ1 and μ1(1+δ).
pub fn zscore_of_zero(fam: &PowerVarianceFamily, mu1: f64, delta: f64, n: u64) -> Result<f64> {
    if mu1 < fam.gamma || delta < 0.0 || n == 0 {
        return Err(Error::InvalidArgument(format!("need mu1 ≥ gamma, delta ≥ 0, n ≥ 1 (mu1={mu1}, delta={delta}, n={n})")));
    }
    let b = fam.beta;
    let rad = (1.0 + delta).powf(b) + 1.0 + 2.0 * fam.k_var / (fam.alpha * mu1.powf(b));
    if !(rad > 0.0) {
        return Err(Error::InvalidArgument(format!("non-positive radicand {rad}")));
    }
    Ok(-(mu1.powf(1.0 - b / 2.0) * (n as f64).sqrt() / fam.alpha.sqrt()) * delta / rad.sqrt())
}

/// Exact two-mean error δ·Φ(z₀) for Gaussian arms.
pub fn two_mean_error_gaussian(fam: &PowerVarianceFamily, mu1: f64, delta: f64, n: u64) -> Result<f64> {
    Ok(delta * normal_cdf(zscore_of_zero(fam, mu1, delta, n)?))
}

/// Piecewise upper bound on z₀.
pub fn zscore_ub(c: &BoundConstants, n: u64, delta: f64) -> f64 {
    let sn = (n as f64).sqrt();
    if delta <= c.delta_c {
        -c.c2 * sn * delta
    } else {
        -c.c3 * sn * delta.powf(1.0 - c.beta / 2.0)
    }
}

/// Gaussian-case bound on the two-mean relative error.
pub fn rel_error_ub3_normal(c: &BoundConstants, n: u64, delta: f64) -> f64 {
    let n = n as f64;
    if delta <= c.delta_c {
        (-(c.c2 * c.c2 * n * delta * delta) / 2.0).exp() / (SQRT_2PI * c.c2 * n.sqrt())
    } else {
        let b = c.beta;
        delta.powf(b / 2.0) * (-(c.c3 * c.c3 * n * delta.powf(2.0 - b)) / 2.0).exp() / (SQRT_2PI * c.c3 * n.sqrt())
    }
}

/// Berry–Esseen correction term of the general two-mean bound.
pub fn rel_error_ub3_be(c: &BoundConstants, n: u64, delta: f64) -> f64 {
    let n2 = (n as f64) * (n as f64);
    if delta <= c.delta_c {
        c.c6 / (c.c2.powi(3) * n2) / (delta * delta)
    } else {
        c.c6 / (c.c3.powi(3) * n2) * delta.powf((3.0 * c.beta - 4.0) / 2.0)
    }
}

pub fn rel_error_ub3_gen(c: &BoundConstants, n: u64, delta: f64) -> f64 {
    rel_error_ub3_normal(c, n, delta) + rel_error_ub3_be(c, n, delta)
}

fn monotonicity_rhs(c: &BoundConstants) -> f64 {
    let b = c.beta;
    if b == 0.0 {
        0.0
    } else {
        b / (c.c3 * c.c3 * (2.0 - b) * c.delta_c.powf(2.0 - b))
    }
}

/// Conditions under which the Gaussian-case threshold inverts its bound.
pub fn delta_th_normal_conditions(c: &BoundConstants, n: u64, t: f64) -> Vec<Condition> {
    let nf = n as f64;
    vec![
        Condition::new("T_positive", t, ">", 0.0),
        Condition::new("monotonicity", nf, ">", monotonicity_rhs(c)),
        Condition::new(
            "piecewise_inverse",
            nf,
            ">=",
            (-(c.c2 * c.c2 * nf * c.delta_c * c.delta_c)).exp() / (2.0 * PI * c.c2 * c.c2 * t * t),
        ),
    ]
}

/// Relative exceedance above which the Gaussian-case bound is below `t`.
pub fn delta_th_normal(c: &BoundConstants, n: u64, t: f64) -> Result<f64> {
    if let Some(v) = violations(&delta_th_normal_conditions(c, n, t)) {
        return Err(Error::Conditions(v));
    }
    let nf = n as f64;
    if t < 1.0 / (SQRT_2PI * c.c2 * nf.sqrt()) {
        Ok((-(2.0 / (c.c2 * c.c2 * nf)) * ((2.0 * PI * nf).sqrt() * c.c2 * t).ln()).sqrt())
    } else {
        Ok(0.0)
    }
}

/// Conditions of the general-case threshold.
pub fn delta_th_gen_conditions(c: &BoundConstants, n: u64, t: f64) -> Vec<Condition> {
    let nf = n as f64;
    vec![
        Condition::new("T_positive", t, ">", 0.0),
        Condition::new("monotonicity", nf, ">", monotonicity_rhs(c)),
        Condition::new(
            "piecewise_inverse",
            nf,
            ">=",
            2.0 / (PI * c.c2 * c.c2 * t * t) * (-(c.c2 * c.c2 * nf * c.delta_c * c.delta_c)).exp(),
        ),
        Condition::new("beta_below_4_3", c.beta, "<", 4.0 / 3.0),
        Condition::new("be_inverse", nf, ">=", (2.0 * c.c6).sqrt() / (c.c2.powf(1.5) * t.sqrt() * c.delta_c)),
    ]
}

/// Berry–Esseen inverse: δ with ε^UB3_BE(δ) = t/2 on the first branch.
pub fn delta_be_inverse(c: &BoundConstants, n: u64, t: f64) -> f64 {
    (2.0 * c.c6).sqrt() / (c.c2.powf(1.5) * n as f64 * t.sqrt())
}

/// Relative exceedance above which the general two-mean bound is below `t`.
pub fn delta_th_gen(c: &BoundConstants, n: u64, t: f64) -> Result<f64> {
    if let Some(v) = violations(&delta_th_gen_conditions(c, n, t)) {
        return Err(Error::Conditions(v));
    }
    let nf = n as f64;
    let be = delta_be_inverse(c, n, t);
    if t < (2.0 / PI).sqrt() / (c.c2 * nf.sqrt()) {
        let g = (-(2.0 / (c.c2 * c.c2 * nf)) * ((PI * nf / 2.0).sqrt() * c.c2 * t).ln()).sqrt();
        Ok(g.max(be))
    } else {
        Ok(be)
    }
}

/// Reduction from m means to pairs: δ^th + m·T.
pub fn rel_error_ub4(delta_th: f64, t: f64, m: u64) -> f64 {
    delta_th + m as f64 * t
}

/// Per-pair target that minimizes the reduced bound.
pub fn t_star(c: &BoundConstants, n: u64, m: u64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    c.c6.cbrt() / (2f64.cbrt() * c.c2 * n.powf(2.0 / 3.0) * m.powf(2.0 / 3.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ub5Report {
    pub n: u64,
    pub m: u64,
    pub value: f64,
    pub conditions_ok: bool,
    pub conditions: Vec<Condition>,
}

/// Conditions of the m^{1/3}/n^{2/3} rate: four lower bounds on n, then either
/// the Gaussian-branch pair or the single threshold-branch alternative.
pub fn ub5_conditions(c: &BoundConstants, n: u64, m: u64) -> (bool, Vec<Condition>) {
    let (nf, mf) = (n as f64, m as f64);
    let dc = c.delta_c;
    let bracket = (2f64.powf(5.0 / 3.0) / (PI * c.c6.powf(2.0 / 3.0))).ln() + 4.0 / 3.0 * mf.ln() + nf.ln() / 3.0;
    let pw_rhs = if dc.is_infinite() { 0.0 } else { bracket / (c.c2 * c.c2 * dc * dc) };
    let branch = c.c6 * c.c6 * PI.powi(3) / 32.0;
    let l = -((PI.sqrt() * c.c6.cbrt()) / (2f64.powf(5.0 / 6.0) * mf.powf(2.0 / 3.0) * nf.powf(1.0 / 6.0))).ln();
    let cs = vec![
        Condition::new("monotonicity", nf, ">", monotonicity_rhs(c)),
        Condition::new("piecewise_inverse", nf, ">=", pw_rhs),
        Condition::new("beta_below_4_3", c.beta, "<", 4.0 / 3.0),
        Condition::new("be_inverse", nf, ">=", 2.0 * c.c6.sqrt() / (c.c2.powf(1.5) * dc.powf(1.5)) * mf.sqrt()),
        Condition::new("gaussian_branch", mf.powi(4) * nf, ">", branch),
        Condition::new("be_dominates", nf, "<=", 2.0 * c.c6 * c.c6 * mf * mf / l.powi(3)),
        Condition::new("threshold_branch", mf.powi(4) * nf, "<=", branch),
    ];
    let ok = cs[..4].iter().all(|c| c.ok) && ((cs[4].ok && cs[5].ok) || cs[6].ok);
    (ok, cs)
}

/// The MME relative-error rate C7·m^{1/3}/n^{2/3} with its conditions.
pub fn rel_error_ub5(c: &BoundConstants, n: u64, m: u64) -> Ub5Report {
    let value = c.c7 * (m as f64).cbrt() / (n as f64).powf(2.0 / 3.0);
    let (conditions_ok, conditions) = ub5_conditions(c, n, m);
    Ub5Report { n, m, value, conditions_ok, conditions }
}

/// Interval of n satisfying the rate conditions for a given m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub m: u64,
    /// Lower end; `lower_strict` means n must exceed it.
    pub lower: f64,
    pub lower_strict: bool,
    pub upper: f64,
    pub empty: bool,
    /// Extended inverses g₁⁻¹(0) … g₅⁻¹(0).
    pub roots: [f64; 5],
}

impl FeasibleRegion {
    pub fn contains(&self, n: f64) -> bool {
        let above = if self.lower_strict { n > self.lower } else { n >= self.lower };
        n >= 1.0 && above && n <= self.upper
    }
}

/// Smallest m for which the feasible region is defined.
pub fn feasible_m_threshold(c: &BoundConstants) -> f64 {
    0.25f64.exp() * PI.powf(0.75) * c.c6.sqrt() / 2f64.powf(1.25)
}

/// The five defining functions, g₁ … g₅, at n for fixed m.
pub fn feasible_g(c: &BoundConstants, m: u64, n: f64) -> [f64; 5] {
    let mf = m as f64;
    let dc = c.delta_c;
    let k2 = if dc.is_infinite() { 0.0 } else { 1.0 / (c.c2 * c.c2 * dc * dc) };
    let g1 = n - monotonicity_rhs(c);
    let g2 = n - k2 * ((2f64.powf(5.0 / 3.0) / (PI * c.c6.powf(2.0 / 3.0))).ln() + 4.0 / 3.0 * mf.ln() + n.ln() / 3.0);
    let g3 = n - 2.0 * c.c6.sqrt() * mf.sqrt() / (c.c2.powf(1.5) * dc.powf(1.5));
    let g4 = n - c.c6 * c.c6 * PI.powi(3) / (32.0 * mf.powi(4));
    let a = (2f64.powf(5.0 / 6.0) * mf.powf(2.0 / 3.0) / (PI.sqrt() * c.c6.cbrt())).ln();
    let g5 = a * n.cbrt() + n.ln() * n.cbrt() / 6.0 - 2f64.cbrt() * c.c6.powf(2.0 / 3.0) * mf.powf(2.0 / 3.0);
    [g1, g2, g3, g4, g5]
}

/// Extended inverse at 0 of a function increasing wherever it is non-negative,
/// on the domain [1, ∞): −∞ when g(1) > 0, otherwise the crossing point found
/// by bisection. `upper_side` returns the last point with g ≤ 0 instead of the
/// first with g ≥ 0.
fn extended_root(g: impl Fn(f64) -> f64, upper_side: bool) -> f64 {
    if g(1.0) > 0.0 {
        return f64::NEG_INFINITY;
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if upper_side {
        lo
    } else {
        hi
    }
}

pub fn feasible_region(c: &BoundConstants, m: u64) -> Result<FeasibleRegion> {
    let thr = feasible_m_threshold(c);
    if (m as f64) < thr {
        return Err(Error::Conditions(format!("m = {m} is below the feasible-region threshold {thr}")));
    }
    let mut roots = [0.0; 5];
    for (i, r) in roots.iter_mut().enumerate() {
        *r = extended_root(|n| feasible_g(c, m, n)[i], i == 4);
    }
    let lower = roots[..4].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lower_strict = roots[0] == lower || roots[3] == lower;
    let upper = roots[4];
    let lo_eff = lower.max(1.0);
    let empty = upper < lo_eff || (lower_strict && upper <= lower);
    Ok(FeasibleRegion { m, lower, lower_strict, upper, empty, roots })
}

/// Largest admissible tolerance percentage.
pub fn p_max(c: &BoundConstants) -> f64 {
    150.0 * c.delta_c
}

/// Sample size per arm guaranteeing relative error below p percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceReport {
    pub p: f64,
    pub p_max: f64,
    pub m: u64,
    /// Components m_min1..m_min4 evaluated at `m`.
    pub m_min: [f64; 4],
    /// Infimum m satisfying all four component inequalities.
    pub m_min_inf: f64,
    pub m_min_binding: f64,
    pub binding: String,
    pub n: f64,
    pub feasible: bool,
    pub conditions: Vec<Condition>,
    pub diagnostics: Vec<String>,
}

fn m_min_components(c: &BoundConstants, m: f64, p: f64) -> [f64; 4] {
    let b = c.beta;
    let dc = c.delta_c;
    let bracket = ((2400.0 / (PI * PI * c.c2 * c.c6)).ln() - p.ln()) / 3.0 + m.ln();
    let m1 = if b == 0.0 {
        0.0
    } else {
        1.0 / (4.0 * 150f64.powi(3)) * c.c2.powi(3) / (c.c6 * c.c3.powi(4)) * (b / (2.0 - b)).powi(2) * p.powi(3)
            / dc.powf(4.0 - 2.0 * b)
    };
    let m2 = if dc.is_infinite() { 0.0 } else { p.powi(3) / (6e6 * c.c2 * c.c6 * dc.powi(4)) * bracket * bracket };
    let m3 = PI.powf(2.0 / 3.0) / (2.0 * 10f64.powf(2.0 / 3.0) * 3f64.cbrt()) * c.c6.cbrt() * c.c2.cbrt() * p.cbrt();
    let m4 = 27.0 * 100.0 / 32.0 / (c.c2 * c.c6 * p) * bracket * bracket;
    [m1, m2, m3, m4]
}

fn m_ok(c: &BoundConstants, m: f64, p: f64) -> bool {
    let v = m_min_components(c, m, p);
    m > v[0] && m >= v[1] && m > v[2] && m >= v[3]
}

/// Infimum of the m satisfying all four m_min inequalities (which depend on
/// m only through log m), by doubling and bisection over m ≥ 1.
pub fn m_min(c: &BoundConstants, p: f64) -> f64 {
    let (mut lo, mut hi) = (1.0, 1.0);
    if m_ok(c, 1.0, p) {
        // the m-free components still bound the infimum from below
        let v = m_min_components(c, 1.0, p);
        return v[0].max(v[2]).min(1.0);
    }
    while !m_ok(c, hi, p) {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m_ok(c, mid, p) {
            hi = mid
        } else {
            lo = mid
        }
    }
    hi
}

/// Evaluates every condition of the tolerance theorem without failing.
/// The m_min components are evaluated at the given m.
pub fn tolerance_report(c: &BoundConstants, m: u64, p: f64) -> ToleranceReport {
    let b = c.beta;
    let mf = m as f64;
    let m_min_v = m_min_components(c, mf, p);
    let [m1, m2, m3, m4] = m_min_v;
    let names = ["m_min1", "m_min2", "m_min3", "m_min4"];
    let (bi, bv) = m_min_v.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
    let pm = p_max(c);
    let conditions = vec![
        Condition::new("p_positive", p, ">", 0.0),
        Condition::new("p_max", p, "<=", pm),
        Condition::new("beta_below_4_3", b, "<", 4.0 / 3.0),
        Condition::new("m_min1", mf, ">", m1),
        Condition::new("m_min2", mf, ">=", m2),
        Condition::new("m_min3", mf, ">", m3),
        Condition::new("m_min4", mf, ">=", m4),
    ];
    let n = (2.0 * 150f64.powf(1.5) * c.c6.sqrt() / (c.c2.powf(1.5) * p.powf(1.5)) * mf.sqrt()).ceil();
    let diagnostics: Vec<String> = conditions
        .iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{}: {} {} {} fails", c.name, c.lhs, c.relation, c.rhs))
        .collect();
    ToleranceReport {
        p,
        p_max: pm,
        m,
        m_min: m_min_v,
        m_min_inf: if p > 0.0 { m_min(c, p) } else { f64::NAN },
        m_min_binding: bv,
        binding: names[bi].to_string(),
        n,
        feasible: diagnostics.is_empty(),
        conditions,
        diagnostics,
    }
}

/// Required n for tolerance `p` percent; errors name the violated condition.
pub fn n_for_tolerance(c: &BoundConstants, fam: &PowerVarianceFamily, m: u64, p: f64) -> Result<ToleranceReport> {
    if fam.beta != c.beta {
        return Err(Error::InvalidArgument("constants were derived from a different family".into()));
    }
    let r = tolerance_report(c, m, p);
    if r.feasible {
        return Ok(r);
    }
    let first = r.conditions.iter().find(|c| !c.ok).expect("infeasible has a violation");
    let msg = match first.name.as_str() {
        "p_max" => format!("p = {p} exceeds p_max = {}", r.p_max),
        "p_positive" => format!("p = {p} must be positive"),
        "beta_below_4_3" => format!("beta = {} must be below 4/3", c.beta),
        name => format!(
            "m = {m} fails {name} (binding component {} = {})",
            r.binding, r.m_min_binding
        ),
    };
    Err(Error::Conditions(msg))
}

/// Kurtosis of the standardized difference of two independent variables.
pub fn kurtosis_diff_bound(sig1: f64, sig2: f64, kap1: f64, kap2: f64) -> Result<f64> {
    if !(sig1 > 0.0 && sig2 > 0.0) {
        return Err(Error::InvalidArgument("standard deviations must be positive".into()));
    }
    if !(kap1 >= 1.0 && kap2 >= 1.0) {
        return Err(Error::InvalidArgument("kurtosis is at least 1".into()));
    }
    let (a, b) = (sig1 * sig1, sig2 * sig2);
    Ok((b * b * kap2 + 6.0 * a * b + a * a * kap1) / ((a + b) * (a + b)))
}

/// Kurtosis bound valid for any difference within a family.
pub fn familywise_kurtosis_bound(kappa_ub: f64) -> f64 {
    kappa_ub.max(3.0)
}

/// Relative error of MME over sampled candidates from the stage errors.
pub fn err3_compose(err1: f64, err2: f64) -> f64 {
    err1 + err1 * err2 + err2
}

/// Mills-ratio bound φ(a)/a on the Gaussian upper tail Φ(−a), a > 0.
pub fn gaussian_tail_bound(a: f64) -> f64 {
    normal_pdf(a) / a
}

/// One row of a δ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub delta: f64,
    pub z0_ub: f64,
    pub ub3_normal: f64,
    pub ub3_be: f64,
    pub ub3_gen: f64,
}

pub fn delta_grid(c: &BoundConstants, n: u64, deltas: &[f64]) -> Vec<GridRow> {
    deltas
        .iter()
        .map(|&d| GridRow {
            delta: d,
            z0_ub: zscore_ub(c, n, d),
            ub3_normal: rel_error_ub3_normal(c, n, d),
            ub3_be: rel_error_ub3_be(c, n, d),
            ub3_gen: rel_error_ub3_gen(c, n, d),
        })
        .collect()
}

/// Everything the `bounds` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub family: PowerVarianceFamily,
    pub constants: BoundConstants,
    pub p_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<ToleranceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ub5: Option<Ub5Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasible_region: Option<FeasibleRegion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridRow>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chi2() -> BoundConstants {
        derive_constants(&PowerVarianceFamily::noncentral_chi2(), 32.0).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn chi2_constants() {
        let c = chi2();
        assert_eq!((c.c1, c.delta_c), (1.0, 1.0));
        assert!(close(c.c2, 0.25, 1e-15) && close(c.c3, 0.25, 1e-15));
        // independent arithmetic: 15^(3/4), 32·that, cube root / C2 · 3 / 2^(1/3)
        let c5 = (15f64.ln() * 0.75).exp();
        assert!(close(c.c5, c5, 1e-14));
        assert!((c.c5 - 7.622).abs() < 1e-3);
        assert!((c.c6 - 243.9).abs() < 0.05);
        assert!((c.c7 - 59.5).abs() < 0.05);
        assert!(close(c.c7, (32.0 * c5).powf(1.0 / 3.0) * 4.0 * 3.0 / 2f64.powf(1.0 / 3.0), 1e-13));
    }

    #[test]
    fn constant_branches_and_errors() {
        let g = derive_constants(&PowerVarianceFamily::gaussian(1.0, 1.0), 32.0).unwrap();
        assert!(g.delta_c.is_infinite());
        assert!(close(g.c2, 1.0 / 2f64.sqrt(), 1e-15));
        let f = PowerVarianceFamily { kappa_ub: 1.0, ..PowerVarianceFamily::noncentral_chi2() };
        assert!(close(derive_constants(&f, 32.0).unwrap().c5, 3f64.powf(0.75), 1e-15));
        let f = PowerVarianceFamily { beta: 2.5, ..PowerVarianceFamily::noncentral_chi2() };
        assert!(derive_constants(&f, 32.0).is_err());
        assert!(derive_constants(&PowerVarianceFamily::noncentral_chi2(), 33.0).is_err());
        // k_var > 0 gives C1 > 1 and δ_c from C1^(1/β) − 1
        let f = PowerVarianceFamily { alpha: 1.0, beta: 0.5, gamma: 1.0, k_var: 10.0, kappa_ub: 3.0 };
        let c = derive_constants(&f, 32.0).unwrap();
        assert!(close(c.c1, 21.0, 1e-15));
        assert!(close(c.delta_c, 440.0, 1e-12));
        assert!(close(c.c2 * c.delta_c, c.c3 * c.delta_c.powf(0.75), 1e-12));
    }

    #[test]
    fn zscore_examples() {
        let g = PowerVarianceFamily { alpha: 1.0, beta: 0.0, gamma: 1.0, k_var: 0.0, kappa_ub: 3.0 };
        assert_eq!(zscore_of_zero(&g, 1.0, 0.0, 4).unwrap(), 0.0);
        assert!(close(zscore_of_zero(&g, 1.0, 1.0, 4).unwrap(), -(2f64.sqrt()), 1e-15));
        let f = PowerVarianceFamily::noncentral_chi2();
        assert!(close(zscore_of_zero(&f, 1.0, 1.0, 100).unwrap(), -5.0 / 2f64.sqrt(), 1e-15));
        assert!(zscore_of_zero(&f, 0.5, 1.0, 100).is_err());
        let bad = PowerVarianceFamily { alpha: 1.0, beta: 0.0, gamma: 1.0, k_var: -1.0, kappa_ub: 3.0 };
        assert!(zscore_of_zero(&bad, 1.0, 0.0, 1).is_err());
        let c = chi2();
        assert!(close(zscore_ub(&c, 100, 0.5), -1.25, 1e-15));
        assert!(close(zscore_ub(&c, 100, 4.0), -5.0, 1e-15));
    }

    #[test]
    fn ub3_examples() {
        let c = chi2();
        let v = rel_error_ub3_normal(&c, 100, 0.5);
        assert!(close(v, 0.398_942_280_401_432_7 * 0.4 * (-0.78125f64).exp(), 1e-12));
        assert!((v - 0.0731).abs() < 1e-4);
        let be = rel_error_ub3_be(&c, 100, 0.5);
        assert!(close(be, c.c6 / (0.25f64.powi(3) * 1e4) * 4.0, 1e-14));
        assert!((be - 6.24).abs() < 0.01);
        assert!(close(rel_error_ub3_be(&c, 200, 0.5), be / 4.0, 1e-14));
        assert_eq!(rel_error_ub3_gen(&c, 100, 0.5), v + be);
    }

    #[test]
    fn thresholds() {
        let c = chi2();
        let n = 10_000;
        let t0 = 1.0 / (SQRT_2PI * c.c2 * 100.0);
        assert_eq!(delta_th_normal(&c, n, t0 * 1.5).unwrap(), 0.0);
        let t = t0 / std::f64::consts::E;
        assert!(close(delta_th_normal(&c, n, t).unwrap(), (2.0 / (c.c2 * c.c2 * 1e4)).sqrt(), 1e-12));
        let d = delta_th_normal(&c, n, 1e-3).unwrap();
        assert!(d > 0.0);
        assert!(close(rel_error_ub3_normal(&c, n, d), 1e-3, 1e-10));
        assert!(delta_th_normal(&c, n, 0.0).is_err());
        // above the Gaussian threshold only the BE term remains
        let t = 0.5;
        assert_eq!(delta_th_gen(&c, n, t).unwrap(), delta_be_inverse(&c, n, t));
        assert!(matches!(delta_th_gen(&c, 10, 1e-3), Err(Error::Conditions(_))));
    }

    #[test]
    fn ub4_tstar_ub5() {
        let c = chi2();
        assert_eq!(rel_error_ub4(0.0, 0.1, 5), 0.5);
        assert_eq!(rel_error_ub4(0.3, 0.1, 2), 0.5);
        let ts = t_star(&c, 10_000, 100);
        let direct = c.c6.cbrt() / (2f64.cbrt() * 0.25 * 1e4f64.powf(2.0 / 3.0) * 100f64.powf(2.0 / 3.0));
        assert!(close(ts, direct, 1e-14));
        assert!(close(t_star(&c, 40_000, 100) * 4f64.powf(2.0 / 3.0), ts, 1e-13));
        let r = rel_error_ub5(&c, 10_000, 100);
        assert!((r.value - 0.595).abs() < 1e-3);
        assert!(r.conditions_ok);
        let r3 = rel_error_ub5(&c, 1_000, 100);
        assert!(!r3.conditions_ok);
        assert!(!r3.conditions.iter().find(|c| c.name == "be_inverse").unwrap().ok);
        assert!(rel_error_ub5(&c, 100_000, 100).conditions_ok);
        let ub4 = rel_error_ub4(delta_be_inverse(&c, 10_000, ts), ts, 100);
        assert!(close(ub4, r.value, 1e-10));
        assert!(close(rel_error_ub5(&c, 30_000, 400).value, rel_error_ub5(&c, 7_500, 25).value, 1e-12));
    }

    #[test]
    fn feasible_region_chi2() {
        let c = chi2();
        let f = feasible_region(&c, 10_000).unwrap();
        assert!(!f.empty);
        let g_lo = feasible_g(&c, 10_000, f.lower.max(1.0));
        for (i, g) in g_lo[..4].iter().enumerate() {
            if f.roots[i].is_finite() {
                assert!(*g >= -1e-9 * f.lower, "g{} = {g}", i + 1);
            }
        }
        assert!(feasible_g(&c, 10_000, f.upper)[4] <= 0.0);
        assert!(feasible_g(&c, 10_000, f.upper * (1.0 + 1e-9))[4] > 0.0);
        let approx = 2.0 * c.c6 * c.c6 * 1e8 / feasible_g_log(&c, 10_000, f.upper).powi(3);
        assert!(close(f.upper, approx, 1e-6));
        assert!(f.contains(f.upper));
        assert!(feasible_region(&c, 5).is_err());
        let f4 = feasible_region(&c, 40_000).unwrap();
        let up = f4.upper / f.upper;
        let lo = f4.lower / f.lower;
        assert!(up > 10.0 && up < 16.0, "{up}");
        assert!(lo > 1.5 && lo < 2.5, "{lo}");
    }

    fn feasible_g_log(c: &BoundConstants, m: u64, n: f64) -> f64 {
        -((PI.sqrt() * c.c6.cbrt()) / (2f64.powf(5.0 / 6.0) * (m as f64).powf(2.0 / 3.0) * n.powf(1.0 / 6.0))).ln()
    }

    #[test]
    fn tolerance() {
        let c = chi2();
        let f = PowerVarianceFamily::noncentral_chi2();
        let r = n_for_tolerance(&c, &f, 1_000_000, 5.0).unwrap();
        let expect = (2.0 * 150f64.powf(1.5) * c.c6.sqrt() / (0.25f64.powf(1.5) * 5f64.powf(1.5)) * 1000.0).ceil();
        assert_eq!(r.n, expect);
        assert!((r.n / 4.11e7 - 1.0).abs() < 0.01);
        assert!(r.feasible && r.conditions.iter().all(|c| c.ok));
        let r4 = n_for_tolerance(&c, &f, 4_000_000, 5.0).unwrap();
        assert!((r4.n / r.n - 2.0).abs() < 1e-6);
        let e = n_for_tolerance(&c, &f, 1_000_000, 151.0).unwrap_err().to_string();
        assert!(e.contains("p_max"));
        let e = n_for_tolerance(&c, &f, 100, 0.01).unwrap_err().to_string();
        assert!(e.contains("m_min4"), "{e}");
        let mm = m_min(&c, 0.01);
        assert!(mm > 100.0);
        assert!(n_for_tolerance(&c, &f, mm.ceil() as u64 + 1, 0.01).is_ok());
        assert!(n_for_tolerance(&c, &f, mm.floor() as u64 - 1, 0.01).is_err());
        // m_min3 alone binds at p = 5: infimum is its value
        assert!(close(m_min(&c, 5.0), r.m_min[2], 1e-12));
        let heavy = PowerVarianceFamily { beta: 1.5, ..f };
        let ch = derive_constants(&heavy, 32.0).unwrap();
        assert!(n_for_tolerance(&ch, &heavy, 1_000_000, 5.0).unwrap_err().to_string().contains("4/3"));
    }

    #[test]
    fn kurtosis() {
        assert_eq!(kurtosis_diff_bound(1.0, 1.0, 3.0, 3.0).unwrap(), 3.0);
        assert_eq!(kurtosis_diff_bound(2.0, 2.0, 15.0, 15.0).unwrap(), 9.0);
        assert!(close(kurtosis_diff_bound(1e-6, 1.0, 15.0, 7.0).unwrap(), 7.0, 1e-9));
        assert!(kurtosis_diff_bound(0.0, 1.0, 3.0, 3.0).is_err());
        assert_eq!(familywise_kurtosis_bound(1.0), 3.0);
        assert_eq!(familywise_kurtosis_bound(15.0), 15.0);
    }

    #[test]
    fn compose() {
        assert_eq!(err3_compose(0.0, 0.0), 0.0);
        assert!(close(err3_compose(0.01, 0.02), 0.0302, 1e-14));
        assert_eq!(err3_compose(1.0, 1.0), 3.0);
    }

    #[test]
    fn report_serializes() {
        let c = chi2();
        let r = BoundReport {
            family: PowerVarianceFamily::noncentral_chi2(),
            constants: c,
            p_max: p_max(&c),
            tolerance: Some(tolerance_report(&c, 1000, 5.0)),
            ub5: Some(rel_error_ub5(&c, 1000, 100)),
            feasible_region: None,
            grid: Some(delta_grid(&c, 100, &[0.5, 1.0, 2.0])),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"c7\""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kurtosis_diff_below_familywise(s1 in 0.01f64..10.0, s2 in 0.01f64..10.0, k1 in 1.0f64..50.0, k2 in 1.0f64..50.0) {
                let kd = kurtosis_diff_bound(s1, s2, k1, k2).unwrap();
                prop_assert!(kd <= familywise_kurtosis_bound(k1.max(k2)) * (1.0 + 1e-12));
            }

            #[test]
            fn z0_dominated(beta in 0.0f64..2.0, mu in 1.0f64..50.0, delta in 0.001f64..50.0, n in 1u64..100_000) {
                let f = PowerVarianceFamily { alpha: 2.0, beta, gamma: 1.0, k_var: -1.0, kappa_ub: 9.0 };
                let c = derive_constants(&f, 32.0).unwrap();
                let z = zscore_of_zero(&f, mu, delta, n).unwrap();
                prop_assert!(z <= zscore_ub(&c, n, delta) * (1.0 - 1e-12));
            }
        }
    }
}
