//! Familywise bandits: which of m distributions has the smallest mean, from
//! n draws each. Samplers, the argmin estimator, Monte Carlo error, and checks
//! of the measured error against the bounds module.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{err3_compose, rel_error_ub3_gen, rel_error_ub5, BoundConstants, Condition, PowerVarianceFamily};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    /// Normal with variance taken from the family at the arm's mean.
    Gaussian,
    /// (Z + √λ)² with λ = μ − 1.
    NoncentralChiSq1,
}

/// How a sample mean of n draws is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Average n individual draws.
    PerDraw,
    /// Draw the sample mean directly from its exact distribution.
    #[default]
    ExactMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmeInstance {
    pub family: PowerVarianceFamily,
    pub kind: ArmKind,
    pub means: Vec<f64>,
    pub n: u64,
}

impl MmeInstance {
    pub fn new(family: PowerVarianceFamily, kind: ArmKind, means: Vec<f64>, n: u64) -> Result<Self> {
        let inst = MmeInstance { family, kind, means, n };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.means.is_empty() || self.n == 0 {
            return Err(Error::InvalidArgument("need at least one arm and n ≥ 1".into()));
        }
        for &mu in &self.means {
            check_mean(self.kind, &self.family, mu)?;
        }
        Ok(())
    }

    pub fn min_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmeOutcome {
    pub chosen_index: usize,
    pub err_mme: f64,
    pub sample_means: Vec<f64>,
}

fn check_mean(kind: ArmKind, fam: &PowerVarianceFamily, mu: f64) -> Result<()> {
    if !(mu >= fam.gamma) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("arm mean {mu} is below gamma = {}", fam.gamma)));
    }
    if kind == ArmKind::NoncentralChiSq1 && mu < 1.0 {
        return Err(Error::InvalidArgument(format!("non-central chi-square arm needs mean ≥ 1, got {mu}")));
    }
    if kind == ArmKind::Gaussian && !(fam.variance(mu) >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative variance at mean {mu}")));
    }
    Ok(())
}

/// One draw from the arm with mean `mu`.
pub fn sample_arm(kind: ArmKind, fam: &PowerVarianceFamily, mu: f64, rng: &mut Rng) -> Result<f64> {
    check_mean(kind, fam, mu)?;
    Ok(draw(kind, fam, mu, rng))
}

fn draw(kind: ArmKind, fam: &PowerVarianceFamily, mu: f64, rng: &mut Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    match kind {
        ArmKind::Gaussian => mu + fam.variance(mu).sqrt() * z,
        ArmKind::NoncentralChiSq1 => {
            let w = z + (mu - 1.0).sqrt();
            w * w
        }
    }
}

/// Mean of n draws from the arm with mean `mu`.
///
/// With [`Sampling::ExactMean`] the Gaussian mean is N(μ, σ²/n) and the
/// chi-square sum is non-central χ²(n, nλ) = (Z + √(nλ))² + χ²(n − 1).
pub fn sample_mean(kind: ArmKind, fam: &PowerVarianceFamily, mu: f64, n: u64, how: Sampling, rng: &mut Rng) -> Result<f64> {
    check_mean(kind, fam, mu)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be ≥ 1".into()));
    }
    Ok(mean_unchecked(kind, fam, mu, n, how, rng))
}

fn mean_unchecked(kind: ArmKind, fam: &PowerVarianceFamily, mu: f64, n: u64, how: Sampling, rng: &mut Rng) -> f64 {
    let nf = n as f64;
    match how {
        Sampling::PerDraw => {
            let mut s = 0.0;
            for _ in 0..n {
                s += draw(kind, fam, mu, rng);
            }
            s / nf
        }
        Sampling::ExactMean => {
            let z: f64 = rng.sample(StandardNormal);
            match kind {
                ArmKind::Gaussian => mu + (fam.variance(mu) / nf).sqrt() * z,
                ArmKind::NoncentralChiSq1 => {
                    let w = z + (nf * (mu - 1.0)).sqrt();
                    let rest = if n > 1 { ChiSquared::new(nf - 1.0).expect("dof > 0").sample(rng) } else { 0.0 };
                    (w * w + rest) / nf
                }
            }
        }
    }
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// m means lo + (hi − lo)(i/(m−1))^power: power 1 is even spacing, larger
/// powers crowd arms near the minimum.
pub fn packed_means(m: usize, lo: f64, hi: f64, power: f64) -> Result<Vec<f64>> {
    if m == 0 || !(lo <= hi) || !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("bad mean grid m={m} [{lo}, {hi}] power={power}")));
    }
    if m == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..m).map(|i| lo + (hi - lo) * (i as f64 / (m - 1) as f64).powf(power)).collect())
}

/// The standard estimator: index of the minimum sample mean.
pub fn mme_estimate(samples: &[Vec<f64>]) -> Result<usize> {
    let n = samples.first().map(Vec::len).unwrap_or(0);
    if n == 0 {
        return Err(Error::InvalidArgument("empty arm".into()));
    }
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidArgument("arms must have equal sample sizes".into()));
    }
    let means: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
    Ok(argmin(&means))
}

/// Relative exceedance of the chosen arm over the best one.
pub fn relative_exceedance(means: &[f64], chosen: usize) -> f64 {
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    (means[chosen] - lo) / lo
}

pub fn run_trial(inst: &MmeInstance, how: Sampling, rng: &mut Rng) -> MmeOutcome {
    let sample_means: Vec<f64> =
        inst.means.iter().map(|&mu| mean_unchecked(inst.kind, &inst.family, mu, inst.n, how, rng)).collect();
    let chosen_index = argmin(&sample_means);
    MmeOutcome { chosen_index, err_mme: relative_exceedance(&inst.means, chosen_index), sample_means }
}

/// Monte Carlo summary of err_MME.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmeSummary {
    pub trials: u64,
    pub mean: f64,
    pub se: f64,
    /// Fraction of trials choosing the arm of each rank (0 = smallest mean;
    /// equal means keep list order).
    pub rank_freq: Vec<f64>,
}

/// Mean and standard error of `xs`.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (t - 1.0) / t).sqrt())
}

/// Runs `trials` trials, trial t on substream t of `seed`. Independent of
/// the thread count.
pub fn mme_summary(inst: &MmeInstance, trials: u64, seed: u64, how: Sampling) -> Result<MmeSummary> {
    inst.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be ≥ 1".into()));
    }
    let outcomes: Vec<(f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t);
            let o = run_trial(inst, how, &mut r);
            (o.err_mme, o.chosen_index)
        })
        .collect();
    let errs: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let (mean, se) = mean_se(&errs);
    let mut order: Vec<usize> = (0..inst.means.len()).collect();
    order.sort_by(|&a, &b| inst.means[a].total_cmp(&inst.means[b]));
    let mut rank_of = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank_of[i] = r;
    }
    let mut rank_freq = vec![0.0; order.len()];
    for &(_, c) in &outcomes {
        rank_freq[rank_of[c]] += 1.0 / trials as f64;
    }
    Ok(MmeSummary { trials, mean, se, rank_freq })
}

/// Mean err_MME over `trials` trials with its Monte Carlo standard error.
pub fn mme_error(inst: &MmeInstance, trials: u64, seed: u64) -> Result<(f64, f64)> {
    let s = mme_summary(inst, trials, seed, Sampling::ExactMean)?;
    Ok((s.mean, s.se))
}

/// Measured error against the applicable bound. With two arms the bound is
/// the general two-mean bound at their exceedance; otherwise the rate bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub m: u64,
    pub n: u64,
    pub trials: u64,
    pub empirical_err: f64,
    pub se: f64,
    /// "ub3_gen" or "ub5".
    pub bound_kind: String,
    pub bound: f64,
    pub ub5: f64,
    pub ub3_two_mean: Option<f64>,
    pub conditions_ok: bool,
    pub conditions: Vec<Condition>,
    /// None when the bound's conditions are unmet.
    pub pass: Option<bool>,
    pub note: Option<String>,
}

pub fn verify_bound(inst: &MmeInstance, trials: u64, c: &BoundConstants, seed: u64) -> Result<VerifyReport> {
    let s = mme_summary(inst, trials, seed, Sampling::ExactMean)?;
    let m = inst.means.len() as u64;
    let ub5 = rel_error_ub5(c, inst.n, m);
    let ub3 = (m == 2).then(|| {
        let lo = inst.min_mean();
        let hi = inst.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rel_error_ub3_gen(c, inst.n, (hi - lo) / lo)
    });
    let (bound_kind, bound, conditions_ok, conditions) = match ub3 {
        Some(b) => ("ub3_gen", b, true, vec![]),
        None => ("ub5", ub5.value, ub5.conditions_ok, ub5.conditions.clone()),
    };
    let pass = conditions_ok.then(|| s.mean + 3.0 * s.se <= bound);
    Ok(VerifyReport {
        m,
        n: inst.n,
        trials,
        empirical_err: s.mean,
        se: s.se,
        bound_kind: bound_kind.into(),
        bound,
        ub5: ub5.value,
        ub3_two_mean: ub3,
        conditions_ok,
        conditions,
        pass,
        note: (!conditions_ok).then(|| "conditions unmet".to_string()),
    })
}

/// One [`verify_bound`] per n; row i uses seed `seed + i`.
pub fn sweep(
    family: PowerVarianceFamily,
    kind: ArmKind,
    means: &[f64],
    ns: &[u64],
    trials: u64,
    c: &BoundConstants,
    seed: u64,
) -> Result<Vec<VerifyReport>> {
    ns.iter()
        .enumerate()
        .map(|(i, &n)| {
            let inst = MmeInstance::new(family, kind, means.to_vec(), n)?;
            verify_bound(&inst, trials, c, seed.wrapping_add(i as u64))
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[VerifyReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "n", "trials", "empirical_err", "se", "bound", "conditions_ok", "pass"])
        .map_err(|e| Error::Csv { row: 0, msg: e.to_string() })?;
    for r in rows {
        let pass = match r.pass {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        w.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.trials.to_string(),
            r.empirical_err.to_string(),
            r.se.to_string(),
            r.bound.to_string(),
            r.conditions_ok.to_string(),
            pass.to_string(),
        ])
        .map_err(|e| Error::Csv { row: 0, msg: e.to_string() })?;
    }
    w.flush()?;
    Ok(())
}

/// Two-stage experiment: m candidate means drawn uniformly from
/// [prior_lo, prior_hi] (so the population minimum is prior_lo), then MME
/// over them with n draws each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageConfig {
    pub family: PowerVarianceFamily,
    pub kind: ArmKind,
    pub prior_lo: f64,
    pub prior_hi: f64,
    pub m: usize,
    pub n: u64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Err3Report {
    pub err1: f64,
    pub se1: f64,
    pub err2: f64,
    pub se2: f64,
    pub err3: f64,
    pub se3: f64,
    pub composed: f64,
    pub se_composed: f64,
    pub combined_se: f64,
    pub pass: bool,
}

struct StageDraw {
    chosen: f64,
    best: f64,
}

fn two_stage_draws(cfg: &TwoStageConfig, stream_base: u64) -> Vec<StageDraw> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(cfg.seed, stream_base + t);
            let means: Vec<f64> = (0..cfg.m).map(|_| r.random_range(cfg.prior_lo..=cfg.prior_hi)).collect();
            let sm: Vec<f64> =
                means.iter().map(|&mu| mean_unchecked(cfg.kind, &cfg.family, mu, cfg.n, Sampling::ExactMean, &mut r)).collect();
            StageDraw { chosen: means[argmin(&sm)], best: means.iter().copied().fold(f64::INFINITY, f64::min) }
        })
        .collect()
}

/// Ratio of means x̄/ȳ with a delta-method standard error.
fn ratio_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let t = x.len() as f64;
    let (mx, _) = mean_se(x);
    let (my, _) = mean_se(y);
    let r = mx / my;
    if x.len() < 2 {
        return (r, 0.0);
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cxy += (a - mx) * (b - my);
    }
    let d = t - 1.0;
    let var = (vx / d - 2.0 * r * cxy / d + r * r * vy / d) / (t * my * my);
    (r, var.max(0.0).sqrt())
}

/// Measures err₁, err₂ and err₃ on three independent sets of trials and
/// compares err₃ with its composition from err₁ and err₂.
pub fn err3_experiment(cfg: &TwoStageConfig) -> Result<Err3Report> {
    if cfg.m == 0 || cfg.n == 0 || cfg.trials < 2 || !(cfg.prior_lo < cfg.prior_hi) {
        return Err(Error::InvalidArgument("need m, n ≥ 1, trials ≥ 2, prior_lo < prior_hi".into()));
    }
    check_mean(cfg.kind, &cfg.family, cfg.prior_lo)?;
    let nu = cfg.prior_lo;
    let t = cfg.trials;
    let a = two_stage_draws(cfg, 0);
    let b = two_stage_draws(cfg, t);
    let c = two_stage_draws(cfg, 2 * t);
    let gap: Vec<f64> = a.iter().map(|d| d.chosen - d.best).collect();
    let best: Vec<f64> = a.iter().map(|d| d.best).collect();
    let (err1, se1) = ratio_se(&gap, &best);
    let (e2, s2) = mean_se(&b.iter().map(|d| d.best - nu).collect::<Vec<_>>());
    let (e3, s3) = mean_se(&c.iter().map(|d| d.chosen - nu).collect::<Vec<_>>());
    let (err2, se2, err3, se3) = (e2 / nu, s2 / nu, e3 / nu, s3 / nu);
    let composed = err3_compose(err1, err2);
    let se_composed = ((1.0 + err2).powi(2) * se1 * se1 + (1.0 + err1).powi(2) * se2 * se2).sqrt();
    let combined_se = (se3 * se3 + se_composed * se_composed).sqrt();
    Ok(Err3Report {
        err1,
        se1,
        err2,
        se2,
        err3,
        se3,
        composed,
        se_composed,
        combined_se,
        pass: (err3 - composed).abs() <= 3.0 * combined_se,
    })
}
