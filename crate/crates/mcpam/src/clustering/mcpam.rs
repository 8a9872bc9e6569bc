//! Monte Carlo PAM: swap decisions driven by confidence intervals on
//! sampled eccentricities, with escalating sample sizes.

use rand::Rng as _;
use rayon::prelude::*;

use super::eval::{eval_swaps_chunk, SampleCache, SwapReduction};
use super::{full_accumulate, ExitReason, McpamConfig, MedoidResult, TraceEntry};
use crate::data::{Dataset, KTuple, Point};
use crate::eccentricity::{z_quantile, EccAccumulator, EccEstimate};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng;

/// Where the two heavy steps run: full-data accumulation and swap evaluation.
pub trait SwapBackend {
    /// Σ Δ, Σ Δ² and count of `t` over the whole dataset, plus distance evaluations spent.
    fn full_ecc(&mut self, t: &KTuple) -> Result<(EccAccumulator, u64)>;

    /// Reduced (minhi, minlo) over every swap of `cur` evaluated on `sample`.
    fn eval_swaps(&mut self, cur: &KTuple, sample: &[Point], alpha: f64, z: f64) -> Result<SwapReduction>;
}

/// In-process backend. Candidates are split into fixed-size blocks that may
/// run on a rayon pool; the reduction is a total order, so the result does
/// not depend on the thread count.
pub struct LocalBackend<'a> {
    points: &'a [Point],
    offset: usize,
    metric: &'a Metric,
    pool: Option<&'a rayon::ThreadPool>,
}

const BLOCK: usize = 512;

impl<'a> LocalBackend<'a> {
    pub fn new(data: &'a Dataset, metric: &'a Metric) -> Self {
        LocalBackend::over(&data.points, 0, metric)
    }

    /// Backend over a slice whose first point has global index `offset`.
    pub fn over(points: &'a [Point], offset: usize, metric: &'a Metric) -> Self {
        LocalBackend { points, offset, metric, pool: None }
    }

    pub fn with_pool(mut self, pool: &'a rayon::ThreadPool) -> Self {
        self.pool = Some(pool);
        self
    }
}

impl SwapBackend for LocalBackend<'_> {
    fn full_ecc(&mut self, t: &KTuple) -> Result<(EccAccumulator, u64)> {
        let acc = full_accumulate(self.points, t, self.metric);
        Ok((acc, (self.points.len() * t.k()) as u64))
    }

    fn eval_swaps(&mut self, cur: &KTuple, sample: &[Point], alpha: f64, z: f64) -> Result<SwapReduction> {
        let cache = SampleCache::new(cur, sample, self.metric);
        let metric = self.metric;
        let offset = self.offset;
        let run = |(b, chunk): (usize, &[Point])| eval_swaps_chunk(chunk, offset + b * BLOCK, sample, &cache, metric, alpha, z);
        let red = match self.pool {
            Some(pool) if pool.current_num_threads() > 1 => pool.install(|| {
                self.points.par_chunks(BLOCK).enumerate().map(run).reduce(|| None, SwapReduction::merge_opt)
            }),
            _ => self.points.chunks(BLOCK).enumerate().map(run).fold(None, SwapReduction::merge_opt),
        };
        let mut red = red.ok_or_else(|| Error::InvalidArgument("no swap candidates".into()))?;
        red.distance_evals += cache.distance_evals();
        Ok(red)
    }
}

/// MCPAM over an in-memory dataset.
pub fn mcpam(data: &Dataset, cfg: &McpamConfig, metric: &Metric, init: KTuple) -> Result<MedoidResult> {
    let mut backend = LocalBackend::new(data, metric);
    mcpam_with_backend(data, cfg, init, &mut backend, false)
}

/// The single-medoid variant: one unified loop in which only a conclusive
/// "no improvement" (or the n_max cap) ends the search.
pub fn mcpam_single(data: &Dataset, cfg: &McpamConfig, metric: &Metric, init: KTuple) -> Result<MedoidResult> {
    if cfg.k != 1 {
        return Err(Error::Config(format!("single-medoid variant needs k = 1, got {}", cfg.k)));
    }
    let mut backend = LocalBackend::new(data, metric);
    mcpam_with_backend(data, cfg, init, &mut backend, true)
}

enum Decision {
    NoImprovement,
    Improvement,
    Inconclusive,
}

fn decide(cfg: &McpamConfig, cur: &EccEstimate, red: &SwapReduction) -> Decision {
    let tau = cfg.tau;
    if cfg.practical_opts {
        let h = &red.minhi.est;
        let c = cur.mean;
        if c >= h.lo - tau && c <= h.hi + tau {
            Decision::NoImprovement
        } else if c > h.hi + tau {
            Decision::Improvement
        } else {
            Decision::Inconclusive
        }
    } else if cur.hi < red.minlo.est.lo + tau {
        Decision::NoImprovement
    } else if cur.lo >= red.minhi.est.hi + tau {
        Decision::Improvement
    } else {
        Decision::Inconclusive
    }
}

fn draw_sample(data: &Dataset, n: usize, seed: u64, stream: u64) -> Vec<Point> {
    let mut r = rng::stream(seed, stream);
    let m = data.len();
    (0..n).map(|_| data.points[r.random_range(0..m)].clone()).collect()
}

/// MCPAM with the heavy steps delegated to `backend`. Sampling and all
/// decisions happen here, so any backend sees the same sample sequence.
pub fn mcpam_with_backend<B: SwapBackend + ?Sized>(
    data: &Dataset,
    cfg: &McpamConfig,
    init: KTuple,
    backend: &mut B,
    single: bool,
) -> Result<MedoidResult> {
    let m = data.len();
    cfg.validate(m)?;
    if init.k() != cfg.k {
        return Err(Error::Config(format!("init has {} slots, k = {}", init.k(), cfg.k)));
    }
    for s in &init.slots {
        data.schema.check(s)?;
    }
    let z = z_quantile(cfg.alpha)?;
    let n_max = cfg.resolved_n_max(m);
    let mut evals = 0u64;
    let mut trace = Vec::new();

    let mut cur = init;
    let (acc, ev) = backend.full_ecc(&cur)?;
    evals += ev;
    let mut cur_est = acc.estimate_with_z(cfg.alpha, z)?;

    let mut outer = 0usize;
    let mut n = cfg.n_start;
    let mut round = 0usize;
    loop {
        if !single {
            n = cfg.n_start;
            round = 0;
        }
        // Some((tuple, estimate)) when the inner loop swapped.
        let mut new: Option<(KTuple, EccEstimate)> = None;
        let mut finished = false;
        loop {
            let sample = draw_sample(data, n, cfg.seed, rng::round_stream(outer as u64, round as u64));
            let red = backend.eval_swaps(&cur, &sample, cfg.alpha, z)?;
            let mut entry = TraceEntry {
                outer,
                round,
                n,
                swapped: false,
                exit: ExitReason::Escalate,
                cur: cur_est,
                minhi: Some(red.minhi),
                minlo: Some(red.minlo),
                tau: cfg.tau,
                new_ecc: None,
                distance_evals: red.distance_evals,
            };
            evals += red.distance_evals;
            round += 1;
            match decide(cfg, &cur_est, &red) {
                Decision::NoImprovement => {
                    entry.exit = ExitReason::NoImprovement;
                    trace.push(entry);
                    finished = true;
                    break;
                }
                Decision::Improvement => {
                    let t = cur.swapped(red.minhi.slot, &data.points[red.minhi.index]);
                    let (acc, ev) = backend.full_ecc(&t)?;
                    evals += ev;
                    entry.distance_evals += ev;
                    let est = acc.estimate_with_z(cfg.alpha, z)?;
                    entry.new_ecc = Some(est.mean);
                    if est.mean < cur_est.mean {
                        entry.swapped = true;
                        entry.exit = ExitReason::Improvement;
                        new = Some((t, est));
                    } else {
                        entry.exit = ExitReason::NotDecreasing;
                        finished = true;
                    }
                    trace.push(entry);
                    break;
                }
                Decision::Inconclusive => {
                    if n >= n_max {
                        entry.exit = ExitReason::NMaxReached;
                        trace.push(entry);
                        finished = true;
                        break;
                    }
                    trace.push(entry);
                    n = n.saturating_mul(cfg.growth).min(n_max);
                }
            }
        }
        match new {
            Some((t, est)) if !finished => {
                cur = t;
                cur_est = est;
                outer += 1;
            }
            _ => break,
        }
    }
    Ok(MedoidResult { medoid: cur, ecc: cur_est, trace, total_distance_evals: evals })
}
