//! Swap-candidate evaluation shared by the single-node and worker paths.

use serde::{Deserialize, Serialize};

use crate::data::{KTuple, Point};
use crate::eccentricity::{moments_estimate, EccEstimate};
use crate::metric::Metric;

/// A swap candidate: data point `index` placed into slot `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub slot: usize,
    pub est: EccEstimate,
}

impl Candidate {
    fn key(&self) -> (usize, usize) {
        (self.index, self.slot)
    }

    /// True if `self` precedes `other` by (hi, index, slot).
    pub fn before_by_hi(&self, other: &Candidate) -> bool {
        self.est.hi < other.est.hi || (self.est.hi == other.est.hi && self.key() < other.key())
    }

    /// True if `self` precedes `other` by (lo, index, slot).
    pub fn before_by_lo(&self, other: &Candidate) -> bool {
        self.est.lo < other.est.lo || (self.est.lo == other.est.lo && self.key() < other.key())
    }
}

/// The best candidates of a range: lowest upper bound and lowest lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapReduction {
    pub minhi: Candidate,
    pub minlo: Candidate,
    pub distance_evals: u64,
}

impl SwapReduction {
    /// Associative, commutative merge under the lexicographic tie-break.
    pub fn merge(self, other: SwapReduction) -> SwapReduction {
        SwapReduction {
            minhi: if other.minhi.before_by_hi(&self.minhi) { other.minhi } else { self.minhi },
            minlo: if other.minlo.before_by_lo(&self.minlo) { other.minlo } else { self.minlo },
            distance_evals: self.distance_evals + other.distance_evals,
        }
    }

    pub fn merge_opt(a: Option<SwapReduction>, b: Option<SwapReduction>) -> Option<SwapReduction> {
        match (a, b) {
            (Some(a), Some(b)) => Some(a.merge(b)),
            (a, None) => a,
            (None, b) => b,
        }
    }
}

/// Per-sample distances to the current tuple: nearest, second nearest, and
/// which slot is nearest.
#[derive(Debug, Clone)]
pub struct SampleCache {
    near: Vec<f64>,
    second: Vec<f64>,
    near_slot: Vec<usize>,
    k: usize,
}

impl SampleCache {
    /// Costs k·n distance evaluations.
    pub fn new(cur: &KTuple, sample: &[Point], metric: &Metric) -> SampleCache {
        let n = sample.len();
        let mut near = vec![f64::INFINITY; n];
        let mut second = vec![f64::INFINITY; n];
        let mut near_slot = vec![0; n];
        for (j, y) in sample.iter().enumerate() {
            for (l, s) in cur.slots.iter().enumerate() {
                let d = metric.dist(y, s);
                if d < near[j] {
                    second[j] = near[j];
                    near[j] = d;
                    near_slot[j] = l;
                } else if d < second[j] {
                    second[j] = d;
                }
            }
        }
        SampleCache { near, second, near_slot, k: cur.k() }
    }

    pub fn distance_evals(&self) -> u64 {
        (self.k * self.near.len()) as u64
    }
}

/// Evaluates every swap (i, l) for candidates `cands` (global indices start
/// at `offset`) against `sample`, returning the range's minhi and minlo.
///
/// Each candidate costs one distance per sample point. With k = 1 the sums
/// are the plain sequential sums of Δ; with k > 1 the per-slot sums are
/// formed as a shared base plus per-slot corrections, equal to the direct
/// sums up to rounding.
pub fn eval_swaps_chunk(
    cands: &[Point],
    offset: usize,
    sample: &[Point],
    cache: &SampleCache,
    metric: &Metric,
    alpha: f64,
    z: f64,
) -> Option<SwapReduction> {
    let n = sample.len();
    let k = cache.k;
    let mut best: Option<SwapReduction> = None;
    let mut dsum = vec![0.0; k];
    let mut dsq = vec![0.0; k];
    for (ii, x) in cands.iter().enumerate() {
        let index = offset + ii;
        if k == 1 {
            let (mut s, mut sq) = (0.0, 0.0);
            for y in sample {
                let d = metric.dist(x, y);
                s += d;
                sq += d * d;
            }
            let est = moments_estimate(s, sq, n as u64, alpha, z);
            consider(&mut best, Candidate { index, slot: 0, est });
            continue;
        }
        dsum.iter_mut().for_each(|v| *v = 0.0);
        dsq.iter_mut().for_each(|v| *v = 0.0);
        let (mut base, mut base_sq) = (0.0, 0.0);
        for (j, y) in sample.iter().enumerate() {
            let d = metric.dist(x, y);
            let b = d.min(cache.near[j]);
            base += b;
            base_sq += b * b;
            let a = d.min(cache.second[j]);
            if a != b {
                let l = cache.near_slot[j];
                dsum[l] += a - b;
                dsq[l] += a * a - b * b;
            }
        }
        for l in 0..k {
            let est = moments_estimate(base + dsum[l], base_sq + dsq[l], n as u64, alpha, z);
            consider(&mut best, Candidate { index, slot: l, est });
        }
    }
    if let Some(b) = best.as_mut() {
        b.distance_evals = (cands.len() * n) as u64;
    }
    best
}

#[inline]
fn consider(best: &mut Option<SwapReduction>, c: Candidate) {
    match best {
        None => *best = Some(SwapReduction { minhi: c, minlo: c, distance_evals: 0 }),
        Some(b) => {
            if c.before_by_hi(&b.minhi) {
                b.minhi = c;
            }
            if c.before_by_lo(&b.minlo) {
                b.minlo = c;
            }
        }
    }
}
