//! K-medoids search: MCPAM, the GPAM inner step, PAM, K++ seeding and
//! exhaustive oracles.

mod eval;
mod exhaustive;
mod gpam;
mod kpp;
mod mcpam;

pub use eval::{eval_swaps_chunk, Candidate, SampleCache, SwapReduction};
pub use exhaustive::{exhaustive_medoid, EXHAUSTIVE_TUPLE_CAP};
pub use gpam::{gpam_inner, gpam_inner_shared, pam};
pub use kpp::{kpp_init, kpp_init_indices};
pub use mcpam::{mcpam, mcpam_single, mcpam_with_backend, LocalBackend, SwapBackend};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, KTuple};
use crate::eccentricity::{EccAccumulator, EccEstimate};
use crate::error::{Error, Result};
use crate::metric::Metric;

/// Settings for [`mcpam`] and [`mcpam_single`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpamConfig {
    pub k: usize,
    pub tau: f64,
    pub n_start: usize,
    pub growth: usize,
    /// Cap on the inner sample size; `None` means max(|data|, n_start).
    pub n_max: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub practical_opts: bool,
}

impl Default for McpamConfig {
    fn default() -> Self {
        McpamConfig { k: 1, tau: 0.0, n_start: 1000, growth: 10, n_max: None, alpha: 0.05, seed: 0, practical_opts: false }
    }
}

impl McpamConfig {
    pub fn resolved_n_max(&self, m: usize) -> usize {
        self.n_max.unwrap_or(m.max(self.n_start))
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |s: &str| Err(Error::Config(s.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if m < self.k {
            return Err(Error::Config(format!("{} points cannot hold {} medoids", m, self.k)));
        }
        if self.n_start == 0 {
            return bad("n_start must be at least 1");
        }
        if self.growth < 2 {
            return bad("growth must be at least 2");
        }
        if self.resolved_n_max(m) < self.n_start {
            return bad("n_max must be at least n_start");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0,1)");
        }
        Ok(())
    }
}

/// Why an inner round ended the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    /// No candidate can be significantly better than the current tuple.
    NoImprovement,
    /// A candidate is significantly better; it was swapped in.
    Improvement,
    /// Inconclusive; the sample size grows.
    Escalate,
    /// Inconclusive at n_max; left without swapping.
    NMaxReached,
    /// Swap proposed but the full-data eccentricity did not drop.
    NotDecreasing,
    /// PAM sweep that improved the tuple.
    Swept,
    /// PAM sweep whose improvement was at most the tolerance.
    Converged,
}

/// One inner round (MCPAM) or one sweep (PAM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer: usize,
    pub round: usize,
    pub n: usize,
    pub swapped: bool,
    pub exit: ExitReason,
    pub cur: EccEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minhi: Option<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minlo: Option<Candidate>,
    pub tau: f64,
    /// Full-data eccentricity after the swap, when one was taken.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_ecc: Option<f64>,
    pub distance_evals: u64,
}

/// Outcome of a k-medoids search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidResult {
    pub medoid: KTuple,
    /// Eccentricity over the full dataset.
    pub ecc: EccEstimate,
    pub trace: Vec<TraceEntry>,
    pub total_distance_evals: u64,
}

impl MedoidResult {
    /// Swap decisions as (outer, round, candidate index, slot) for every round that swapped.
    pub fn swap_sequence(&self) -> Vec<(usize, usize, usize, usize)> {
        self.trace
            .iter()
            .filter(|t| t.swapped)
            .filter_map(|t| t.minhi.as_ref().map(|c| (t.outer, t.round, c.index, c.slot)))
            .collect()
    }
}

/// Compensated full-data accumulation of Δ over `data` for `t`.
pub(crate) fn full_accumulate(points: &[crate::data::Point], t: &KTuple, metric: &Metric) -> EccAccumulator {
    let mut acc = EccAccumulator::default();
    for p in points {
        acc.push(metric.min_distance(p, t));
    }
    acc
}

/// Full-data eccentricity estimate of `t`.
pub fn full_data_ecc(data: &Dataset, t: &KTuple, metric: &Metric, alpha: f64) -> Result<EccEstimate> {
    full_accumulate(&data.points, t, metric).estimate(alpha)
}

/// Nearest-slot assignment, lowest slot index on ties.
pub fn assign(data: &Dataset, t: &KTuple, metric: &Metric) -> Vec<usize> {
    data.points.iter().map(|p| metric.nearest_slot(p, t)).collect()
}
