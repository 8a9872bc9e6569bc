//! K++ seeding.

use rand::Rng as _;

use crate::data::{Dataset, KTuple};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng::Rng;

/// Indices of a K++ seeding: the first uniformly, each next one with
/// probability proportional to its Δ to the slots chosen so far.
pub fn kpp_init_indices(data: &Dataset, k: usize, metric: &Metric, rng: &mut Rng) -> Result<Vec<usize>> {
    let m = data.len();
    if k == 0 || m < k {
        return Err(Error::InvalidArgument(format!("cannot seed {k} medoids from {m} points")));
    }
    let mut chosen = vec![rng.random_range(0..m)];
    let mut w: Vec<f64> = data.points.iter().map(|p| metric.dist(p, &data.points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = w.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = None;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if *wi > 0.0 && u < acc {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave u just past the last partial sum
            pick.unwrap_or_else(|| w.iter().rposition(|x| *x > 0.0).unwrap())
        } else {
            rng.random_range(0..m)
        };
        chosen.push(next);
        for (i, p) in data.points.iter().enumerate() {
            w[i] = w[i].min(metric.dist(p, &data.points[next]));
        }
    }
    Ok(chosen)
}

/// K++ seeding as a k-tuple.
pub fn kpp_init(data: &Dataset, k: usize, metric: &Metric, rng: &mut Rng) -> Result<KTuple> {
    KTuple::from_indices(data, &kpp_init_indices(data, k, metric, rng)?)
}
