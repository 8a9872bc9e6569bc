//! Exact medoids by enumeration.

use crate::data::{Dataset, KTuple};
use crate::error::{Error, Result};
use crate::metric::Metric;

/// Largest number of (tuple, point) distance sweeps enumerated for k > 1.
pub const EXHAUSTIVE_TUPLE_CAP: f64 = 5e7;

/// Values within this relative distance count as ties and go to the lower index.
const TIE_REL: f64 = 1e-12;

/// Exact argmin of full-data eccentricity over all k-subsets of the data,
/// enumerated in lexicographic index order. Returns the tuple and its mean Δ.
pub fn exhaustive_medoid(data: &Dataset, k: usize, metric: &Metric) -> Result<(KTuple, f64)> {
    let m = data.len();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!("k = {k} with {m} points")));
    }
    let work = binomial(m, k) * m as f64;
    if k > 1 && work > EXHAUSTIVE_TUPLE_CAP {
        return Err(Error::InvalidArgument(format!("exhaustive search too large ({work:.3e} evaluations)")));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let t = KTuple::from_indices(data, &idx)?;
        let mut s = 0.0;
        for p in &data.points {
            s += metric.min_distance(p, &t);
        }
        let e = s / m as f64;
        match &best {
            Some((_, b)) if !(e < *b - TIE_REL * b.abs()) => {}
            _ => best = Some((idx.clone(), e)),
        }
        if !next_combination(&mut idx, m) {
            break;
        }
    }
    let (idx, e) = best.expect("at least one tuple");
    Ok((KTuple::from_indices(data, &idx)?, e))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{MetricKind, MetricSpec};

    fn l1(d: &Dataset) -> Metric {
        Metric::new(&MetricSpec::new(MetricKind::L1), &d.schema).unwrap()
    }

    #[test]
    fn five_and_seven_point_sets() {
        let d = Dataset::from_scalars(&[90.0, 170.0, 60.0, 200.0, 190.0]).unwrap();
        let (t, e) = exhaustive_medoid(&d, 1, &l1(&d)).unwrap();
        assert_eq!(t.slots[0].numeric[0], 170.0);
        assert_eq!(e, 48.0);
        let d = Dataset::from_scalars(&[90.0, 170.0, 60.0, 200.0, 190.0, -10.0, 150.0]).unwrap();
        let (t, _) = exhaustive_medoid(&d, 1, &l1(&d)).unwrap();
        assert_eq!(t.slots[0].numeric[0], 150.0);
    }

    #[test]
    fn identical_points_pick_first() {
        let d = Dataset::from_scalars(&[3.0; 4]).unwrap();
        let (t, e) = exhaustive_medoid(&d, 1, &l1(&d)).unwrap();
        assert_eq!((t.slots[0].numeric[0], e), (3.0, 0.0));
    }

    #[test]
    fn rounding_ties_go_to_lower_index() {
        // 0.1 and 0.2 tie in exact arithmetic
        let d = Dataset::from_scalars(&[0.0, 0.1, 0.2, 100.0]).unwrap();
        let (t, _) = exhaustive_medoid(&d, 1, &l1(&d)).unwrap();
        assert_eq!(t.slots[0].numeric[0], 0.1);
    }

    #[test]
    fn pairs_enumerated() {
        let d = Dataset::from_scalars(&[0.0, 1.0, 10.0, 11.0, 12.0]).unwrap();
        let (t, e) = exhaustive_medoid(&d, 2, &l1(&d)).unwrap();
        let v: Vec<f64> = t.slots.iter().map(|s| s.numeric[0]).collect();
        assert_eq!(v, vec![0.0, 11.0]);
        assert!((e - 3.0 / 5.0).abs() < 1e-15);
        let mut n = 0;
        let mut idx = vec![0, 1, 2];
        loop {
            n += 1;
            if !next_combination(&mut idx, 6) {
                break;
            }
        }
        assert_eq!(n, 20);
    }

    #[test]
    fn cap_enforced() {
        let d = Dataset::from_scalars(&(0..2000).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        assert!(exhaustive_medoid(&d, 3, &l1(&d)).is_err());
    }
}
