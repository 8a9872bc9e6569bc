//! Semi-metrics over points and the min-over-slots distance Δ.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, KTuple, Point, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    L1,
    L2,
    SquaredL2,
    Gower,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "manhattan" => Ok(MetricKind::L1),
            "l2" | "euclidean" => Ok(MetricKind::L2),
            "sql2" | "squaredl2" | "squared-l2" | "sqeuclidean" => Ok(MetricKind::SquaredL2),
            "gower" => Ok(MetricKind::Gower),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Serializable metric description. Gower weights are per column in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl MetricSpec {
    pub fn new(kind: MetricKind) -> Self {
        MetricSpec { kind, weights: None }
    }

    pub fn gower_weighted(weights: Vec<f64>) -> Self {
        MetricSpec { kind: MetricKind::Gower, weights: Some(weights) }
    }
}

/// A metric bound to a schema. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Metric {
    kind: MetricKind,
    num_w: Vec<f64>,
    cat_w: Vec<f64>,
    inv_range: Vec<f64>,
    w_sum: f64,
    n_num: usize,
    n_cat: usize,
}

impl Metric {
    pub fn new(spec: &MetricSpec, schema: &Schema) -> Result<Self> {
        let n_num = schema.n_numeric();
        let n_cat = schema.n_categorical();
        let inv_range = schema
            .ranges
            .iter()
            .map(|(lo, hi)| if hi > lo { 1.0 / (hi - lo) } else { 0.0 })
            .collect();
        match spec.kind {
            MetricKind::Gower => {
                let w = match &spec.weights {
                    Some(w) => {
                        if w.len() != schema.kinds.len() {
                            return Err(Error::Config(format!(
                                "{} Gower weights for {} columns",
                                w.len(),
                                schema.kinds.len()
                            )));
                        }
                        w.clone()
                    }
                    None => vec![1.0; schema.kinds.len()],
                };
                if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || w.iter().all(|x| *x == 0.0) {
                    return Err(Error::Config("Gower weights must be non-negative and not all zero".into()));
                }
                let mut num_w = Vec::with_capacity(n_num);
                let mut cat_w = Vec::with_capacity(n_cat);
                for (k, wi) in schema.kinds.iter().zip(&w) {
                    match k {
                        ColumnKind::Numeric => num_w.push(*wi),
                        ColumnKind::Categorical => cat_w.push(*wi),
                    }
                }
                let w_sum = w.iter().sum();
                Ok(Metric { kind: spec.kind, num_w, cat_w, inv_range, w_sum, n_num, n_cat })
            }
            kind => {
                if n_cat > 0 {
                    return Err(Error::Config(format!("{kind:?} needs an all-numeric schema; use Gower")));
                }
                if spec.weights.is_some() {
                    return Err(Error::Config("weights apply to Gower only".into()));
                }
                Ok(Metric { kind, num_w: vec![], cat_w: vec![], inv_range, w_sum: 1.0, n_num, n_cat })
            }
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Checked distance: validates arity and the Gower zero-range rule.
    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        for p in [a, b] {
            if p.numeric.len() != self.n_num || p.categorical.len() != self.n_cat {
                return Err(Error::Schema("point arity does not match metric schema".into()));
            }
        }
        if self.kind == MetricKind::Gower {
            for c in 0..self.n_num {
                if self.inv_range[c] == 0.0 && self.num_w[c] > 0.0 && a.numeric[c] != b.numeric[c] {
                    return Err(Error::Schema(format!(
                        "numeric column {c} has zero range but values differ"
                    )));
                }
            }
        }
        Ok(self.dist(a, b))
    }

    /// Unchecked distance for points already known to conform.
    #[inline]
    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        let (x, y) = (&a.numeric, &b.numeric);
        match self.kind {
            MetricKind::L1 => x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum(),
            MetricKind::SquaredL2 => x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum(),
            MetricKind::L2 => x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt(),
            MetricKind::Gower => {
                let mut s = 0.0;
                for c in 0..self.n_num {
                    s += self.num_w[c] * (x[c] - y[c]).abs() * self.inv_range[c];
                }
                for c in 0..self.n_cat {
                    if a.categorical[c] != b.categorical[c] {
                        s += self.cat_w[c];
                    }
                }
                s / self.w_sum
            }
        }
    }

    /// Δ(x, x̄): minimum distance from `p` to any slot of `t`.
    #[inline]
    pub fn min_distance(&self, p: &Point, t: &KTuple) -> f64 {
        t.slots.iter().map(|s| self.dist(p, s)).fold(f64::INFINITY, f64::min)
    }

    /// Checked Δ.
    pub fn try_min_distance(&self, p: &Point, t: &KTuple) -> Result<f64> {
        let mut best = f64::INFINITY;
        for s in &t.slots {
            best = best.min(self.distance(p, s)?);
        }
        Ok(best)
    }

    /// Index of the nearest slot, lowest index on ties.
    pub fn nearest_slot(&self, p: &Point, t: &KTuple) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (l, s) in t.slots.iter().enumerate() {
            let d = self.dist(p, s);
            if d < best.0 {
                best = (d, l);
            }
        }
        best.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use proptest::prelude::*;

    fn scalar_metric(kind: MetricKind) -> Metric {
        let d = Dataset::from_scalars(&[0.0, 1.0]).unwrap();
        Metric::new(&MetricSpec::new(kind), &d.schema).unwrap()
    }

    fn tuple(xs: &[f64]) -> KTuple {
        KTuple::new(xs.iter().map(|x| Point::scalar(*x)).collect()).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let l1 = scalar_metric(MetricKind::L1);
        assert_eq!(l1.distance(&Point::scalar(90.0), &Point::scalar(170.0)).unwrap(), 80.0);
        let sq = scalar_metric(MetricKind::SquaredL2);
        assert_eq!(sq.distance(&Point::scalar(0.0), &Point::scalar(3.0)).unwrap(), 9.0);
        assert_eq!(l1.min_distance(&Point::scalar(5.0), &tuple(&[3.0, 10.0])), 2.0);
        // brute force over {49, 9, 8649}
        let brute = [0.0f64, 10.0, 100.0].iter().map(|s| (7.0 - s) * (7.0 - s)).fold(f64::MAX, f64::min);
        assert_eq!(sq.min_distance(&Point::scalar(7.0), &tuple(&[0.0, 10.0, 100.0])), brute);
        assert_eq!(brute, 9.0);
    }

    fn mixed() -> Dataset {
        let pts = vec![
            Point::mixed(vec![0.0, 10.0], vec![0]),
            Point::mixed(vec![4.0, 20.0], vec![1]),
            Point::mixed(vec![2.0, 15.0], vec![2]),
        ];
        Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![ColumnKind::Numeric, ColumnKind::Numeric, ColumnKind::Categorical],
            pts,
        )
        .unwrap()
    }

    #[test]
    fn gower_by_hand() {
        let d = mixed();
        let g = Metric::new(&MetricSpec::new(MetricKind::Gower), &d.schema).unwrap();
        assert_eq!(g.distance(&d.points[0], &d.points[0]).unwrap(), 0.0);
        // (4/4 + 10/10 + 1) / 3
        assert!((g.distance(&d.points[0], &d.points[1]).unwrap() - 1.0).abs() < 1e-15);
        // (2/4 + 5/10 + 1) / 3
        assert!((g.distance(&d.points[0], &d.points[2]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let w = Metric::new(&MetricSpec::gower_weighted(vec![1.0, 0.0, 0.0]), &d.schema).unwrap();
        assert!((w.distance(&d.points[0], &d.points[2]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gower_zero_range_differing_is_error() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![ColumnKind::Numeric, ColumnKind::Numeric],
            vec![Point::numeric(vec![1.0, 0.0]), Point::numeric(vec![1.0, 2.0])],
        )
        .unwrap();
        let g = Metric::new(&MetricSpec::new(MetricKind::Gower), &d.schema).unwrap();
        assert!(g.distance(&d.points[0], &d.points[1]).is_ok());
        assert!(g.distance(&Point::numeric(vec![1.0, 0.0]), &Point::numeric(vec![3.0, 0.0])).is_err());
    }

    #[test]
    fn schema_mismatch_is_error() {
        let m = scalar_metric(MetricKind::L1);
        assert!(m.distance(&Point::scalar(1.0), &Point::numeric(vec![1.0, 2.0])).is_err());
        let d = mixed();
        assert!(Metric::new(&MetricSpec::new(MetricKind::L2), &d.schema).is_err());
        assert!(Metric::new(&MetricSpec::gower_weighted(vec![0.0, 0.0, 0.0]), &d.schema).is_err());
        assert!(Metric::new(&MetricSpec::gower_weighted(vec![1.0, -1.0, 0.0]), &d.schema).is_err());
    }

    fn point3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 3)
    }

    proptest! {
        #[test]
        fn symmetric_and_zero_diagonal(a in point3(), b in point3()) {
            let d = Dataset::from_numeric(vec![vec![-50.0; 3], vec![50.0; 3]]).unwrap();
            for kind in [MetricKind::L1, MetricKind::L2, MetricKind::SquaredL2, MetricKind::Gower] {
                let m = Metric::new(&MetricSpec::new(kind), &d.schema).unwrap();
                let (pa, pb) = (Point::numeric(a.clone()), Point::numeric(b.clone()));
                prop_assert_eq!(m.distance(&pa, &pa).unwrap(), 0.0);
                prop_assert_eq!(m.distance(&pa, &pb).unwrap(), m.distance(&pb, &pa).unwrap());
                prop_assert!(m.distance(&pa, &pb).unwrap() >= 0.0);
            }
        }

        #[test]
        fn min_distance_below_every_slot(p in point3(), slots in prop::collection::vec(point3(), 1..6)) {
            let d = Dataset::from_numeric(vec![vec![-50.0; 3], vec![50.0; 3]]).unwrap();
            let m = Metric::new(&MetricSpec::new(MetricKind::L2), &d.schema).unwrap();
            let t = KTuple::new(slots.into_iter().map(Point::numeric).collect()).unwrap();
            let pp = Point::numeric(p);
            let md = m.min_distance(&pp, &t);
            prop_assert!(t.slots.iter().all(|s| md <= m.dist(&pp, s)));
            prop_assert!(t.slots.iter().any(|s| md == m.dist(&pp, s)));
        }

        #[test]
        fn gower_in_unit_interval(a in prop::collection::vec(0.0f64..1.0, 2), b in prop::collection::vec(0.0f64..1.0, 2),
                                  ca in 0u32..3, cb in 0u32..3, w in prop::collection::vec(0.01f64..5.0, 3)) {
            let d = Dataset::new(
                vec!["a".into(), "b".into(), "c".into()],
                vec![ColumnKind::Numeric, ColumnKind::Numeric, ColumnKind::Categorical],
                vec![Point::mixed(vec![0.0, 0.0], vec![0]), Point::mixed(vec![1.0, 1.0], vec![2])],
            ).unwrap();
            let m = Metric::new(&MetricSpec::gower_weighted(w), &d.schema).unwrap();
            let v = m.distance(&Point::mixed(a, vec![ca]), &Point::mixed(b, vec![cb])).unwrap();
            prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
        }
    }
}
