//! Points, schemas, datasets and k-tuples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of a data column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// A point split into its numeric and categorical attributes, each in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub numeric: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<u32>,
}

impl Point {
    pub fn numeric(values: Vec<f64>) -> Self {
        Point { numeric: values, categorical: Vec::new() }
    }

    pub fn scalar(x: f64) -> Self {
        Point::numeric(vec![x])
    }

    pub fn mixed(numeric: Vec<f64>, categorical: Vec<u32>) -> Self {
        Point { numeric, categorical }
    }
}

/// Column layout plus the observed numeric ranges used for Gower normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    /// (min, max) per numeric column, in numeric-column order.
    pub ranges: Vec<(f64, f64)>,
    /// Level names per categorical column; code `c` maps to `levels[col][c]`.
    #[serde(default)]
    pub levels: Vec<Vec<String>>,
}

impl Schema {
    pub fn n_numeric(&self) -> usize {
        self.kinds.iter().filter(|k| **k == ColumnKind::Numeric).count()
    }

    pub fn n_categorical(&self) -> usize {
        self.kinds.len() - self.n_numeric()
    }

    pub fn conforms(&self, p: &Point) -> bool {
        p.numeric.len() == self.n_numeric()
            && p.categorical.len() == self.n_categorical()
            && p.numeric.iter().all(|v| v.is_finite())
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if self.conforms(p) {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "point has {} numeric / {} categorical values, schema expects {} / {}",
                p.numeric.len(),
                p.categorical.len(),
                self.n_numeric(),
                self.n_categorical()
            )))
        }
    }
}

/// A non-empty collection of points sharing one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, computing numeric ranges from the points.
    pub fn new(names: Vec<String>, kinds: Vec<ColumnKind>, points: Vec<Point>) -> Result<Self> {
        if names.len() != kinds.len() {
            return Err(Error::Schema("names and kinds differ in length".into()));
        }
        let n_cat = kinds.iter().filter(|k| **k == ColumnKind::Categorical).count();
        let mut schema = Schema { names, kinds, ranges: Vec::new(), levels: vec![Vec::new(); n_cat] };
        if points.is_empty() {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        for p in &points {
            schema.check(p)?;
        }
        schema.ranges = numeric_ranges(schema.n_numeric(), &points);
        for (c, lv) in schema.levels.iter_mut().enumerate() {
            let max = points.iter().map(|p| p.categorical[c]).max().unwrap_or(0);
            *lv = (0..=max).map(|v| v.to_string()).collect();
        }
        Ok(Dataset { schema, points, labels: None })
    }

    /// All-numeric dataset with generated column names.
    pub fn from_numeric(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let names = (0..dim).map(|i| format!("x{i}")).collect();
        Dataset::new(names, vec![ColumnKind::Numeric; dim], rows.into_iter().map(Point::numeric).collect())
    }

    /// One-dimensional dataset.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Dataset::from_numeric(xs.iter().map(|x| vec![*x]).collect())
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::InvalidArgument("label count differs from point count".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Subset of the points at `idx`, keeping this schema (ranges unchanged).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

pub(crate) fn numeric_ranges(n_numeric: usize, points: &[Point]) -> Vec<(f64, f64)> {
    (0..n_numeric)
        .map(|c| {
            points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.numeric[c]), hi.max(p.numeric[c]))
            })
        })
        .collect()
}

/// A candidate k-medoid: k points held by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTuple {
    pub slots: Vec<Point>,
}

impl KTuple {
    pub fn new(slots: Vec<Point>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidArgument("k-tuple needs at least one slot".into()));
        }
        Ok(KTuple { slots })
    }

    pub fn from_indices(data: &Dataset, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= data.len()) {
            return Err(Error::InvalidArgument(format!("index {bad} out of range")));
        }
        KTuple::new(idx.iter().map(|&i| data.points[i].clone()).collect())
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    /// Copy with slot `l` replaced by `p`.
    pub fn swapped(&self, l: usize, p: &Point) -> KTuple {
        let mut t = self.clone();
        t.slots[l] = p.clone();
        t
    }
}
