//! CSV loading and writing, synthetic datasets, and clustering quality.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign, full_accumulate};
use crate::data::{numeric_ranges, ColumnKind, Dataset, KTuple, Point, Schema};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng;

/// What a CSV column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Numeric,
    Categorical,
    Label,
    Skip,
}

impl FromStr for ColumnRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "n" | "num" => Ok(ColumnRole::Numeric),
            "categorical" | "c" | "cat" => Ok(ColumnRole::Categorical),
            "label" | "l" => Ok(ColumnRole::Label),
            "skip" | "s" | "ignore" => Ok(ColumnRole::Skip),
            other => Err(Error::Schema(format!("unknown column role {other:?}"))),
        }
    }
}

/// Parses a comma-separated role list such as `numeric,numeric,label`.
pub fn parse_schema_decl(s: &str) -> Result<Vec<ColumnRole>> {
    s.split(',').map(str::parse).collect()
}

fn csv_err(row: usize, e: impl ToString) -> Error {
    Error::Csv { row, msg: e.to_string() }
}

/// Interns strings to codes by first appearance.
#[derive(Default)]
struct Levels {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Levels {
    fn code(&mut self, s: &str) -> u32 {
        if let Some(&c) = self.index.get(s) {
            return c;
        }
        let c = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), c);
        c
    }
}

/// Trimmed header fields of a CSV file.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref()).map_err(|e| csv_err(1, e))?;
    Ok(rdr.headers().map_err(|e| csv_err(1, e))?.iter().map(|h| h.trim().to_string()).collect())
}

/// Declaration with every column numeric except `label_col`.
pub fn decl_with_label(header: &[String], label_col: &str) -> Result<Vec<ColumnRole>> {
    if !header.iter().any(|h| h == label_col) {
        return Err(Error::Schema(format!("no column named {label_col:?} in header {header:?}")));
    }
    Ok(header.iter().map(|h| if h == label_col { ColumnRole::Label } else { ColumnRole::Numeric }).collect())
}

/// Loads a CSV with a header row. Without a declaration every column is
/// numeric, except one headed `label`. Categorical levels and labels are
/// coded in order of first appearance. Row numbers in errors are file lines.
pub fn load_csv(path: impl AsRef<Path>, decl: Option<&[ColumnRole]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path.as_ref()).map_err(|e| csv_err(1, e))?;
    let header: Vec<String> = rdr.headers().map_err(|e| csv_err(1, e))?.iter().map(|h| h.trim().to_string()).collect();
    let roles: Vec<ColumnRole> = match decl {
        Some(d) => {
            if d.len() != header.len() {
                return Err(Error::Schema(format!("declaration has {} columns, header has {}", d.len(), header.len())));
            }
            d.to_vec()
        }
        None => header
            .iter()
            .map(|h| if h.eq_ignore_ascii_case("label") { ColumnRole::Label } else { ColumnRole::Numeric })
            .collect(),
    };
    if roles.iter().filter(|r| **r == ColumnRole::Label).count() > 1 {
        return Err(Error::Schema("at most one label column".into()));
    }
    let n_cat = roles.iter().filter(|r| **r == ColumnRole::Categorical).count();
    let mut levels: Vec<Levels> = (0..n_cat).map(|_| Levels::default()).collect();
    let mut label_levels = Levels::default();
    let has_label = roles.contains(&ColumnRole::Label);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(e.position().map_or(0, |p| p.line() as usize), e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != roles.len() {
            return Err(csv_err(line, format!("expected {} fields, found {}", roles.len(), rec.len())));
        }
        let mut p = Point::default();
        let mut c = 0;
        for (j, (field, role)) in rec.iter().zip(&roles).enumerate() {
            let field = field.trim();
            match role {
                ColumnRole::Numeric => {
                    let v: f64 = field.parse().map_err(|_| csv_err(line, format!("column {:?}: cannot parse {field:?}", header[j])))?;
                    if !v.is_finite() {
                        return Err(csv_err(line, format!("column {:?}: non-finite value", header[j])));
                    }
                    p.numeric.push(v);
                }
                ColumnRole::Categorical => {
                    p.categorical.push(levels[c].code(field));
                    c += 1;
                }
                ColumnRole::Label => labels.push(label_levels.code(field) as usize),
                ColumnRole::Skip => {}
            }
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("csv has no data rows".into()));
    }
    let (names, kinds): (Vec<String>, Vec<ColumnKind>) = header
        .iter()
        .zip(&roles)
        .filter_map(|(h, r)| match r {
            ColumnRole::Numeric => Some((h.clone(), ColumnKind::Numeric)),
            ColumnRole::Categorical => Some((h.clone(), ColumnKind::Categorical)),
            _ => None,
        })
        .unzip();
    let schema = Schema {
        ranges: numeric_ranges(kinds.iter().filter(|k| **k == ColumnKind::Numeric).count(), &points),
        names,
        kinds,
        levels: levels.into_iter().map(|l| l.names).collect(),
    };
    Ok(Dataset { schema, points, labels: has_label.then_some(labels) })
}

/// Writes columns in schema order, categorical values as level names, and a
/// trailing `label` column when labels are present.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| csv_err(0, e))?;
    let mut header = data.schema.names.clone();
    if data.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| csv_err(1, e))?;
    for (i, p) in data.points.iter().enumerate() {
        let (mut a, mut b) = (0, 0);
        let mut row = Vec::with_capacity(header.len());
        for k in &data.schema.kinds {
            match k {
                ColumnKind::Numeric => {
                    row.push(p.numeric[a].to_string());
                    a += 1;
                }
                ColumnKind::Categorical => {
                    let code = p.categorical[b] as usize;
                    row.push(data.schema.levels.get(b).and_then(|l| l.get(code)).cloned().unwrap_or_else(|| code.to_string()));
                    b += 1;
                }
            }
        }
        if let Some(l) = &data.labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row).map_err(|e| csv_err(i + 2, e))?;
    }
    w.flush()?;
    Ok(())
}

/// `clusters` isotropic Gaussian blobs in `dim` dimensions with centers
/// uniform on [0, 100]^dim, labeled by blob, points stored blob by blob.
pub fn gen_gaussian_mixture(clusters: usize, dim: usize, points_per_cluster: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if clusters == 0 || dim == 0 || points_per_cluster == 0 || !(spread >= 0.0) {
        return Err(Error::InvalidArgument("clusters, dim, points_per_cluster must be ≥ 1 and spread ≥ 0".into()));
    }
    let mut r = rng::stream(seed, 0);
    let centers: Vec<Vec<f64>> = (0..clusters).map(|_| (0..dim).map(|_| r.random_range(0.0..100.0)).collect()).collect();
    let mut rows = Vec::with_capacity(clusters * points_per_cluster);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (c, ctr) in centers.iter().enumerate() {
        for _ in 0..points_per_cluster {
            rows.push(ctr.iter().map(|x| x + spread * r.sample::<f64, _>(StandardNormal)).collect());
            labels.push(c);
        }
    }
    Dataset::from_numeric(rows)?.with_labels(labels)
}

pub const MIXED_POINTS_PER_CLUSTER: usize = 250;

/// Two numeric attributes (Gaussian blobs, spread 5) and one binary
/// categorical attribute with a per-cluster Bernoulli rate.
pub fn gen_mixed_clusters(clusters: usize, seed: u64) -> Result<Dataset> {
    gen_mixed_clusters_sized(clusters, MIXED_POINTS_PER_CLUSTER, seed)
}

pub fn gen_mixed_clusters_sized(clusters: usize, points_per_cluster: usize, seed: u64) -> Result<Dataset> {
    if clusters == 0 || points_per_cluster == 0 {
        return Err(Error::InvalidArgument("clusters and points_per_cluster must be ≥ 1".into()));
    }
    let mut r = rng::stream(seed, 0);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for c in 0..clusters {
        let ctr = [r.random_range(0.0..100.0), r.random_range(0.0..100.0)];
        let rate: f64 = r.random_range(0.05..0.95);
        for _ in 0..points_per_cluster {
            let num = ctr.iter().map(|x| x + 5.0 * r.sample::<f64, _>(StandardNormal)).collect();
            points.push(Point::mixed(num, vec![u32::from(r.random_bool(rate))]));
            labels.push(c);
        }
    }
    let mut d = Dataset::new(
        vec!["x0".into(), "x1".into(), "flag".into()],
        vec![ColumnKind::Numeric, ColumnKind::Numeric, ColumnKind::Categorical],
        points,
    )?
    .with_labels(labels)?;
    d.schema.levels = vec![vec!["0".into(), "1".into()]];
    Ok(d)
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index by pair counting. Two trivial partitions (both a
/// single cluster, or both all singletons) score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("ari needs at least 2 points".into()));
    }
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sa: f64 = ra.values().map(|&v| choose2(v)).sum();
    let sb: f64 = rb.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(a.len() as f64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean Δ from each point to the tuple.
pub fn clustering_cost(data: &Dataset, medoid: &KTuple, metric: &Metric) -> Result<f64> {
    Ok(full_accumulate(&data.points, medoid, metric).estimate(0.05)?.mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Against the dataset's labels; absent when it has none.
    pub ari: Option<f64>,
    /// Mean (not summed) distance to the nearest medoid.
    pub clustering_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
    pub distance_evals: u64,
}

pub fn quality_report(
    data: &Dataset,
    medoid: &KTuple,
    metric: &Metric,
    distance_evals: u64,
    runtime_ms: Option<f64>,
) -> Result<QualityReport> {
    let ari = match &data.labels {
        Some(l) if data.len() >= 2 => Some(ari(l, &assign(data, medoid, metric))?),
        _ => None,
    };
    Ok(QualityReport { ari, clustering_cost: clustering_cost(data, medoid, metric)?, runtime_ms, distance_evals })
}
