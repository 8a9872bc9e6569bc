//! Monte Carlo PAM k-medoids, the GPAM family, and the minimum-mean-estimation
//! error-bound calculus used to certify sample sizes.

pub mod bandits;
pub mod bounds;
pub mod clustering;
pub mod data;
pub mod distributed;
pub mod eccentricity;
pub mod error;
pub mod ingest;
pub mod metric;
pub mod rng;

pub use data::{ColumnKind, Dataset, KTuple, Point, Schema};
pub use eccentricity::{EccAccumulator, EccEstimate};
pub use error::{Error, Result};
pub use metric::{Metric, MetricKind, MetricSpec};
