//! In-memory multi-dimension time-series store.
//!
//! Stands in for a full monitoring stack: producers ingest timestamped
//! samples per (metric, dimensions) series, consumers run windowed queries
//! and cross-series sum aggregation. Timestamps are integer seconds relative
//! to the scenario epoch, so runs replay deterministically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::sync::RwLock;

use thiserror::Error;

/// One timestamped measurement. `timestamp` is in seconds since the scenario
/// epoch; the value unit depends on the metric (CPU metrics are percent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub timestamp: i64,
    pub value: f64,
}

impl MetricPoint {
    pub fn new(timestamp: i64, value: f64) -> Self {
        Self { timestamp, value }
    }
}

/// Identifies one series: a metric name plus an ordered set of dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeriesKey {
    pub metric_name: String,
    pub dimensions: BTreeMap<String, String>,
}

impl SeriesKey {
    /// Key with no dimensions.
    pub fn bare(metric_name: impl Into<String>) -> Self {
        Self { metric_name: metric_name.into(), dimensions: BTreeMap::new() }
    }

    /// Key with a single dimension, the common case for per-instance metrics.
    pub fn with_dim(
        metric_name: impl Into<String>,
        dim_key: impl Into<String>,
        dim_value: impl Into<String>,
    ) -> Self {
        let mut dimensions = BTreeMap::new();
        dimensions.insert(dim_key.into(), dim_value.into());
        Self { metric_name: metric_name.into(), dimensions }
    }

    /// Stable human-readable form, also used for dump file names.
    pub fn label(&self) -> String {
        let mut s = self.metric_name.clone();
        for value in self.dimensions.values() {
            let _ = write!(s, "__{value}");
        }
        s
    }
}

/// An ordered run of points for one series key.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub key: SeriesKey,
    pub points: Vec<MetricPoint>,
}

impl TimeSeries {
    pub fn empty(key: SeriesKey) -> Self {
        Self { key, points: Vec::new() }
    }

    pub fn last(&self) -> Option<MetricPoint> {
        self.points.last().copied()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    /// A producer sent a sample at or before the last stored timestamp.
    #[error("out-of-order timestamp {timestamp} for series {series} (last stored {last})")]
    OutOfOrderTimestamp { series: String, timestamp: i64, last: i64 },
    #[error("invalid value {value} for series {series}")]
    InvalidValue { series: String, value: f64 },
    #[error("unknown series {0}")]
    UnknownSeries(String),
    #[error("invalid query window [{start}, {end}]")]
    InvalidWindow { start: i64, end: i64 },
    #[error("alignment step must be positive, got {0}")]
    InvalidStep(i64),
    #[error("aggregate keys must name one metric, got {0} and {1}")]
    MixedMetrics(String, String),
}

/// Thread-safe in-memory store. A read never observes a partially applied
/// ingest; writers to distinct series do not block readers of committed data
/// longer than the map lock.
#[derive(Debug, Default)]
pub struct MetricStore {
    series: RwLock<BTreeMap<SeriesKey, Vec<MetricPoint>>>,
}

impl MetricStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one point to a series, creating the series on first ingest.
    ///
    /// Timestamps must be strictly increasing per series; a violation signals
    /// a producer bug and is rejected. NaN and infinite values are rejected.
    pub fn ingest(&self, key: &SeriesKey, point: MetricPoint) -> Result<(), StoreError> {
        if !point.value.is_finite() {
            return Err(StoreError::InvalidValue { series: key.label(), value: point.value });
        }
        let mut map = self.series.write().expect("store lock poisoned");
        let points = map.entry(key.clone()).or_default();
        if let Some(last) = points.last() {
            if point.timestamp <= last.timestamp {
                return Err(StoreError::OutOfOrderTimestamp {
                    series: key.label(),
                    timestamp: point.timestamp,
                    last: last.timestamp,
                });
            }
        }
        points.push(point);
        Ok(())
    }

    pub fn has_series(&self, key: &SeriesKey) -> bool {
        self.series.read().expect("store lock poisoned").contains_key(key)
    }

    /// All series keys, in deterministic order.
    pub fn keys(&self) -> Vec<SeriesKey> {
        self.series.read().expect("store lock poisoned").keys().cloned().collect()
    }

    /// Returns the points with `start <= timestamp <= end`, in order.
    /// An empty window over a known series is an empty result, not an error.
    pub fn query(&self, key: &SeriesKey, start: i64, end: i64) -> Result<TimeSeries, StoreError> {
        if start > end {
            return Err(StoreError::InvalidWindow { start, end });
        }
        let map = self.series.read().expect("store lock poisoned");
        let points = map.get(key).ok_or_else(|| StoreError::UnknownSeries(key.label()))?;
        let lo = points.partition_point(|p| p.timestamp < start);
        let hi = points.partition_point(|p| p.timestamp <= end);
        Ok(TimeSeries { key: key.clone(), points: points[lo..hi].to_vec() })
    }

    /// Latest point of a series, if any.
    pub fn latest(&self, key: &SeriesKey) -> Result<Option<MetricPoint>, StoreError> {
        let map = self.series.read().expect("store lock poisoned");
        let points = map.get(key).ok_or_else(|| StoreError::UnknownSeries(key.label()))?;
        Ok(points.last().copied())
    }

    /// Sums several series onto a shared time grid.
    ///
    /// Buckets are the multiples of `step` inside `[start, end]`. For each
    /// bucket a series contributes its latest sample at or before the bucket
    /// timestamp (last observation carried forward); series whose first
    /// sample is later than the bucket are omitted from that bucket. Buckets
    /// to which no series contributes are not emitted.
    pub fn aggregate_sum(
        &self,
        keys: &[SeriesKey],
        start: i64,
        end: i64,
        step: i64,
    ) -> Result<TimeSeries, StoreError> {
        if step <= 0 {
            return Err(StoreError::InvalidStep(step));
        }
        if start > end {
            return Err(StoreError::InvalidWindow { start, end });
        }
        let metric_name = match keys.first() {
            Some(k) => k.metric_name.clone(),
            None => String::new(),
        };
        for k in keys {
            if k.metric_name != metric_name {
                return Err(StoreError::MixedMetrics(metric_name, k.metric_name.clone()));
            }
        }

        let map = self.series.read().expect("store lock poisoned");
        let mut series = Vec::with_capacity(keys.len());
        for k in keys {
            let points = map.get(k).ok_or_else(|| StoreError::UnknownSeries(k.label()))?;
            series.push(points.as_slice());
        }

        let mut out = TimeSeries::empty(SeriesKey::bare(metric_name));
        let first_bucket = start.div_euclid(step) * step;
        let first_bucket = if first_bucket < start { first_bucket + step } else { first_bucket };
        let mut bucket = first_bucket;
        while bucket <= end {
            let mut sum = 0.0;
            let mut contributors = 0usize;
            for points in &series {
                let idx = points.partition_point(|p| p.timestamp <= bucket);
                if idx > 0 {
                    sum += points[idx - 1].value;
                    contributors += 1;
                }
            }
            if contributors > 0 {
                out.points.push(MetricPoint::new(bucket, sum));
            }
            bucket += step;
        }
        Ok(out)
    }

    /// Writes one CSV file per series into `dir`: header `timestamp,value`,
    /// one row per point. File names derive from the series label.
    pub fn dump_csv(&self, dir: &Path) -> io::Result<()> {
        let map = self.series.read().expect("store lock poisoned");
        for (key, points) in map.iter() {
            let mut body = String::from("timestamp,value\n");
            for p in points {
                let _ = writeln!(body, "{},{}", p.timestamp, p.value);
            }
            std::fs::write(dir.join(format!("{}.csv", key.label())), body)?;
        }
        Ok(())
    }
}
