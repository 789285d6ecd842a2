//! Half-open bin assignment `[edge(k), edge(k+1))` and bin labels.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::domain::{canonical_bin_spec, BinSpec, MetricKind};
use crate::error::{Error, Result};

/// Largest index magnitude whose edges stay exactly representable.
const MAX_INDEX: f64 = 4_503_599_627_370_496.0; // 2^52

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinIndex {
    pub metric: MetricKind,
    pub index: i64,
}

impl BinIndex {
    pub fn new(metric: MetricKind, index: i64) -> Self {
        BinIndex { metric, index }
    }

    pub fn lower_edge(&self) -> f64 {
        canonical_bin_spec(self.metric).edge(self.index)
    }

    pub fn upper_edge(&self) -> f64 {
        canonical_bin_spec(self.metric).edge(self.index + 1)
    }

    /// Lower edge printed at the metric's precision; this is the stored form.
    pub fn edge_text(&self) -> String {
        format!("{:.*}", self.metric.precision(), self.lower_edge())
    }

    pub fn label(&self) -> String {
        bin_label(*self)
    }
}

impl fmt::Display for BinIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for BinIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

/// Assigns `value` to its bin. Returns `Ok(None)` when the value lies
/// outside the spec's bounds (or beyond the exactly representable index
/// range of an unbounded spec), and an error for NaN or infinities.
pub fn bin_value(value: f64, spec: &BinSpec) -> Result<Option<BinIndex>> {
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    let approx = ((value - spec.anchor()) / spec.width()).floor();
    if approx.abs() > MAX_INDEX {
        return Ok(None);
    }
    let mut k = approx as i64;
    // The quotient can land one bin off when the value sits on an edge that
    // has no exact binary representation; compare against the edges themselves.
    while value < spec.edge(k) {
        k -= 1;
    }
    while value >= spec.edge(k + 1) {
        k += 1;
    }
    Ok(spec.contains_index(k).then_some(BinIndex::new(spec.metric(), k)))
}

/// Speed minus posted limit; `None` when no limit is known.
pub fn speeding_value(speed_mph: f64, speed_limit_mph: Option<u8>) -> Option<f64> {
    speed_limit_mph.map(|limit| speed_mph - f64::from(limit))
}

pub fn bin_label(index: BinIndex) -> String {
    let p = index.metric.precision();
    format!("[{:.*}-{:.*})", p, index.lower_edge(), p, index.upper_edge())
}

/// Inverse of [`BinIndex::edge_text`]: the text must name a lower edge of a
/// valid bin exactly.
pub fn parse_edge(metric: MetricKind, text: &str) -> Result<BinIndex> {
    let invalid = || Error::InvalidValue {
        field: "bin edge",
        value: text.to_string(),
    };
    let v: f64 = text.trim().parse().map_err(|_| invalid())?;
    let spec = canonical_bin_spec(metric);
    match bin_value(v, &spec) {
        Ok(Some(bin)) if spec.edge(bin.index) == v => Ok(bin),
        _ => Err(invalid()),
    }
}
