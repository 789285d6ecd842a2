//! Filtering, faceting and plot-ready summaries over one metric table.
//!
//! Box statistics use the Tukey convention: quartiles by linear
//! interpolation between order statistics, whiskers at the furthest data
//! points within 1.5 IQR of the quartiles, everything beyond flagged as an
//! outlier.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::BinIndex;
use crate::domain::{AgeRange, MetricKind, UNKNOWN};
use crate::error::{Error, Result};
use crate::formats::metric_rows_to_bytes;
use crate::measure::Miles;
use crate::metric::{MetricSummaryRow, MetricTable};

/// Facet value used when no facet dimension is selected.
pub const ALL_FACET: &str = "(all)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    SpeedLimit,
    AgeRange,
    Gender,
    VehicleClass,
    FunctionalClass,
    RoadClass,
    SpeedCategory,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::SpeedLimit,
        Dimension::AgeRange,
        Dimension::Gender,
        Dimension::VehicleClass,
        Dimension::FunctionalClass,
        Dimension::RoadClass,
        Dimension::SpeedCategory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::SpeedLimit => "speed_limit",
            Dimension::AgeRange => "age_range",
            Dimension::Gender => "gender",
            Dimension::VehicleClass => "vehicle_class",
            Dimension::FunctionalClass => "functional_class",
            Dimension::RoadClass => "road_class",
            Dimension::SpeedCategory => "speed_category",
        }
    }

    /// The row's value for this dimension; missing values read as "Unknown".
    pub fn value_of(self, row: &MetricSummaryRow) -> String {
        let k = &row.key;
        let text = |v: &Option<String>| v.clone().unwrap_or_else(|| UNKNOWN.to_string());
        match self {
            Dimension::SpeedLimit => k.speed_limit_mph.map_or_else(|| UNKNOWN.to_string(), |l| l.to_string()),
            Dimension::AgeRange => k.age_range.map_or_else(|| UNKNOWN.to_string(), |a| a.to_string()),
            Dimension::Gender => k.gender.to_string(),
            Dimension::VehicleClass => k.vehicle_class.map_or_else(|| UNKNOWN.to_string(), |c| c.to_string()),
            Dimension::FunctionalClass => text(&k.functional_class),
            Dimension::RoadClass => text(&k.road_class),
            Dimension::SpeedCategory => text(&k.speed_category),
        }
    }

    /// Display order of values: numeric for speed limits, band order for
    /// ages, lexicographic otherwise; "Unknown" always last.
    pub fn compare_values(self, a: &str, b: &str) -> Ordering {
        let unknown = |v: &str| v == UNKNOWN;
        match (unknown(a), unknown(b)) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Greater,
            (false, true) => return Ordering::Less,
            _ => {}
        }
        match self {
            Dimension::SpeedLimit | Dimension::FunctionalClass | Dimension::SpeedCategory => {
                match (a.parse::<i64>(), b.parse::<i64>()) {
                    (Ok(x), Ok(y)) => x.cmp(&y),
                    _ => a.cmp(b),
                }
            }
            Dimension::AgeRange => match (a.parse::<AgeRange>(), b.parse::<AgeRange>()) {
                (Ok(x), Ok(y)) => x.cmp(&y),
                _ => a.cmp(b),
            },
            _ => a.cmp(b),
        }
    }

    fn sort_values(self, values: &mut [String]) {
        values.sort_by(|a, b| self.compare_values(a, b));
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| Error::UnknownDimension(s.to_string()))
    }
}

/// Distinct values of `dim` present in the table, in display order.
pub fn observed_values(table: &MetricTable, dim: Dimension) -> Vec<String> {
    let set: BTreeSet<String> = table.rows().iter().map(|r| dim.value_of(r)).collect();
    let mut v: Vec<String> = set.into_iter().collect();
    dim.sort_values(&mut v);
    v
}

/// Conjunctive per-dimension constraints; a dimension without an entry
/// admits every value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterSet {
    allowed: BTreeMap<Dimension, BTreeSet<String>>,
}

impl FilterSet {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn with<I, S>(mut self, dim: Dimension, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.allowed.insert(dim, values.into_iter().map(Into::into).collect());
        self
    }

    pub fn allowed(&self, dim: Dimension) -> Option<&BTreeSet<String>> {
        self.allowed.get(&dim)
    }

    pub fn constraints(&self) -> impl Iterator<Item = (Dimension, &BTreeSet<String>)> {
        self.allowed.iter().map(|(d, v)| (*d, v))
    }

    /// Explicit sets must be non-empty and drawn from the table's values.
    pub fn validate(&self, table: &MetricTable) -> Result<()> {
        for (dim, values) in &self.allowed {
            if values.is_empty() {
                return Err(Error::Filter(format!("{dim}: empty value set")));
            }
            let domain: BTreeSet<String> = observed_values(table, *dim).into_iter().collect();
            if let Some(bad) = values.iter().find(|v| !domain.contains(*v)) {
                return Err(Error::Filter(format!("{dim}: value {bad:?} not present in the data")));
            }
        }
        Ok(())
    }

    pub fn matches(&self, row: &MetricSummaryRow) -> bool {
        self.allowed
            .iter()
            .all(|(dim, values)| values.contains(&dim.value_of(row)))
    }
}

/// The rows of one table that pass a filter set, in table order.
#[derive(Debug, Clone)]
pub struct FilteredView<'a> {
    metric: MetricKind,
    rows: Vec<&'a MetricSummaryRow>,
}

impl<'a> FilteredView<'a> {
    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn rows(&self) -> &[&'a MetricSummaryRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total(&self) -> Miles {
        self.rows.iter().map(|r| r.measure.miles).sum()
    }

    pub fn total_miles(&self) -> f64 {
        self.total().to_f64()
    }

    pub fn drivers(&self) -> BTreeSet<&'a str> {
        self.rows.iter().map(|r| r.key.driver_id.as_str()).collect()
    }

    pub fn n_drivers(&self) -> usize {
        self.drivers().len()
    }

    /// Smallest and largest bin index present.
    pub fn bin_span(&self) -> Option<(i64, i64)> {
        let mut it = self.rows.iter().map(|r| r.key.bin.index);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), k| (lo.min(k), hi.max(k))))
    }

    fn facet_of(&self, facet: Option<Dimension>, row: &MetricSummaryRow) -> String {
        facet.map_or_else(|| ALL_FACET.to_string(), |d| d.value_of(row))
    }

    /// Partitions rows by facet value, ordered for display.
    fn partition(&self, facet: Option<Dimension>) -> Vec<(String, Vec<&'a MetricSummaryRow>)> {
        let mut groups: BTreeMap<String, Vec<&'a MetricSummaryRow>> = BTreeMap::new();
        for row in &self.rows {
            groups.entry(self.facet_of(facet, row)).or_default().push(row);
        }
        let mut out: Vec<_> = groups.into_iter().collect();
        if let Some(d) = facet {
            out.sort_by(|a, b| d.compare_values(&a.0, &b.0));
        }
        out
    }
}

pub fn apply_filters<'a>(table: &'a MetricTable, filters: &FilterSet) -> FilteredView<'a> {
    FilteredView {
        metric: table.metric(),
        rows: table.rows().iter().filter(|r| filters.matches(r)).collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Miles,
    Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPoint {
    pub bin: String,
    pub bin_index: i64,
    pub miles: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSeries {
    pub facet_value: String,
    pub mode: Mode,
    pub total_miles: f64,
    pub points: Vec<StepPoint>,
}

fn percent(part: Miles, total: Miles) -> f64 {
    if total.is_zero() {
        0.0
    } else {
        100.0 * part.to_f64() / total.to_f64()
    }
}

/// One step series per facet value (a single "(all)" series without a
/// facet). Every series spans the view's full bin range so facets share an
/// x-axis; bins without rows appear with zero miles. Points carry both
/// miles and percent; `mode` records the preferred y-axis.
pub fn step_series(view: &FilteredView<'_>, mode: Mode, facet: Option<Dimension>) -> Vec<StepSeries> {
    let span = view.bin_span();
    let mut out = Vec::new();
    for (facet_value, rows) in view.partition(facet) {
        let mut per_bin: BTreeMap<i64, Miles> = BTreeMap::new();
        for r in &rows {
            *per_bin.entry(r.key.bin.index).or_default() += r.measure.miles;
        }
        let total: Miles = per_bin.values().copied().sum();
        let points = span
            .map(|(lo, hi)| {
                (lo..=hi)
                    .map(|k| {
                        let m = per_bin.get(&k).copied().unwrap_or_default();
                        StepPoint {
                            bin: BinIndex::new(view.metric, k).label(),
                            bin_index: k,
                            miles: m.to_f64(),
                            percent: percent(m, total),
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        out.push(StepSeries {
            facet_value,
            mode,
            total_miles: total.to_f64(),
            points,
        });
    }
    if out.is_empty() && facet.is_none() {
        out.push(StepSeries {
            facet_value: ALL_FACET.to_string(),
            mode,
            total_miles: 0.0,
            points: Vec::new(),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outlier {
    pub driver_id: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub bin: String,
    pub bin_index: i64,
    pub n_drivers: usize,
    pub min_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max_whisker: f64,
    pub outliers: Vec<Outlier>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxGroup {
    pub facet_value: String,
    pub boxes: Vec<BoxStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxOptions {
    /// Count drivers with no miles in a bin as 0% for that bin. When false
    /// they are left out of that bin's distribution.
    pub include_zero_bins: bool,
}

impl Default for BoxOptions {
    fn default() -> Self {
        BoxOptions {
            include_zero_bins: true,
        }
    }
}

/// Five-number summary of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Tukey {
    pub min_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max_whisker: f64,
    /// Indices (into the input) of points beyond the fences.
    pub outliers: Vec<usize>,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `p * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `None` for an empty sample.
pub fn tukey(values: &[f64]) -> Option<Tukey> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let inside = || sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    // With no data point between a fence and its quartile the whisker
    // collapses onto the quartile.
    let min_whisker = inside().next().unwrap_or(q1).min(q1);
    let max_whisker = inside().next_back().unwrap_or(q3).max(q3);
    let outliers = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < lo_fence || **v > hi_fence)
        .map(|(i, _)| i)
        .collect();
    Some(Tukey {
        min_whisker,
        q1,
        median,
        q3,
        max_whisker,
        outliers,
    })
}

/// Per-driver percent-of-miles distributions per bin, summarized per facet.
/// Each driver's percents are relative to that driver's own miles inside the
/// facet; drivers with zero miles there are skipped.
pub fn box_series(view: &FilteredView<'_>, facet: Option<Dimension>, options: BoxOptions) -> Vec<BoxGroup> {
    let Some((lo, hi)) = view.bin_span() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (facet_value, rows) in view.partition(facet) {
        let mut per_driver: BTreeMap<&str, BTreeMap<i64, Miles>> = BTreeMap::new();
        for r in &rows {
            *per_driver
                .entry(r.key.driver_id.as_str())
                .or_default()
                .entry(r.key.bin.index)
                .or_default() += r.measure.miles;
        }
        let drivers: Vec<(&str, Miles, &BTreeMap<i64, Miles>)> = per_driver
            .iter()
            .map(|(id, bins)| (*id, bins.values().copied().sum::<Miles>(), bins))
            .filter(|(_, total, _)| !total.is_zero())
            .collect();
        let mut boxes = Vec::new();
        for k in lo..=hi {
            let mut ids = Vec::new();
            let mut values = Vec::new();
            for (id, total, bins) in &drivers {
                match bins.get(&k) {
                    Some(m) => {
                        ids.push(*id);
                        values.push(percent(*m, *total));
                    }
                    None if options.include_zero_bins => {
                        ids.push(*id);
                        values.push(0.0);
                    }
                    None => {}
                }
            }
            let Some(t) = tukey(&values) else {
                continue;
            };
            let mut outliers: Vec<Outlier> = t
                .outliers
                .iter()
                .map(|&i| Outlier {
                    driver_id: ids[i].to_string(),
                    percent: values[i],
                })
                .collect();
            outliers.sort_by(|a, b| {
                a.percent
                    .total_cmp(&b.percent)
                    .then_with(|| a.driver_id.cmp(&b.driver_id))
            });
            boxes.push(BoxStats {
                bin: BinIndex::new(view.metric, k).label(),
                bin_index: k,
                n_drivers: values.len(),
                min_whisker: t.min_whisker,
                q1: t.q1,
                median: t.median,
                q3: t.q3,
                max_whisker: t.max_whisker,
                outliers,
            });
        }
        out.push(BoxGroup { facet_value, boxes });
    }
    out
}

/// The view's rows in the metric-table schema plus a trailing facet column.
pub fn export_view(view: &FilteredView<'_>, facet: Option<Dimension>) -> Vec<u8> {
    let facet_of = |r: &MetricSummaryRow| facet.map_or_else(|| ALL_FACET.to_string(), |d| d.value_of(r));
    metric_rows_to_bytes(view.metric, view.rows.iter().copied(), Some(&facet_of))
}
