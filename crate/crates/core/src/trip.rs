//! Stage 1: reduce one trip's 100 ms records to per-combination totals.

use std::collections::BTreeMap;

use crate::binning::{bin_value, speeding_value, BinIndex};
use crate::domain::{canonical_bin_spec, MetricKind, RawTimestep, RoadAttributes, STEP_MS};
use crate::error::{Error, Result};
use crate::measure::{Measure, Miles};

const HOURS_PER_STEP: f64 = 0.1 / 3600.0;

/// The five metric bins of one record or row, in trip-summary column order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinTuple {
    pub speed: Option<BinIndex>,
    pub speeding: Option<BinIndex>,
    pub lane_position: Option<BinIndex>,
    pub headway: Option<BinIndex>,
    pub following_distance: Option<BinIndex>,
}

impl BinTuple {
    pub fn get(&self, metric: MetricKind) -> Option<BinIndex> {
        match metric {
            MetricKind::Speed => self.speed,
            MetricKind::Speeding => self.speeding,
            MetricKind::LanePosition => self.lane_position,
            MetricKind::Headway => self.headway,
            MetricKind::FollowingDistance => self.following_distance,
        }
    }

    pub fn set(&mut self, metric: MetricKind, bin: Option<BinIndex>) {
        let slot = match metric {
            MetricKind::Speed => &mut self.speed,
            MetricKind::Speeding => &mut self.speeding,
            MetricKind::LanePosition => &mut self.lane_position,
            MetricKind::Headway => &mut self.headway,
            MetricKind::FollowingDistance => &mut self.following_distance,
        };
        *slot = bin;
    }

    pub fn is_empty(&self) -> bool {
        MetricKind::ALL.iter().all(|m| self.get(*m).is_none())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedTimestep {
    pub timestamp_ms: i64,
    pub road: RoadAttributes,
    pub bins: BinTuple,
    /// `None` when speed is missing, negative or non-finite; such records
    /// accrue neither miles nor time.
    pub distance: Option<Miles>,
}

/// Grouping key of a trip-summary row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripKey {
    pub road: RoadAttributes,
    pub bins: BinTuple,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripSummaryRow {
    pub file_id: String,
    pub road: RoadAttributes,
    pub bins: BinTuple,
    pub measure: Measure,
}

impl TripSummaryRow {
    pub fn miles(&self) -> f64 {
        self.measure.miles.to_f64()
    }

    pub fn time_s(&self) -> f64 {
        self.measure.time_s()
    }
}

fn bin_of(value: Option<f64>, metric: MetricKind) -> Option<BinIndex> {
    // Non-finite inputs carry no information; treat them as absent.
    value.and_then(|v| bin_value(v, &canonical_bin_spec(metric)).ok().flatten())
}

/// Estimated distance covered in one 100 ms step at `speed_mph`.
pub fn step_distance(speed_mph: f64) -> Option<Miles> {
    if !speed_mph.is_finite() || speed_mph < 0.0 {
        return None;
    }
    Miles::from_f64(speed_mph * HOURS_PER_STEP)
}

pub fn derive_timestep(raw: &RawTimestep) -> DerivedTimestep {
    let speed = raw.speed_mph.filter(|s| s.is_finite() && *s >= 0.0);
    let mut bins = BinTuple::default();
    bins.set(MetricKind::Speed, bin_of(speed, MetricKind::Speed));
    bins.set(
        MetricKind::Speeding,
        bin_of(
            speed.and_then(|s| speeding_value(s, raw.road.speed_limit_mph)),
            MetricKind::Speeding,
        ),
    );
    bins.set(
        MetricKind::LanePosition,
        bin_of(raw.lane_offset_m, MetricKind::LanePosition),
    );
    bins.set(MetricKind::Headway, bin_of(raw.headway_s, MetricKind::Headway));
    bins.set(
        MetricKind::FollowingDistance,
        bin_of(raw.following_distance_m, MetricKind::FollowingDistance),
    );
    DerivedTimestep {
        timestamp_ms: raw.timestamp_ms,
        road: raw.road.clone(),
        bins,
        distance: speed.and_then(step_distance),
    }
}

/// Orders records by timestamp and checks the uniform 100 ms step.
pub fn validate_timestamps<'a>(records: &'a [RawTimestep], file_id: &str) -> Result<Vec<&'a RawTimestep>> {
    let mut ordered: Vec<&RawTimestep> = records.iter().collect();
    ordered.sort_by_key(|r| r.timestamp_ms);
    for pair in ordered.windows(2) {
        let gap = pair[1].timestamp_ms - pair[0].timestamp_ms;
        if gap != STEP_MS {
            return Err(Error::NonUniformTimestamps {
                file_id: file_id.to_string(),
                after_ms: pair[0].timestamp_ms,
                gap_ms: gap,
            });
        }
    }
    Ok(ordered)
}

/// Groups a trip's records by road attributes and bin tuple, summing miles
/// and time. Rows come back sorted by grouping key.
pub fn summarize_trip(records: &[RawTimestep], file_id: &str) -> Result<Vec<TripSummaryRow>> {
    let ordered = validate_timestamps(records, file_id)?;
    let mut groups: BTreeMap<TripKey, Measure> = BTreeMap::new();
    for raw in ordered {
        let step = derive_timestep(raw);
        let Some(distance) = step.distance else {
            continue;
        };
        let key = TripKey {
            road: step.road,
            bins: step.bins,
        };
        *groups.entry(key).or_default() += Measure::new(distance, 1);
    }
    Ok(groups
        .into_iter()
        .map(|(key, measure)| TripSummaryRow {
            file_id: file_id.to_string(),
            road: key.road,
            bins: key.bins,
            measure,
        })
        .collect())
}
