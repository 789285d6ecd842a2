//! Shared value types: metric kinds and their bin grids, road attributes,
//! driver and vehicle profiles, and the raw 100 ms telemetry record.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used wherever a categorical value is missing.
pub const UNKNOWN: &str = "Unknown";

/// Telemetry sampling period.
pub const STEP_MS: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Speed,
    Speeding,
    LanePosition,
    Headway,
    FollowingDistance,
}

impl MetricKind {
    /// Trip-summary column order.
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Speed,
        MetricKind::Speeding,
        MetricKind::LanePosition,
        MetricKind::Headway,
        MetricKind::FollowingDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Speed => "speed",
            MetricKind::Speeding => "speeding",
            MetricKind::LanePosition => "lane_position",
            MetricKind::Headway => "headway",
            MetricKind::FollowingDistance => "following_distance",
        }
    }

    /// Position of this metric in [`MetricKind::ALL`].
    pub fn slot(self) -> usize {
        self as usize
    }

    /// Decimal places used when printing bin edges.
    pub fn precision(self) -> usize {
        match self {
            MetricKind::Headway => 2,
            _ => 1,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            MetricKind::Speed | MetricKind::Speeding => "mph",
            MetricKind::Headway => "s",
            MetricKind::LanePosition | MetricKind::FollowingDistance => "m",
        }
    }

    pub fn bin_spec(self) -> BinSpec {
        canonical_bin_spec(self)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// A uniform bin grid. Width and anchor are kept as exact rationals over a
/// shared denominator so every edge is `(anchor + k * width_num) / den`,
/// evaluated with one correctly rounded division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinSpec {
    metric: MetricKind,
    width_num: i64,
    den: i64,
    anchor_num: i64,
    first_bin: Option<i64>,
    end_bin: Option<i64>,
}

impl BinSpec {
    /// `first_bin`/`end_bin` bound the valid bin indices as a half-open range;
    /// `None` leaves that side unbounded.
    pub fn new(
        metric: MetricKind,
        width_num: i64,
        den: i64,
        anchor_num: i64,
        first_bin: Option<i64>,
        end_bin: Option<i64>,
    ) -> Result<Self> {
        if width_num <= 0 || den <= 0 {
            return Err(Error::InvalidValue {
                field: "bin width",
                value: format!("{width_num}/{den}"),
            });
        }
        if let (Some(lo), Some(hi)) = (first_bin, end_bin) {
            if lo >= hi {
                return Err(Error::InvalidValue {
                    field: "bin bounds",
                    value: format!("[{lo}, {hi})"),
                });
            }
        }
        Ok(BinSpec {
            metric,
            width_num,
            den,
            anchor_num,
            first_bin,
            end_bin,
        })
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn width(&self) -> f64 {
        self.width_num as f64 / self.den as f64
    }

    pub fn anchor(&self) -> f64 {
        self.anchor_num as f64 / self.den as f64
    }

    /// Width as an exact `(numerator, denominator)` pair.
    pub fn width_ratio(&self) -> (i64, i64) {
        (self.width_num, self.den)
    }

    pub fn lower_bound(&self) -> Option<f64> {
        self.first_bin.map(|k| self.edge(k))
    }

    pub fn upper_bound(&self) -> Option<f64> {
        self.end_bin.map(|k| self.edge(k))
    }

    /// Valid bin indices, when both sides are bounded.
    pub fn index_range(&self) -> Option<std::ops::Range<i64>> {
        Some(self.first_bin?..self.end_bin?)
    }

    pub fn bin_count(&self) -> Option<u64> {
        self.index_range().map(|r| (r.end - r.start) as u64)
    }

    pub fn contains_index(&self, k: i64) -> bool {
        self.first_bin.is_none_or(|lo| k >= lo) && self.end_bin.is_none_or(|hi| k < hi)
    }

    /// Lower edge of bin `k`.
    pub fn edge(&self, k: i64) -> f64 {
        let num = self.anchor_num as i128 + k as i128 * self.width_num as i128;
        num as f64 / self.den as f64
    }
}

pub fn canonical_bin_spec(metric: MetricKind) -> BinSpec {
    let (width_num, den, first, end) = match metric {
        MetricKind::Speed => (5, 2, Some(0), None),
        MetricKind::Speeding => (5, 2, None, None),
        MetricKind::Headway => (1, 4, Some(0), Some(40)),
        MetricKind::FollowingDistance => (10, 1, Some(0), Some(20)),
        MetricKind::LanePosition => (1, 10, Some(-20), Some(20)),
    };
    BinSpec {
        metric,
        width_num,
        den,
        anchor_num: 0,
        first_bin: first,
        end_bin: end,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn label(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::Unknown => UNKNOWN,
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            "unknown" | "" => Ok(Gender::Unknown),
            _ => Err(Error::InvalidValue {
                field: "gender",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Ordered age band. Labels are opaque categories; the youngest band is
/// four years wide and the oldest is open ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeRange(u8);

impl AgeRange {
    pub const LABELS: [&'static str; 14] = [
        "16-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-54", "55-59", "60-64", "65-69", "70-74",
        "75-79", "80+",
    ];

    pub fn all() -> impl Iterator<Item = AgeRange> {
        (0..Self::LABELS.len() as u8).map(AgeRange)
    }

    pub fn label(self) -> &'static str {
        Self::LABELS[self.0 as usize]
    }

    pub fn ordinal(self) -> usize {
        self.0 as usize
    }
}

impl FromStr for AgeRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::LABELS
            .iter()
            .position(|l| *l == s)
            .map(|i| AgeRange(i as u8))
            .ok_or_else(|| Error::InvalidValue {
                field: "age_range",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for AgeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VehicleClass {
    Car,
    SuvCrossover,
    Truck,
    Minivan,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 4] = [
        VehicleClass::Car,
        VehicleClass::SuvCrossover,
        VehicleClass::Truck,
        VehicleClass::Minivan,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VehicleClass::Car => "Car",
            VehicleClass::SuvCrossover => "SUV-Crossover",
            VehicleClass::Truck => "Truck",
            VehicleClass::Minivan => "Minivan",
        }
    }
}

impl FromStr for VehicleClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VehicleClass::ALL
            .into_iter()
            .find(|c| c.label() == s.trim())
            .ok_or_else(|| Error::InvalidValue {
                field: "vehicle_class",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Map-matched attributes of the road segment under the vehicle.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoadAttributes {
    pub link_id: Option<String>,
    pub way_id: Option<String>,
    pub functional_class: Option<String>,
    pub speed_category: Option<String>,
    pub road_class: Option<String>,
    pub speed_limit_mph: Option<u8>,
}

/// Posted limits are multiples of 5 mph in [5, 85].
pub fn validate_speed_limit(limit: i64) -> Result<u8> {
    if (5..=85).contains(&limit) && limit % 5 == 0 {
        Ok(limit as u8)
    } else {
        Err(Error::InvalidValue {
            field: "speed_limit_mph",
            value: limit.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DriverProfile {
    pub driver_id: String,
    pub gender: Gender,
    pub age_range: Option<AgeRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VehicleProfile {
    pub vehicle_id: String,
    pub vehicle_class: VehicleClass,
}

/// One 100 ms telemetry sample. Lane offset is signed distance from the
/// lane center with left of center negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTimestep {
    pub timestamp_ms: i64,
    pub speed_mph: Option<f64>,
    pub road: RoadAttributes,
    pub lane_offset_m: Option<f64>,
    pub headway_s: Option<f64>,
    pub following_distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TripMeta {
    pub file_id: String,
    pub driver_id: String,
    pub vehicle_id: String,
}
