//! Reference metric tables whose filtered cohorts reproduce published
//! per-bin mileage shares.
//!
//! Speeding: drivers aged 16-19 on 65 mph roads, 161,000 miles male and
//! 154,000 miles female. Headway: 65 mph roads, 78,000 miles for ages 16-19
//! and 44,000 miles for ages 65-69. Each cohort's miles are split unevenly
//! across several drivers so box plots have spread. Rows outside the
//! reference filters (other ages, other limits) are included so filtering
//! matters.

use crate::binning::BinIndex;
use crate::domain::{AgeRange, Gender, MetricKind, VehicleClass};
use crate::measure::{Measure, Miles};
use crate::metric::{MetricKey, MetricSummaryRow, MetricTable};

pub const SPEEDING_MALE_MILES: f64 = 161_000.0;
pub const SPEEDING_FEMALE_MILES: f64 = 154_000.0;
/// Speeding bins [0-2.5) through [12.5-15.0).
pub const SPEEDING_MALE_PCT: [f64; 6] = [10.17, 18.75, 20.89, 13.45, 9.19, 5.01];
pub const SPEEDING_FEMALE_PCT: [f64; 6] = [10.79, 15.63, 18.44, 16.52, 9.49, 5.57];

pub const HEADWAY_YOUNG_MILES: f64 = 78_000.0;
pub const HEADWAY_OLD_MILES: f64 = 44_000.0;
/// Headway bins [0.00-0.25) through [1.75-2.00).
pub const HEADWAY_YOUNG_PCT: [f64; 8] = [0.23, 3.23, 9.46, 12.45, 12.13, 10.16, 8.32, 6.92];
pub const HEADWAY_OLD_PCT: [f64; 8] = [0.07, 0.81, 3.62, 6.94, 8.91, 9.24, 8.67, 8.07];

struct Cohort<'a> {
    prefix: &'a str,
    gender: Gender,
    age: &'a str,
    drivers: usize,
}

struct Road {
    functional_class: &'static str,
    road_class: &'static str,
    speed_category: &'static str,
    limit: u8,
}

const HIGHWAY_65: Road = Road {
    functional_class: "1",
    road_class: "motorway",
    speed_category: "2",
    limit: 65,
};

const ARTERIAL_55: Road = Road {
    functional_class: "2",
    road_class: "trunk",
    speed_category: "3",
    limit: 55,
};

/// Full per-bin percentages: the published head bins followed by the
/// remainder spread over the `tail` bins in proportion to their weights.
fn distribution(head_start: i64, head: &[f64], tail: &[(i64, f64)]) -> Vec<(i64, f64)> {
    let rest = 100.0 - head.iter().sum::<f64>();
    let weight: f64 = tail.iter().map(|(_, w)| w).sum();
    let mut out: Vec<(i64, f64)> = head
        .iter()
        .enumerate()
        .map(|(i, p)| (head_start + i as i64, *p))
        .collect();
    out.extend(tail.iter().map(|(k, w)| (*k, rest * w / weight)));
    out
}

/// Share of bin `k`'s miles carried by driver `d` of `n`.
fn driver_share(d: usize, n: usize, k: i64) -> f64 {
    let w = |d: usize| 1.0 + ((d as i64 * 7 + k * 3).rem_euclid(5)) as f64;
    w(d) / (0..n).map(w).sum::<f64>()
}

fn cohort_rows(
    metric: MetricKind,
    cohort: &Cohort<'_>,
    road: &Road,
    total_miles: f64,
    pct: &[(i64, f64)],
) -> Vec<MetricSummaryRow> {
    let classes = VehicleClass::ALL;
    let mut rows = Vec::new();
    for d in 0..cohort.drivers {
        for (k, p) in pct {
            let miles = total_miles * p / 100.0 * driver_share(d, cohort.drivers, *k);
            // Time at roughly the posted limit, at least one step.
            let steps = ((miles / f64::from(road.limit)) * 36_000.0).round().max(1.0) as u64;
            rows.push(MetricSummaryRow {
                key: MetricKey {
                    vehicle_id: format!("V-{}{}", cohort.prefix, d + 1),
                    driver_id: format!("{}{}", cohort.prefix, d + 1),
                    gender: cohort.gender,
                    age_range: cohort.age.parse::<AgeRange>().ok(),
                    vehicle_class: Some(classes[d % classes.len()]),
                    functional_class: Some(road.functional_class.to_string()),
                    road_class: Some(road.road_class.to_string()),
                    speed_category: Some(road.speed_category.to_string()),
                    speed_limit_mph: Some(road.limit),
                    bin: BinIndex::new(metric, *k),
                },
                measure: Measure::new(Miles::from_f64(miles).expect("finite miles"), steps),
            });
        }
    }
    rows
}

const SPEEDING_TAIL: [(i64, f64); 7] = [(-4, 1.0), (-3, 2.0), (-2, 4.0), (-1, 6.0), (6, 3.0), (7, 2.0), (8, 1.0)];

pub fn speeding_table() -> MetricTable {
    let m = MetricKind::Speeding;
    let male = Cohort {
        prefix: "SM",
        gender: Gender::Male,
        age: "16-19",
        drivers: 5,
    };
    let female = Cohort {
        prefix: "SF",
        gender: Gender::Female,
        age: "16-19",
        drivers: 4,
    };
    let older = Cohort {
        prefix: "SO",
        gender: Gender::Male,
        age: "20-24",
        drivers: 3,
    };
    let male_pct = distribution(0, &SPEEDING_MALE_PCT, &SPEEDING_TAIL);
    let female_pct = distribution(0, &SPEEDING_FEMALE_PCT, &SPEEDING_TAIL);
    let flat = distribution(-2, &[20.0, 20.0, 20.0, 20.0], &[(2, 1.0)]);

    let mut rows = cohort_rows(m, &male, &HIGHWAY_65, SPEEDING_MALE_MILES, &male_pct);
    rows.extend(cohort_rows(m, &female, &HIGHWAY_65, SPEEDING_FEMALE_MILES, &female_pct));
    // Outside the reference filter: same teens on 55 mph roads, and 20-24
    // drivers on 65 mph roads.
    rows.extend(cohort_rows(m, &male, &ARTERIAL_55, 20_000.0, &flat));
    rows.extend(cohort_rows(m, &female, &ARTERIAL_55, 12_000.0, &flat));
    rows.extend(cohort_rows(m, &older, &HIGHWAY_65, 90_000.0, &flat));
    MetricTable::from_rows(m, rows).expect("fixture rows share one metric")
}

fn headway_tail() -> Vec<(i64, f64)> {
    (8..30).map(|k| (k, (31 - k) as f64)).collect()
}

pub fn headway_table() -> MetricTable {
    let m = MetricKind::Headway;
    let young = Cohort {
        prefix: "HY",
        gender: Gender::Female,
        age: "16-19",
        drivers: 4,
    };
    let young_m = Cohort {
        prefix: "HZ",
        gender: Gender::Male,
        age: "16-19",
        drivers: 3,
    };
    let old = Cohort {
        prefix: "HO",
        gender: Gender::Male,
        age: "65-69",
        drivers: 5,
    };
    let mid = Cohort {
        prefix: "HM",
        gender: Gender::Female,
        age: "40-44",
        drivers: 2,
    };
    let tail = headway_tail();
    let young_pct = distribution(0, &HEADWAY_YOUNG_PCT, &tail);
    let old_pct = distribution(0, &HEADWAY_OLD_PCT, &tail);
    let flat = distribution(4, &[10.0; 8], &[(20, 1.0)]);

    // Young cohort miles split across a female and a male group.
    let mut rows = cohort_rows(m, &young, &HIGHWAY_65, HEADWAY_YOUNG_MILES * 0.55, &young_pct);
    rows.extend(cohort_rows(
        m,
        &young_m,
        &HIGHWAY_65,
        HEADWAY_YOUNG_MILES * 0.45,
        &young_pct,
    ));
    rows.extend(cohort_rows(m, &old, &HIGHWAY_65, HEADWAY_OLD_MILES, &old_pct));
    rows.extend(cohort_rows(m, &old, &ARTERIAL_55, 15_000.0, &flat));
    rows.extend(cohort_rows(m, &mid, &HIGHWAY_65, 30_000.0, &flat));
    MetricTable::from_rows(m, rows).expect("fixture rows share one metric")
}

/// Small tables for the remaining metrics, so a full five-table data
/// directory can be served.
pub fn aux_table(metric: MetricKind) -> MetricTable {
    let drivers = Cohort {
        prefix: "AX",
        gender: Gender::Female,
        age: "30-34",
        drivers: 3,
    };
    let others = Cohort {
        prefix: "AY",
        gender: Gender::Male,
        age: "50-54",
        drivers: 2,
    };
    let pct = match metric {
        MetricKind::Speed => distribution(22, &[5.0, 15.0, 30.0, 25.0], &[(27, 2.0), (28, 1.0)]),
        MetricKind::FollowingDistance => distribution(0, &[5.0, 20.0, 25.0], &[(3, 3.0), (4, 2.0), (5, 1.0)]),
        MetricKind::LanePosition => distribution(-3, &[10.0, 20.0, 30.0], &[(0, 2.0), (1, 1.0)]),
        MetricKind::Speeding => return speeding_table(),
        MetricKind::Headway => return headway_table(),
    };
    let mut rows = cohort_rows(metric, &drivers, &HIGHWAY_65, 5_000.0, &pct);
    rows.extend(cohort_rows(metric, &others, &ARTERIAL_55, 3_000.0, &pct));
    MetricTable::from_rows(metric, rows).expect("fixture rows share one metric")
}

/// All five reference tables.
pub fn reference_tables() -> Vec<MetricTable> {
    MetricKind::ALL.into_iter().map(aux_table).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn driver_shares_sum_to_one() {
        for n in 1..7 {
            for k in -5..10 {
                let s: f64 = (0..n).map(|d| driver_share(d, n, k)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distributions_sum_to_100() {
        let d = distribution(0, &SPEEDING_MALE_PCT, &SPEEDING_TAIL);
        assert!((d.iter().map(|(_, p)| p).sum::<f64>() - 100.0).abs() < 1e-9);
        let d = distribution(0, &HEADWAY_OLD_PCT, &headway_tail());
        assert!((d.iter().map(|(_, p)| p).sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn five_reference_tables() {
        let t = reference_tables();
        assert_eq!(t.len(), 5);
        for (table, m) in t.iter().zip(MetricKind::ALL) {
            assert_eq!(table.metric(), m);
            assert!(!table.is_empty());
        }
    }
}
