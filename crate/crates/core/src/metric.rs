//! Stage 2: per-metric tables keyed by driver, vehicle, demographics, road
//! attributes and one metric bin. Trip and segment identifiers are dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::binning::BinIndex;
use crate::domain::{AgeRange, DriverProfile, Gender, MetricKind, TripMeta, VehicleClass, VehicleProfile};
use crate::error::{Error, Result};
use crate::formats::{metric_file_name, metric_rows_to_bytes, read_metric_rows};
use crate::measure::{Measure, Miles};
use crate::trip::TripSummaryRow;

/// Grouping key of a metric table; field order is the output sort order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricKey {
    pub vehicle_id: String,
    pub driver_id: String,
    pub gender: Gender,
    pub age_range: Option<AgeRange>,
    pub vehicle_class: Option<VehicleClass>,
    pub functional_class: Option<String>,
    pub road_class: Option<String>,
    pub speed_category: Option<String>,
    pub speed_limit_mph: Option<u8>,
    pub bin: BinIndex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSummaryRow {
    pub key: MetricKey,
    pub measure: Measure,
}

impl MetricSummaryRow {
    pub fn miles(&self) -> f64 {
        self.measure.miles.to_f64()
    }

    pub fn time_s(&self) -> f64 {
        self.measure.time_s()
    }
}

/// A metric table: unique keys, sorted by key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricTable {
    metric: MetricKind,
    rows: Vec<MetricSummaryRow>,
}

impl MetricTable {
    pub fn empty(metric: MetricKind) -> Self {
        MetricTable {
            metric,
            rows: Vec::new(),
        }
    }

    /// Builds a table from arbitrary rows, summing measures of repeated keys.
    pub fn from_rows(metric: MetricKind, rows: impl IntoIterator<Item = MetricSummaryRow>) -> Result<Self> {
        let mut groups: BTreeMap<MetricKey, Measure> = BTreeMap::new();
        for row in rows {
            if row.key.bin.metric != metric {
                return Err(Error::MetricMismatch {
                    left: metric,
                    right: row.key.bin.metric,
                });
            }
            *groups.entry(row.key).or_default() += row.measure;
        }
        Ok(Self::from_groups(metric, groups))
    }

    fn from_groups(metric: MetricKind, groups: BTreeMap<MetricKey, Measure>) -> Self {
        MetricTable {
            metric,
            rows: groups
                .into_iter()
                .map(|(key, measure)| MetricSummaryRow { key, measure })
                .collect(),
        }
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn rows(&self) -> &[MetricSummaryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total(&self) -> Measure {
        self.rows.iter().fold(Measure::default(), |acc, r| acc + r.measure)
    }

    pub fn total_miles(&self) -> f64 {
        self.total().miles.to_f64()
    }

    pub fn n_drivers(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.key.driver_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        metric_rows_to_bytes(self.metric, self.rows.iter(), None)
    }

    /// Writes `<dir>/<metric>.summary` and returns its path.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(metric_file_name(self.metric));
        fs::write(&path, self.to_bytes()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(metric: MetricKind, path: &Path) -> Result<Self> {
        Self::from_rows(metric, read_metric_rows(metric, path)?)
    }
}

/// Key-wise sum of two tables of the same metric.
pub fn merge_metric_tables(a: &MetricTable, b: &MetricTable) -> Result<MetricTable> {
    if a.metric != b.metric {
        return Err(Error::MetricMismatch {
            left: a.metric,
            right: b.metric,
        });
    }
    let mut groups: BTreeMap<MetricKey, Measure> = a.rows.iter().map(|r| (r.key.clone(), r.measure)).collect();
    for r in &b.rows {
        *groups.entry(r.key.clone()).or_default() += r.measure;
    }
    Ok(MetricTable::from_groups(a.metric, groups))
}

/// Lookup tables joined onto trip-level rows.
#[derive(Debug, Clone, Default)]
pub struct Rosters {
    drivers: HashMap<String, DriverProfile>,
    vehicles: HashMap<String, VehicleProfile>,
    trips: HashMap<String, TripMeta>,
}

impl Rosters {
    pub fn new(drivers: Vec<DriverProfile>, vehicles: Vec<VehicleProfile>, trips: Vec<TripMeta>) -> Self {
        Rosters {
            drivers: drivers.into_iter().map(|d| (d.driver_id.clone(), d)).collect(),
            vehicles: vehicles.into_iter().map(|v| (v.vehicle_id.clone(), v)).collect(),
            trips: trips.into_iter().map(|t| (t.file_id.clone(), t)).collect(),
        }
    }

    pub fn trip(&self, file_id: &str) -> Option<&TripMeta> {
        self.trips.get(file_id)
    }

    pub fn driver(&self, driver_id: &str) -> Option<&DriverProfile> {
        self.drivers.get(driver_id)
    }

    pub fn vehicle(&self, vehicle_id: &str) -> Option<&VehicleProfile> {
        self.vehicles.get(vehicle_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregateReport {
    pub rows_in: usize,
    /// Trip rows whose bin for this metric is absent.
    pub rows_without_bin: usize,
    pub unresolved_drivers: BTreeSet<String>,
    pub unresolved_vehicles: BTreeSet<String>,
}

impl AggregateReport {
    fn absorb(&mut self, other: AggregateReport) {
        self.rows_in += other.rows_in;
        self.rows_without_bin += other.rows_without_bin;
        self.unresolved_drivers.extend(other.unresolved_drivers);
        self.unresolved_vehicles.extend(other.unresolved_vehicles);
    }
}

fn metric_key(
    row: &TripSummaryRow,
    bin: BinIndex,
    rosters: &Rosters,
    report: &mut AggregateReport,
) -> Result<MetricKey> {
    let trip = rosters
        .trip(&row.file_id)
        .ok_or_else(|| Error::UnindexedTrip(row.file_id.clone()))?;
    let (gender, age_range) = match rosters.driver(&trip.driver_id) {
        Some(d) => (d.gender, d.age_range),
        None => {
            report.unresolved_drivers.insert(trip.driver_id.clone());
            (Gender::Unknown, None)
        }
    };
    let vehicle_class = match rosters.vehicle(&trip.vehicle_id) {
        Some(v) => Some(v.vehicle_class),
        None => {
            report.unresolved_vehicles.insert(trip.vehicle_id.clone());
            None
        }
    };
    Ok(MetricKey {
        vehicle_id: trip.vehicle_id.clone(),
        driver_id: trip.driver_id.clone(),
        gender,
        age_range,
        vehicle_class,
        functional_class: row.road.functional_class.clone(),
        road_class: row.road.road_class.clone(),
        speed_category: row.road.speed_category.clone(),
        speed_limit_mph: row.road.speed_limit_mph,
        bin,
    })
}

/// Groups trip-level rows into one metric table. Rows without a bin for
/// `metric` are dropped; unresolved drivers and vehicles become Unknown and
/// are listed in the report.
pub fn aggregate_metric(
    rows: &[TripSummaryRow],
    metric: MetricKind,
    rosters: &Rosters,
) -> Result<(MetricTable, AggregateReport)> {
    let mut report = AggregateReport {
        rows_in: rows.len(),
        ..Default::default()
    };
    let mut groups: BTreeMap<MetricKey, Measure> = BTreeMap::new();
    for row in rows {
        let Some(bin) = row.bins.get(metric) else {
            report.rows_without_bin += 1;
            continue;
        };
        let key = metric_key(row, bin, rosters, &mut report)?;
        *groups.entry(key).or_default() += row.measure;
    }
    Ok((MetricTable::from_groups(metric, groups), report))
}

/// Partial aggregation over `shards` slices of the input, merged pairwise.
/// The result is identical to [`aggregate_metric`] for any shard count.
pub fn aggregate_metric_sharded(
    rows: &[TripSummaryRow],
    metric: MetricKind,
    rosters: &Rosters,
    shards: usize,
) -> Result<(MetricTable, AggregateReport)> {
    let chunk = rows.len().div_ceil(shards.max(1)).max(1);
    let partials: Vec<(MetricTable, AggregateReport)> = rows
        .par_chunks(chunk)
        .map(|part| aggregate_metric(part, metric, rosters))
        .collect::<Result<_>>()?;
    let mut table = MetricTable::empty(metric);
    let mut report = AggregateReport::default();
    for (t, r) in partials {
        table = merge_metric_tables(&table, &t)?;
        report.absorb(r);
    }
    Ok((table, report))
}

/// Sum of miles over trip rows that carry a bin for `metric`.
pub fn binned_trip_miles(rows: &[TripSummaryRow], metric: MetricKind) -> Miles {
    rows.iter()
        .filter(|r| r.bins.get(metric).is_some())
        .map(|r| r.measure.miles)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RoadAttributes;
    use crate::trip::BinTuple;
    use proptest::prelude::*;

    fn rosters() -> Rosters {
        Rosters::new(
            vec![DriverProfile {
                driver_id: "D1".into(),
                gender: Gender::Female,
                age_range: Some("16-19".parse().unwrap()),
            }],
            vec![VehicleProfile {
                vehicle_id: "V1".into(),
                vehicle_class: VehicleClass::Car,
            }],
            vec![
                TripMeta {
                    file_id: "T1".into(),
                    driver_id: "D1".into(),
                    vehicle_id: "V1".into(),
                },
                TripMeta {
                    file_id: "T2".into(),
                    driver_id: "D1".into(),
                    vehicle_id: "V1".into(),
                },
                TripMeta {
                    file_id: "T3".into(),
                    driver_id: "D9".into(),
                    vehicle_id: "V9".into(),
                },
            ],
        )
    }

    fn trip_row(file_id: &str, link: &str, speed_bin: i64, headway_bin: Option<i64>, miles: f64) -> TripSummaryRow {
        let mut bins = BinTuple::default();
        bins.set(MetricKind::Speed, Some(BinIndex::new(MetricKind::Speed, speed_bin)));
        bins.set(
            MetricKind::Headway,
            headway_bin.map(|k| BinIndex::new(MetricKind::Headway, k)),
        );
        TripSummaryRow {
            file_id: file_id.into(),
            road: RoadAttributes {
                link_id: Some(link.into()),
                way_id: Some(format!("w{link}")),
                functional_class: Some("3".into()),
                speed_category: Some("5".into()),
                road_class: Some("primary".into()),
                speed_limit_mph: Some(55),
            },
            bins,
            measure: Measure::new(Miles::from_f64(miles).unwrap(), 10),
        }
    }

    #[test]
    fn single_row_passes_through() {
        let rows = vec![trip_row("T1", "a", 20, None, 1.5)];
        let (t, report) = aggregate_metric(&rows, MetricKind::Speed, &rosters()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.rows()[0].miles(), 1.5);
        assert_eq!(t.rows()[0].key.gender, Gender::Female);
        assert_eq!(report.rows_without_bin, 0);
    }

    #[test]
    fn same_driver_same_group_sums_across_trips_and_links() {
        // Links differ but link ids are dropped, so both rows share one key.
        let rows = vec![trip_row("T1", "a", 20, None, 1.5), trip_row("T2", "b", 20, None, 2.25)];
        let (t, _) = aggregate_metric(&rows, MetricKind::Speed, &rosters()).unwrap();
        // Oracle: join each row to its driver and group by everything but ids.
        let mut oracle: BTreeMap<(String, String, i64), (f64, u64)> = BTreeMap::new();
        let r = rosters();
        for row in &rows {
            let trip = r.trip(&row.file_id).unwrap();
            let e = oracle
                .entry((
                    trip.driver_id.clone(),
                    trip.vehicle_id.clone(),
                    row.bins.speed.unwrap().index,
                ))
                .or_default();
            e.0 += row.miles();
            e.1 += row.measure.steps;
        }
        assert_eq!(t.len(), oracle.len());
        let only = &t.rows()[0];
        assert_eq!(only.miles(), 3.75);
        assert_eq!(only.measure.steps, 20);
    }

    #[test]
    fn absent_bin_filtered_per_metric() {
        let rows = vec![
            trip_row("T1", "a", 20, None, 1.0),
            trip_row("T1", "b", 21, Some(4), 2.0),
        ];
        let (speed, _) = aggregate_metric(&rows, MetricKind::Speed, &rosters()).unwrap();
        let (headway, rep) = aggregate_metric(&rows, MetricKind::Headway, &rosters()).unwrap();
        assert_eq!(speed.total_miles(), 3.0);
        assert_eq!(headway.total_miles(), 2.0);
        assert_eq!(rep.rows_without_bin, 1);
    }

    #[test]
    fn unresolved_roster_entries_become_unknown() {
        let rows = vec![trip_row("T3", "a", 20, None, 1.0)];
        let (t, rep) = aggregate_metric(&rows, MetricKind::Speed, &rosters()).unwrap();
        assert_eq!(t.rows()[0].key.gender, Gender::Unknown);
        assert_eq!(t.rows()[0].key.vehicle_class, None);
        assert!(rep.unresolved_drivers.contains("D9"));
        assert!(rep.unresolved_vehicles.contains("V9"));
    }

    #[test]
    fn unindexed_trip_is_an_error() {
        let rows = vec![trip_row("T404", "a", 20, None, 1.0)];
        assert!(matches!(
            aggregate_metric(&rows, MetricKind::Speed, &rosters()),
            Err(Error::UnindexedTrip(_))
        ));
    }

    #[test]
    fn empty_store_gives_empty_table() {
        let (t, _) = aggregate_metric(&[], MetricKind::Speed, &rosters()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn merge_identity_and_mismatch() {
        let rows = vec![trip_row("T1", "a", 20, Some(3), 1.0)];
        let (t, _) = aggregate_metric(&rows, MetricKind::Speed, &rosters()).unwrap();
        assert_eq!(
            merge_metric_tables(&t, &MetricTable::empty(MetricKind::Speed)).unwrap(),
            t
        );
        let (h, _) = aggregate_metric(&rows, MetricKind::Headway, &rosters()).unwrap();
        assert!(matches!(merge_metric_tables(&t, &h), Err(Error::MetricMismatch { .. })));
    }

    #[test]
    fn table_file_round_trip() {
        let rows = vec![
            trip_row("T1", "a", 20, Some(3), 1.0),
            trip_row("T3", "a", 21, Some(3), 0.1),
        ];
        let (t, _) = aggregate_metric(&rows, MetricKind::Headway, &rosters()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = t.write_to_dir(dir.path()).unwrap();
        assert!(p.ends_with("headway.summary"));
        assert_eq!(MetricTable::load(MetricKind::Headway, &p).unwrap(), t);
    }

    fn arb_rows() -> impl Strategy<Value = Vec<TripSummaryRow>> {
        prop::collection::vec(
            (prop::sample::select(vec!["T1", "T2", "T3"]), 0i64..4, 0.0f64..3.0),
            0..30,
        )
        .prop_map(|v| v.into_iter().map(|(f, k, m)| trip_row(f, "a", k, Some(k), m)).collect())
    }

    proptest! {
        #[test]
        fn merge_commutes(a in arb_rows(), b in arb_rows()) {
            let r = rosters();
            let (ta, _) = aggregate_metric(&a, MetricKind::Speed, &r).unwrap();
            let (tb, _) = aggregate_metric(&b, MetricKind::Speed, &r).unwrap();
            prop_assert_eq!(merge_metric_tables(&ta, &tb).unwrap(), merge_metric_tables(&tb, &ta).unwrap());
        }

        #[test]
        fn sharded_equals_single_pass(rows in arb_rows(), shards in 1usize..6) {
            let r = rosters();
            let (single, _) = aggregate_metric(&rows, MetricKind::Speed, &r).unwrap();
            let (sharded, _) = aggregate_metric_sharded(&rows, MetricKind::Speed, &r, shards).unwrap();
            prop_assert_eq!(single, sharded);
        }
    }
}
