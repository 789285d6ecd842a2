//! Reference aggregation written directly against the on-disk formats.
//! Decimal fields are parsed into exact integers and binned with integer
//! arithmetic, so nothing here shares code with the library's binning or
//! grouping paths.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndsum_core::domain::MetricKind;
use ndsum_core::pipeline::PipelineManifest;
use ndsum_core::synth::{generate_fleet, write_fleet, FleetConfig};

/// Exact decimal: `mantissa / 10^scale`.
#[derive(Debug, Clone, Copy)]
pub struct Decimal {
    pub mantissa: i128,
    pub scale: u32,
}

pub fn parse_decimal(text: &str) -> Option<Decimal> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let m: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    Some(Decimal {
        mantissa: if neg { -m } else { m },
        scale: frac.len() as u32,
    })
}

/// Bin width as a fraction, and the allowed bin index range.
pub fn oracle_width(metric: MetricKind) -> (i128, i128, Option<(i128, i128)>) {
    match metric {
        MetricKind::Speed => (5, 2, Some((0, i128::MAX))),
        MetricKind::Speeding => (5, 2, None),
        MetricKind::LanePosition => (1, 10, Some((-20, 20))),
        MetricKind::Headway => (1, 4, Some((0, 40))),
        MetricKind::FollowingDistance => (10, 1, Some((0, 20))),
    }
}

/// floor(value / width) for value = d, width = num/den.
pub fn oracle_bin(metric: MetricKind, d: Decimal) -> Option<i64> {
    let (num, den, range) = oracle_width(metric);
    let k = (d.mantissa * den).div_euclid(10i128.pow(d.scale) * num);
    match range {
        Some((lo, hi)) if k < lo || k >= hi => None,
        _ => Some(k as i64),
    }
}

/// Bin index of a stored lower-edge text, which must be an exact edge.
pub fn edge_index(metric: MetricKind, text: &str) -> i64 {
    let d = parse_decimal(text).unwrap_or_else(|| panic!("bad edge {text:?}"));
    let (num, den, _) = oracle_width(metric);
    let scaled = d.mantissa * den;
    let unit = 10i128.pow(d.scale) * num;
    assert_eq!(scaled.rem_euclid(unit), 0, "{text} is not an edge of {metric}");
    (scaled / unit) as i64
}

fn speeding_decimal(speed: Decimal, limit: &str) -> Option<Decimal> {
    let limit: i128 = limit.trim().parse().ok()?;
    Some(Decimal {
        mantissa: speed.mantissa - limit * 10i128.pow(speed.scale),
        scale: speed.scale,
    })
}

pub type OracleKey = (Vec<String>, i64);

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Acc {
    pub miles: f64,
    pub steps: u64,
}

#[derive(Debug, Default)]
pub struct Oracle {
    pub tables: BTreeMap<MetricKind, BTreeMap<OracleKey, Acc>>,
    /// Per trip: naive Σ speed·0.1/3600 and count of speed-present records.
    pub trips: BTreeMap<String, Acc>,
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    rdr.records().map(|r| r.unwrap()).collect()
}

fn or_unknown(s: &str) -> String {
    if s.trim().is_empty() {
        "Unknown".to_string()
    } else {
        s.trim().to_string()
    }
}

/// Single pass over every raw record of every indexed trip.
pub fn oracle_aggregate(m: &PipelineManifest) -> Oracle {
    let drivers: HashMap<String, (String, String)> = read_csv(&m.drivers)
        .into_iter()
        .map(|r| (r[0].to_string(), (or_unknown(&r[1]), or_unknown(&r[2]))))
        .collect();
    let vehicles: HashMap<String, String> = read_csv(&m.vehicles)
        .into_iter()
        .map(|r| (r[0].to_string(), or_unknown(&r[1])))
        .collect();
    let mut oracle = Oracle::default();
    for trip in read_csv(&m.trip_index) {
        let (file_id, driver, vehicle) = (&trip[0], &trip[1], &trip[2]);
        let unknown = ("Unknown".to_string(), "Unknown".to_string());
        let (gender, age) = drivers.get(driver).unwrap_or(&unknown).clone();
        let class = vehicles.get(vehicle).cloned().unwrap_or_else(|| "Unknown".into());
        let path = m.raw_dir.join(format!("{file_id}.csv"));
        let trip_acc = oracle.trips.entry(file_id.to_string()).or_default();
        for rec in read_csv(&path) {
            let Some(speed) = parse_decimal(&rec[1]) else { continue };
            if speed.mantissa < 0 {
                continue;
            }
            let speed_f: f64 = rec[1].trim().parse().unwrap();
            let miles = speed_f * 0.1 / 3600.0;
            trip_acc.miles += miles;
            trip_acc.steps += 1;
            // functional_class, road_class, speed_category, speed_limit_mph
            let road = [&rec[4], &rec[5], &rec[6], &rec[7]];
            let values = [
                (MetricKind::Speed, Some(speed)),
                (MetricKind::Speeding, speeding_decimal(speed, &rec[7])),
                (MetricKind::LanePosition, parse_decimal(&rec[8])),
                (MetricKind::Headway, parse_decimal(&rec[9])),
                (MetricKind::FollowingDistance, parse_decimal(&rec[10])),
            ];
            for (metric, value) in values {
                let Some(bin) = value.and_then(|v| oracle_bin(metric, v)) else {
                    continue;
                };
                let mut key = vec![
                    vehicle.to_string(),
                    driver.to_string(),
                    gender.clone(),
                    age.clone(),
                    class.clone(),
                ];
                key.extend(road.iter().map(|s| s.trim().to_string()));
                let acc = oracle.tables.entry(metric).or_default().entry((key, bin)).or_default();
                acc.miles += miles;
                acc.steps += 1;
            }
        }
    }
    oracle
}

/// A metric summary file read back with the plain CSV reader.
pub fn read_metric_file(metric: MetricKind, path: &Path) -> BTreeMap<OracleKey, Acc> {
    let mut out = BTreeMap::new();
    for r in read_csv(path) {
        let key: Vec<String> = (0..9).map(|i| r[i].to_string()).collect();
        let bin = edge_index(metric, &r[9]);
        let miles: f64 = r[10].parse().unwrap();
        let time: f64 = r[11].parse().unwrap();
        let prev = out.insert(
            (key, bin),
            Acc {
                miles,
                steps: (time * 10.0).round() as u64,
            },
        );
        assert!(prev.is_none(), "duplicate key in {}", path.display());
    }
    out
}

/// Per-trip totals of the stage-1 store read back with the plain CSV reader.
pub fn read_store_totals(path: &Path) -> BTreeMap<String, Acc> {
    let mut out: BTreeMap<String, Acc> = BTreeMap::new();
    for r in read_csv(path) {
        let acc = out.entry(r[0].to_string()).or_default();
        acc.miles += r[12].parse::<f64>().unwrap();
        acc.steps += (r[13].parse::<f64>().unwrap() * 10.0).round() as u64;
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Writes a generated fleet plus its manifest into `dir`.
pub fn fleet_in(dir: &Path, config: &FleetConfig) -> PipelineManifest {
    let fleet = generate_fleet(config).unwrap();
    write_fleet(&fleet, dir).unwrap();
    PipelineManifest::for_fleet_dir(dir)
}
