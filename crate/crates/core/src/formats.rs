//! Delimited-text schemas for every file the pipeline reads or writes.
//!
//! All files are comma separated with a header row; an empty field means
//! absent. Raw trip files may be gzip-compressed (`.gz` suffix).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::StringRecord;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::binning::parse_edge;
use crate::domain::{
    validate_speed_limit, AgeRange, DriverProfile, Gender, MetricKind, RawTimestep, RoadAttributes, TripMeta,
    VehicleClass, VehicleProfile, UNKNOWN,
};
use crate::error::{Error, Result};
use crate::measure::{parse_time_steps, Measure, Miles};
use crate::metric::{MetricKey, MetricSummaryRow};
use crate::trip::{BinTuple, TripSummaryRow};

pub const RAW_TRIP_HEADER: [&str; 11] = [
    "timestamp_ms",
    "speed_mph",
    "link_id",
    "way_id",
    "functional_class",
    "road_class",
    "speed_category",
    "speed_limit_mph",
    "lane_offset_m",
    "headway_s",
    "following_distance_m",
];

pub const DRIVER_HEADER: [&str; 3] = ["driver_id", "gender", "age_range"];
pub const VEHICLE_HEADER: [&str; 2] = ["vehicle_id", "vehicle_class"];
pub const TRIP_INDEX_HEADER: [&str; 3] = ["file_id", "driver_id", "vehicle_id"];

pub const TRIP_STORE_HEADER: [&str; 14] = [
    "file_id",
    "link_id",
    "way_id",
    "functional_class",
    "speed_category",
    "road_class",
    "speed_limit_mph",
    "speed",
    "speeding",
    "lane_position",
    "headway",
    "following_distance",
    "miles",
    "time_s",
];

/// Metric-table columns; the bin column is named after the metric.
pub fn metric_table_header(metric: MetricKind) -> [&'static str; 12] {
    [
        "vehicle_id",
        "driver_id",
        "gender",
        "age_range",
        "vehicle_class",
        "functional_class",
        "road_class",
        "speed_category",
        "speed_limit_mph",
        metric.name(),
        "miles",
        "time_s",
    ]
}

/// Extra trailing column carried by exported views.
pub const FACET_COLUMN: &str = "facet";

pub fn metric_file_name(metric: MetricKind) -> String {
    format!("{}.summary", metric.name())
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn open_reader(path: &Path) -> Result<csv::Reader<Box<dyn Read>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(inner))
}

pub(crate) fn check_header(path: &Path, actual: &StringRecord, expected: &[&str]) -> Result<()> {
    if actual.len() == expected.len() && actual.iter().zip(expected).all(|(a, e)| a.trim() == *e) {
        Ok(())
    } else {
        Err(Error::format(
            path,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                actual.iter().collect::<Vec<_>>().join(",")
            ),
        ))
    }
}

fn opt_text(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn opt_f64(field: &'static str, s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::InvalidValue {
            field,
            value: s.to_string(),
        }),
    }
}

fn opt_speed_limit(s: &str) -> Result<Option<u8>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let v: i64 = s.parse().map_err(|_| Error::InvalidValue {
        field: "speed_limit_mph",
        value: s.to_string(),
    })?;
    validate_speed_limit(v).map(Some)
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn line_err(path: &Path, line: u64, err: Error) -> Error {
    Error::format(path, format!("line {line}: {err}"))
}

pub fn read_raw_trip(path: &Path) -> Result<Vec<RawTimestep>> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_header(path, &header, &RAW_TRIP_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(parse_raw_record(&rec).map_err(|e| line_err(path, line, e))?);
    }
    Ok(out)
}

fn parse_raw_record(rec: &StringRecord) -> Result<RawTimestep> {
    let ts = rec[0].trim();
    let timestamp_ms = ts.parse::<i64>().map_err(|_| Error::InvalidValue {
        field: "timestamp_ms",
        value: ts.to_string(),
    })?;
    Ok(RawTimestep {
        timestamp_ms,
        speed_mph: opt_f64("speed_mph", &rec[1])?,
        road: RoadAttributes {
            link_id: opt_text(&rec[2]),
            way_id: opt_text(&rec[3]),
            functional_class: opt_text(&rec[4]),
            road_class: opt_text(&rec[5]),
            speed_category: opt_text(&rec[6]),
            speed_limit_mph: opt_speed_limit(&rec[7])?,
        },
        lane_offset_m: opt_f64("lane_offset_m", &rec[8])?,
        headway_s: opt_f64("headway_s", &rec[9])?,
        following_distance_m: opt_f64("following_distance_m", &rec[10])?,
    })
}

fn write_records<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> std::result::Result<W, csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Writes `rows` under `header` to `path`, gzip-compressing for `.gz`.
fn write_file(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let buf = BufWriter::new(file);
    if is_gz(path) {
        let enc = write_records(GzEncoder::new(buf, Compression::default()), header, rows)
            .map_err(|e| Error::csv(path, e))?;
        let mut buf = enc.finish().map_err(|e| Error::io(path, e))?;
        buf.flush().map_err(|e| Error::io(path, e))
    } else {
        let mut buf = write_records(buf, header, rows).map_err(|e| Error::csv(path, e))?;
        buf.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn raw_record_fields(r: &RawTimestep) -> Vec<String> {
    vec![
        r.timestamp_ms.to_string(),
        fmt_opt_f64(r.speed_mph),
        fmt_opt(&r.road.link_id),
        fmt_opt(&r.road.way_id),
        fmt_opt(&r.road.functional_class),
        fmt_opt(&r.road.road_class),
        fmt_opt(&r.road.speed_category),
        fmt_opt(&r.road.speed_limit_mph),
        fmt_opt_f64(r.lane_offset_m),
        fmt_opt_f64(r.headway_s),
        fmt_opt_f64(r.following_distance_m),
    ]
}

pub fn write_raw_trip(path: &Path, records: &[RawTimestep]) -> Result<()> {
    write_file(path, &RAW_TRIP_HEADER, records.iter().map(raw_record_fields))
}

fn read_table<T>(path: &Path, header: &[&str], mut parse: impl FnMut(&StringRecord) -> Result<T>) -> Result<Vec<T>> {
    let mut rdr = open_reader(path)?;
    let actual = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_header(path, &actual, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(parse(&rec).map_err(|e| line_err(path, line, e))?);
    }
    Ok(out)
}

fn required(field: &'static str, s: &str) -> Result<String> {
    opt_text(s).ok_or(Error::InvalidValue {
        field,
        value: String::new(),
    })
}

fn ensure_unique<'a>(path: &Path, what: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::format(path, format!("duplicate {what} {id:?}")));
        }
    }
    Ok(())
}

fn opt_age(s: &str) -> Result<Option<AgeRange>> {
    match s.trim() {
        "" | UNKNOWN => Ok(None),
        other => other.parse().map(Some),
    }
}

fn opt_vehicle_class(s: &str) -> Result<Option<VehicleClass>> {
    match s.trim() {
        "" | UNKNOWN => Ok(None),
        other => other.parse().map(Some),
    }
}

pub fn read_drivers(path: &Path) -> Result<Vec<DriverProfile>> {
    let drivers = read_table(path, &DRIVER_HEADER, |rec| {
        Ok(DriverProfile {
            driver_id: required("driver_id", &rec[0])?,
            gender: rec[1].parse()?,
            age_range: opt_age(&rec[2])?,
        })
    })?;
    ensure_unique(path, "driver_id", drivers.iter().map(|d| d.driver_id.as_str()))?;
    Ok(drivers)
}

pub fn write_drivers(path: &Path, drivers: &[DriverProfile]) -> Result<()> {
    write_file(
        path,
        &DRIVER_HEADER,
        drivers.iter().map(|d| {
            vec![
                d.driver_id.clone(),
                d.gender.to_string(),
                d.age_range.map_or(UNKNOWN.to_string(), |a| a.to_string()),
            ]
        }),
    )
}

pub fn read_vehicles(path: &Path) -> Result<Vec<VehicleProfile>> {
    let vehicles = read_table(path, &VEHICLE_HEADER, |rec| {
        Ok(VehicleProfile {
            vehicle_id: required("vehicle_id", &rec[0])?,
            vehicle_class: rec[1].parse()?,
        })
    })?;
    ensure_unique(path, "vehicle_id", vehicles.iter().map(|v| v.vehicle_id.as_str()))?;
    Ok(vehicles)
}

pub fn write_vehicles(path: &Path, vehicles: &[VehicleProfile]) -> Result<()> {
    write_file(
        path,
        &VEHICLE_HEADER,
        vehicles
            .iter()
            .map(|v| vec![v.vehicle_id.clone(), v.vehicle_class.to_string()]),
    )
}

pub fn read_trip_index(path: &Path) -> Result<Vec<TripMeta>> {
    let trips = read_table(path, &TRIP_INDEX_HEADER, |rec| {
        Ok(TripMeta {
            file_id: required("file_id", &rec[0])?,
            driver_id: required("driver_id", &rec[1])?,
            vehicle_id: required("vehicle_id", &rec[2])?,
        })
    })?;
    ensure_unique(path, "file_id", trips.iter().map(|t| t.file_id.as_str()))?;
    Ok(trips)
}

pub fn write_trip_index(path: &Path, trips: &[TripMeta]) -> Result<()> {
    write_file(
        path,
        &TRIP_INDEX_HEADER,
        trips
            .iter()
            .map(|t| vec![t.file_id.clone(), t.driver_id.clone(), t.vehicle_id.clone()]),
    )
}

fn opt_bin(metric: MetricKind, s: &str) -> Result<Option<crate::binning::BinIndex>> {
    match s.trim() {
        "" => Ok(None),
        t => parse_edge(metric, t).map(Some),
    }
}

fn parse_miles(s: &str) -> Result<Miles> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .and_then(Miles::from_f64)
        .ok_or_else(|| Error::InvalidValue {
            field: "miles",
            value: s.to_string(),
        })
}

fn parse_steps(s: &str) -> Result<u64> {
    parse_time_steps(s).ok_or_else(|| Error::InvalidValue {
        field: "time_s",
        value: s.to_string(),
    })
}

pub fn trip_row_fields(row: &TripSummaryRow) -> Vec<String> {
    let mut v = vec![
        row.file_id.clone(),
        fmt_opt(&row.road.link_id),
        fmt_opt(&row.road.way_id),
        fmt_opt(&row.road.functional_class),
        fmt_opt(&row.road.speed_category),
        fmt_opt(&row.road.road_class),
        fmt_opt(&row.road.speed_limit_mph),
    ];
    for m in MetricKind::ALL {
        v.push(row.bins.get(m).map(|b| b.edge_text()).unwrap_or_default());
    }
    v.push(row.measure.miles.to_f64().to_string());
    v.push(row.measure.time_text());
    v
}

pub fn parse_trip_row(rec: &StringRecord) -> Result<TripSummaryRow> {
    let mut bins = BinTuple::default();
    for (i, m) in MetricKind::ALL.into_iter().enumerate() {
        bins.set(m, opt_bin(m, &rec[7 + i])?);
    }
    Ok(TripSummaryRow {
        file_id: required("file_id", &rec[0])?,
        road: RoadAttributes {
            link_id: opt_text(&rec[1]),
            way_id: opt_text(&rec[2]),
            functional_class: opt_text(&rec[3]),
            speed_category: opt_text(&rec[4]),
            road_class: opt_text(&rec[5]),
            speed_limit_mph: opt_speed_limit(&rec[6])?,
        },
        bins,
        measure: Measure::new(parse_miles(&rec[12])?, parse_steps(&rec[13])?),
    })
}

/// Reads every row of a trip-summary store file.
pub fn read_trip_store(path: &Path) -> Result<Vec<TripSummaryRow>> {
    read_table(path, &TRIP_STORE_HEADER, parse_trip_row)
}

pub fn metric_row_fields(row: &MetricSummaryRow) -> Vec<String> {
    let k = &row.key;
    vec![
        k.vehicle_id.clone(),
        k.driver_id.clone(),
        k.gender.to_string(),
        k.age_range.map_or(UNKNOWN.to_string(), |a| a.to_string()),
        k.vehicle_class.map_or(UNKNOWN.to_string(), |c| c.to_string()),
        fmt_opt(&k.functional_class),
        fmt_opt(&k.road_class),
        fmt_opt(&k.speed_category),
        fmt_opt(&k.speed_limit_mph),
        k.bin.edge_text(),
        row.measure.miles.to_f64().to_string(),
        row.measure.time_text(),
    ]
}

fn parse_metric_row(metric: MetricKind, rec: &StringRecord) -> Result<MetricSummaryRow> {
    let gender: Gender = rec[2].parse()?;
    Ok(MetricSummaryRow {
        key: MetricKey {
            vehicle_id: required("vehicle_id", &rec[0])?,
            driver_id: required("driver_id", &rec[1])?,
            gender,
            age_range: opt_age(&rec[3])?,
            vehicle_class: opt_vehicle_class(&rec[4])?,
            functional_class: opt_text(&rec[5]),
            road_class: opt_text(&rec[6]),
            speed_category: opt_text(&rec[7]),
            speed_limit_mph: opt_speed_limit(&rec[8])?,
            bin: parse_edge(metric, &rec[9])?,
        },
        measure: Measure::new(parse_miles(&rec[10])?, parse_steps(&rec[11])?),
    })
}

/// Serializes metric rows, optionally with a trailing facet column whose
/// value is produced per row by `facet`.
pub fn metric_rows_to_bytes<'a>(
    metric: MetricKind,
    rows: impl Iterator<Item = &'a MetricSummaryRow>,
    facet: Option<&dyn Fn(&MetricSummaryRow) -> String>,
) -> Vec<u8> {
    let base = metric_table_header(metric);
    let mut header: Vec<&str> = base.to_vec();
    if facet.is_some() {
        header.push(FACET_COLUMN);
    }
    let rows = rows.map(|r| {
        let mut f = metric_row_fields(r);
        if let Some(facet) = facet {
            f.push(facet(r));
        }
        f
    });
    // Writing into a Vec cannot fail.
    write_records(Vec::new(), &header, rows).expect("in-memory csv write")
}

/// Parses a metric table (or an exported view, whose trailing facet column
/// is ignored) from delimited text.
pub fn parse_metric_rows(metric: MetricKind, source: &Path, data: impl Read) -> Result<Vec<MetricSummaryRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(data);
    let header = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
    let expected = metric_table_header(metric);
    let trimmed: StringRecord = if header.len() == expected.len() + 1 && &header[expected.len()] == FACET_COLUMN {
        header.iter().take(expected.len()).collect()
    } else {
        header
    };
    check_header(source, &trimmed, &expected)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(source, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(parse_metric_row(metric, &rec).map_err(|e| line_err(source, line, e))?);
    }
    Ok(out)
}

pub fn read_metric_rows(metric: MetricKind, path: &Path) -> Result<Vec<MetricSummaryRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_metric_rows(metric, path, BufReader::new(file))
}
