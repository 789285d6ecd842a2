//! End-to-end orchestration of both stages over files on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::MetricKind;
use crate::error::{Error, Result};
use crate::formats::{metric_file_name, read_drivers, read_raw_trip, read_trip_index, read_trip_store, read_vehicles};
use crate::metric::{aggregate_metric_sharded, AggregateReport, MetricTable, Rosters};
use crate::store::TripStore;
use crate::trip::{summarize_trip, TripSummaryRow};

/// Locations and settings for one pipeline run. Relative paths in a
/// manifest file resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineManifest {
    pub raw_dir: PathBuf,
    pub drivers: PathBuf,
    pub vehicles: PathBuf,
    pub trip_index: PathBuf,
    pub trip_store: PathBuf,
    pub metrics_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Metric names to aggregate; all five when omitted.
    #[serde(default)]
    pub metrics: Option<Vec<String>>,
}

fn default_parallelism() -> usize {
    1
}

impl PipelineManifest {
    /// Conventional layout of a fleet directory written by the generator.
    pub fn for_fleet_dir(dir: &Path) -> Self {
        PipelineManifest {
            raw_dir: dir.join("trips"),
            drivers: dir.join("drivers.csv"),
            vehicles: dir.join("vehicles.csv"),
            trip_index: dir.join("trip_index.csv"),
            trip_store: dir.join("trips.summary"),
            metrics_dir: dir.join("metrics"),
            parallelism: 1,
            metrics: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: PipelineManifest =
            toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut m.raw_dir,
            &mut m.drivers,
            &mut m.vehicles,
            &mut m.trip_index,
            &mut m.trip_store,
            &mut m.metrics_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    /// Serialized with paths relative to `base` where possible.
    pub fn to_toml_relative(&self, base: &Path) -> String {
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .map(Path::to_path_buf)
                .unwrap_or_else(|_| p.to_path_buf())
        };
        let m = PipelineManifest {
            raw_dir: rel(&self.raw_dir),
            drivers: rel(&self.drivers),
            vehicles: rel(&self.vehicles),
            trip_index: rel(&self.trip_index),
            trip_store: rel(&self.trip_store),
            metrics_dir: rel(&self.metrics_dir),
            parallelism: self.parallelism,
            metrics: self.metrics.clone(),
        };
        toml::to_string_pretty(&m).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Manifest("parallelism must be at least 1".into()));
        }
        let paths = [
            &self.raw_dir,
            &self.drivers,
            &self.vehicles,
            &self.trip_index,
            &self.trip_store,
            &self.metrics_dir,
        ];
        let distinct: BTreeSet<&PathBuf> = paths.iter().copied().collect();
        if distinct.len() != paths.len() {
            return Err(Error::Manifest("paths must be distinct".into()));
        }
        self.selected_metrics().map(|_| ())
    }

    pub fn selected_metrics(&self) -> Result<Vec<MetricKind>> {
        match &self.metrics {
            None => Ok(MetricKind::ALL.to_vec()),
            Some(names) => {
                let set: BTreeSet<MetricKind> = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
                Ok(set.into_iter().collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummarizeReport {
    pub trips_ok: usize,
    pub rows_written: usize,
    /// Trip files that could not be processed, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// Trip id of a raw trip file: the file name without `.csv` / `.csv.gz`.
pub fn trip_file_id(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".gz").unwrap_or(name);
    stem.strip_suffix(".csv").map(str::to_string)
}

/// Raw trip files in `dir`, sorted by path.
pub fn list_trip_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && trip_file_id(p).is_some())
        .collect();
    files.sort();
    Ok(files)
}

fn summarize_file(path: &Path) -> Result<(String, Vec<TripSummaryRow>)> {
    let file_id = trip_file_id(path).ok_or_else(|| Error::format(path, "not a trip file"))?;
    let records = read_raw_trip(path)?;
    let rows = summarize_trip(&records, &file_id)?;
    Ok((file_id, rows))
}

/// Summarizes every trip file in `raw_dir` into the store at `store_path`
/// using `parallelism` workers. Failing trips are recorded and skipped. The
/// store is rewritten in canonical order at the end, so the result does not
/// depend on worker scheduling.
pub fn summarize_dir(raw_dir: &Path, store_path: &Path, parallelism: usize) -> Result<SummarizeReport> {
    let files = list_trip_files(raw_dir)?;
    let mut store = TripStore::open(store_path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Manifest(format!("cannot start worker pool: {e}")))?;

    let mut report = SummarizeReport::default();
    let (tx, rx) = mpsc::sync_channel(parallelism.max(1) * 2);
    let mut store_err = None;
    std::thread::scope(|scope| {
        scope.spawn(|| {
            pool.install(|| {
                files.par_iter().for_each_with(tx, |tx, path| {
                    let _ = tx.send((path.clone(), summarize_file(path)));
                });
            });
        });
        for (path, result) in rx {
            match result {
                Ok((file_id, rows)) => {
                    if store_err.is_some() {
                        continue;
                    }
                    match store.append_trip(&file_id, &rows) {
                        Ok(n) => {
                            report.trips_ok += 1;
                            report.rows_written += n;
                        }
                        Err(e) => store_err = Some(e),
                    }
                }
                Err(e) => report.failures.push((path, e.to_string())),
            }
        }
    });
    if let Some(e) = store_err {
        return Err(e);
    }
    report.failures.sort();
    store.compact_sorted()?;
    Ok(report)
}

pub fn load_rosters(manifest: &PipelineManifest) -> Result<Rosters> {
    Ok(Rosters::new(
        read_drivers(&manifest.drivers)?,
        read_vehicles(&manifest.vehicles)?,
        read_trip_index(&manifest.trip_index)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOutput {
    pub metric: MetricKind,
    pub path: PathBuf,
    pub rows: usize,
    pub total_miles: f64,
    pub report: AggregateReport,
}

/// Builds and writes the selected metric tables from the trip store.
pub fn aggregate_store(manifest: &PipelineManifest) -> Result<Vec<MetricOutput>> {
    let rosters = load_rosters(manifest)?;
    let rows = read_trip_store(&manifest.trip_store)?;
    let mut out = Vec::new();
    for metric in manifest.selected_metrics()? {
        let (table, report) = aggregate_metric_sharded(&rows, metric, &rosters, manifest.parallelism)?;
        let path = table.write_to_dir(&manifest.metrics_dir)?;
        out.push(MetricOutput {
            metric,
            path,
            rows: table.len(),
            total_miles: table.total_miles(),
            report,
        });
    }
    Ok(out)
}

/// Loads every `<metric>.summary` present in `dir`.
pub fn load_metric_dir(dir: &Path) -> Result<BTreeMap<MetricKind, MetricTable>> {
    let mut tables = BTreeMap::new();
    for metric in MetricKind::ALL {
        let path = dir.join(metric_file_name(metric));
        if path.is_file() {
            tables.insert(metric, MetricTable::load(metric, &path)?);
        }
    }
    Ok(tables)
}
