//! Append-only trip-summary store backed by one delimited-text file.
//!
//! Each trip is appended as a single buffered write; if the write fails the
//! file is truncated back to its previous length, so a partially written trip
//! is never left behind. Re-appending a trip that is already present rewrites
//! the file through a temporary sibling and an atomic rename.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{check_header, parse_trip_row, read_trip_store, trip_row_fields, TRIP_STORE_HEADER};
use crate::trip::{TripKey, TripSummaryRow};

#[derive(Debug)]
pub struct TripStore {
    path: PathBuf,
    /// Row count per file id currently in the store.
    trips: BTreeMap<String, usize>,
}

fn encode(rows: &[TripSummaryRow], with_header: bool) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if with_header {
        w.write_record(TRIP_STORE_HEADER).expect("in-memory csv write");
    }
    for row in rows {
        w.write_record(trip_row_fields(row)).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

/// Canonical store order: file id, then the trip grouping key.
pub fn sort_rows(rows: &mut [TripSummaryRow]) {
    rows.sort_by(|a, b| {
        a.file_id.cmp(&b.file_id).then_with(|| {
            let ka = TripKey {
                road: a.road.clone(),
                bins: a.bins,
            };
            let kb = TripKey {
                road: b.road.clone(),
                bins: b.bins,
            };
            ka.cmp(&kb)
        })
    });
}

impl TripStore {
    /// Opens an existing store or creates an empty one with a header row.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut trips = BTreeMap::new();
        if path.exists() {
            let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
            let header = rdr.headers().map_err(|e| Error::csv(&path, e))?.clone();
            check_header(&path, &header, &TRIP_STORE_HEADER)?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::csv(&path, e))?;
                let row = parse_trip_row(&rec)?;
                *trips.entry(row.file_id).or_insert(0) += 1;
            }
        } else {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_atomic(&path, &encode(&[], true))?;
        }
        Ok(TripStore { path, trips })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn trip_count(&self) -> usize {
        self.trips.len()
    }

    pub fn row_count(&self) -> usize {
        self.trips.values().sum()
    }

    pub fn contains(&self, file_id: &str) -> bool {
        self.trips.contains_key(file_id)
    }

    /// Appends one trip's rows, replacing any rows previously stored under
    /// the same file id. Returns the number of rows written.
    pub fn append_trip(&mut self, file_id: &str, rows: &[TripSummaryRow]) -> Result<usize> {
        if let Some(bad) = rows.iter().find(|r| r.file_id != file_id) {
            return Err(Error::InvalidValue {
                field: "file_id",
                value: bad.file_id.clone(),
            });
        }
        if self.trips.contains_key(file_id) {
            let mut kept: Vec<TripSummaryRow> = self.rows()?.into_iter().filter(|r| r.file_id != file_id).collect();
            kept.extend_from_slice(rows);
            write_atomic(&self.path, &encode(&kept, true))?;
        } else if !rows.is_empty() {
            self.append_bytes(&encode(rows, false))?;
        }
        if rows.is_empty() {
            self.trips.remove(file_id);
        } else {
            self.trips.insert(file_id.to_string(), rows.len());
        }
        Ok(rows.len())
    }

    fn append_bytes(&self, bytes: &[u8]) -> Result<()> {
        let mut file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let before = file.metadata().map_err(|e| Error::io(&self.path, e))?.len();
        let written = file.write_all(bytes).and_then(|_| file.sync_data());
        if let Err(e) = written {
            let _ = file.set_len(before);
            return Err(Error::io(&self.path, e));
        }
        Ok(())
    }

    pub fn rows(&self) -> Result<Vec<TripSummaryRow>> {
        read_trip_store(&self.path)
    }

    /// Rewrites the store in canonical order, so stores built from the same
    /// trips are byte-identical regardless of append order.
    pub fn compact_sorted(&mut self) -> Result<()> {
        let mut rows = self.rows()?;
        sort_rows(&mut rows);
        write_atomic(&self.path, &encode(&rows, true))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
