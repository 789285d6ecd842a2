//! Binned, mergeable summaries of naturalistic driving telemetry.
//!
//! The pipeline runs in two stages. [`trip`] reduces each trip's 100 ms
//! records to miles and time per unique road/bin combination, and [`store`]
//! appends those rows to a common trip-level table. [`metric`] then collapses
//! the trip-level table into one table per driving metric, joined with driver
//! and vehicle rosters. [`query`] filters, facets and summarizes metric tables
//! as step series and per-driver box statistics.

pub mod binning;
pub mod domain;
pub mod error;
pub mod fixtures;
pub mod formats;
pub mod measure;
pub mod metric;
pub mod pipeline;
pub mod query;
pub mod store;
pub mod synth;
pub mod trip;

pub use error::{Error, Result};
