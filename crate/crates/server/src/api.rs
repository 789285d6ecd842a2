//! Request and response bodies, and the pure functions that compute them
//! from a set of loaded tables.

use std::collections::BTreeMap;

use ndsum_core::domain::MetricKind;
use ndsum_core::metric::MetricTable;
use ndsum_core::query::{
    apply_filters, box_series, export_view, observed_values, step_series, BoxGroup, BoxOptions, Dimension, FilterSet,
    Mode, StepSeries,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type Tables = BTreeMap<MetricKind, MetricTable>;

/// A failed request: HTTP status, machine-readable code and message.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: 400,
            code,
            message: message.into(),
        }
    }

    pub fn unknown_metric(name: &str) -> Self {
        ApiError {
            status: 404,
            code: "unknown_metric",
            message: format!("no metric table named {name:?} is loaded"),
        }
    }

    pub fn unavailable(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: 503,
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody<'a> {
    pub error: &'a str,
    pub message: &'a str,
}

/// Body of `POST /api/query` and `POST /api/export`.
///
/// `filters` maps dimension names to either `"all"` or a list of allowed
/// values (strings or numbers). Dimensions left out are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub metric: String,
    #[serde(default)]
    pub filters: BTreeMap<String, Value>,
    #[serde(default)]
    pub facet: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    /// Count a driver's missing bins as 0% in box statistics.
    #[serde(default = "default_true")]
    pub include_zero_bins: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricInfo {
    pub metric: MetricKind,
    pub total_miles: f64,
    pub n_drivers: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionsResponse {
    pub metric: MetricKind,
    pub dimensions: BTreeMap<&'static str, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResponse {
    pub metric: MetricKind,
    pub mode: Mode,
    pub facet: Option<Dimension>,
    /// The filters as applied, after normalization.
    pub filters: BTreeMap<&'static str, Vec<String>>,
    pub total_miles: f64,
    pub n_drivers: usize,
    pub step: Vec<StepSeries>,
    #[serde(rename = "box")]
    pub boxes: Vec<BoxGroup>,
}

pub fn metrics_info(tables: &Tables) -> Vec<MetricInfo> {
    tables
        .values()
        .map(|t| MetricInfo {
            metric: t.metric(),
            total_miles: t.total_miles(),
            n_drivers: t.n_drivers(),
            rows: t.len(),
        })
        .collect()
}

pub fn table<'a>(tables: &'a Tables, metric: &str) -> Result<&'a MetricTable, ApiError> {
    metric
        .parse::<MetricKind>()
        .ok()
        .and_then(|m| tables.get(&m))
        .ok_or_else(|| ApiError::unknown_metric(metric))
}

pub fn dimensions(tables: &Tables, metric: &str) -> Result<DimensionsResponse, ApiError> {
    let t = table(tables, metric)?;
    Ok(DimensionsResponse {
        metric: t.metric(),
        dimensions: Dimension::ALL
            .into_iter()
            .map(|d| (d.name(), observed_values(t, d)))
            .collect(),
    })
}

fn filter_value(dim: Dimension, v: &Value) -> Result<String, ApiError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Ok(n.to_string()),
        other => Err(ApiError::bad_request(
            "invalid_filter",
            format!("{dim}: values must be strings or integers, got {other}"),
        )),
    }
}

/// Turns the request's filter object into a [`FilterSet`] and checks it
/// against the table's observed values.
pub fn parse_filters(filters: &BTreeMap<String, Value>, table: &MetricTable) -> Result<FilterSet, ApiError> {
    let mut set = FilterSet::all();
    for (name, spec) in filters {
        let dim: Dimension = name
            .parse()
            .map_err(|_| ApiError::bad_request("invalid_filter", format!("unknown dimension {name:?}")))?;
        let values = match spec {
            Value::String(s) if s == "all" => continue,
            Value::Array(items) => items
                .iter()
                .map(|v| filter_value(dim, v))
                .collect::<Result<Vec<_>, _>>()?,
            other => {
                return Err(ApiError::bad_request(
                    "invalid_filter",
                    format!("{dim}: expected \"all\" or a list of values, got {other}"),
                ))
            }
        };
        set = set.with(dim, values);
    }
    set.validate(table)
        .map_err(|e| ApiError::bad_request("invalid_filter", e.to_string()))?;
    Ok(set)
}

pub fn parse_facet(facet: Option<&str>) -> Result<Option<Dimension>, ApiError> {
    facet
        .map(|f| {
            f.parse()
                .map_err(|_| ApiError::bad_request("invalid_facet", format!("unknown facet dimension {f:?}")))
        })
        .transpose()
}

pub fn parse_request(body: &[u8]) -> Result<QueryRequest, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_request", e.to_string()))
}

pub fn run_query(tables: &Tables, req: &QueryRequest) -> Result<QueryResponse, ApiError> {
    let t = table(tables, &req.metric)?;
    let filters = parse_filters(&req.filters, t)?;
    let facet = parse_facet(req.facet.as_deref())?;
    let view = apply_filters(t, &filters);
    let options = BoxOptions {
        include_zero_bins: req.include_zero_bins,
    };
    Ok(QueryResponse {
        metric: t.metric(),
        mode: req.mode,
        facet,
        filters: filters
            .constraints()
            .map(|(d, v)| (d.name(), v.iter().cloned().collect()))
            .collect(),
        total_miles: view.total_miles(),
        n_drivers: view.n_drivers(),
        step: step_series(&view, req.mode, facet),
        boxes: box_series(&view, facet, options),
    })
}

/// Export file name and CSV payload for a request.
pub fn run_export(tables: &Tables, req: &QueryRequest) -> Result<(String, Vec<u8>), ApiError> {
    let t = table(tables, &req.metric)?;
    let filters = parse_filters(&req.filters, t)?;
    let facet = parse_facet(req.facet.as_deref())?;
    let view = apply_filters(t, &filters);
    let name = match facet {
        Some(d) => format!("{}_by_{}.csv", t.metric(), d),
        None => format!("{}.csv", t.metric()),
    };
    Ok((name, export_view(&view, facet)))
}
