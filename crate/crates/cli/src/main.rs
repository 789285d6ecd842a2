//! `ndsum`: generate a synthetic fleet, summarize trips, aggregate metric
//! tables, query them offline, or serve them over HTTP.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ndsum_core::pipeline::{aggregate_store, load_metric_dir, summarize_dir, PipelineManifest};
use ndsum_core::synth::{generate_fleet, write_fleet, FleetConfig};
use ndsum_server::api::{parse_request, run_export, run_query};
use ndsum_server::AppState;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "ndsum",
    version,
    about = "Binned summaries of naturalistic driving telemetry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic fleet (rosters, trip index, raw trips) and a
    /// pipeline manifest for it.
    Synth {
        /// Fleet configuration (TOML). Built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, required_unless_present = "print_config")]
        out: Option<PathBuf>,
        /// Overrides the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the effective configuration as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarize every raw trip into the trip-level store.
    Summarize {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the manifest's worker count.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Build the per-metric summary tables from the trip-level store.
    Aggregate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Answer one query request (JSON file) against a metric directory and
    /// print the response.
    Query {
        #[arg(long, env = "NDSUM_DATA_DIR")]
        data_dir: PathBuf,
        /// Request file; `-` reads standard input.
        #[arg(long)]
        request: PathBuf,
        /// Write the CSV export of the request here instead of printing
        /// the query response.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Serve the metric tables over HTTP.
    Serve {
        #[arg(long, env = "NDSUM_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long, env = "NDSUM_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory of static UI assets served at `/`.
        #[arg(long, env = "NDSUM_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth {
            config,
            out,
            seed,
            print_config,
        } => synth(config.as_deref(), out.as_deref(), seed, print_config),
        Command::Summarize { manifest, parallelism } => summarize(&manifest, parallelism),
        Command::Aggregate { manifest } => aggregate(&manifest),
        Command::Query {
            data_dir,
            request,
            export,
        } => query(&data_dir, &request, export.as_deref()),
        Command::Serve {
            data_dir,
            addr,
            static_dir,
        } => serve(data_dir, &addr, static_dir),
    }
}

fn synth(config: Option<&Path>, out: Option<&Path>, seed: Option<u64>, print_config: bool) -> anyhow::Result<()> {
    let mut cfg = match config {
        Some(path) => FleetConfig::load(path).with_context(|| format!("reading fleet config {}", path.display()))?,
        None => FleetConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let out = out.expect("clap requires --out without --print-config");
    let fleet = generate_fleet(&cfg)?;
    write_fleet(&fleet, out)?;
    let manifest = PipelineManifest::for_fleet_dir(out);
    let manifest_path = out.join("pipeline.toml");
    fs::write(&manifest_path, manifest.to_toml_relative(out))
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    println!(
        "wrote {} drivers, {} trips, {} timesteps to {}",
        fleet.drivers.len(),
        fleet.trips.len(),
        fleet.step_count(),
        out.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn summarize(manifest: &Path, parallelism: Option<usize>) -> anyhow::Result<()> {
    let mut m = PipelineManifest::load(manifest)?;
    if let Some(p) = parallelism {
        m.parallelism = p;
        m.validate()?;
    }
    let report = summarize_dir(&m.raw_dir, &m.trip_store, m.parallelism)?;
    for (path, why) in &report.failures {
        tracing::warn!("skipped trip {}: {why}", path.display());
    }
    println!(
        "summarized {} trips into {} rows ({} failed) -> {}",
        report.trips_ok,
        report.rows_written,
        report.failures.len(),
        m.trip_store.display()
    );
    if report.trips_ok == 0 {
        bail!("no trip in {} could be summarized", m.raw_dir.display());
    }
    Ok(())
}

fn aggregate(manifest: &Path) -> anyhow::Result<()> {
    let m = PipelineManifest::load(manifest)?;
    for out in aggregate_store(&m)? {
        let r = &out.report;
        if !r.unresolved_drivers.is_empty() || !r.unresolved_vehicles.is_empty() {
            tracing::warn!(
                "{}: {} driver ids and {} vehicle ids not in the rosters, grouped as Unknown",
                out.metric,
                r.unresolved_drivers.len(),
                r.unresolved_vehicles.len()
            );
        }
        println!(
            "{}: {} rows, {:.3} miles -> {}",
            out.metric,
            out.rows,
            out.total_miles,
            out.path.display()
        );
    }
    Ok(())
}

fn query(data_dir: &Path, request: &Path, export: Option<&Path>) -> anyhow::Result<()> {
    let body = if request == Path::new("-") {
        let mut buf = Vec::new();
        std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)?;
        buf
    } else {
        fs::read(request).with_context(|| format!("reading request {}", request.display()))?
    };
    let tables = load_metric_dir(data_dir)?;
    if tables.is_empty() {
        bail!("no metric tables in {}", data_dir.display());
    }
    let req = parse_request(&body)?;
    match export {
        Some(path) => {
            let (_, csv) = run_export(&tables, &req)?;
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let resp = run_query(&tables, &req)?;
            println!("{}", serde_json::to_string(&resp)?);
        }
    }
    Ok(())
}

fn serve(data_dir: PathBuf, addr: &str, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    if !data_dir.is_dir() {
        bail!("data directory {} does not exist", data_dir.display());
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        let state = Arc::new(AppState::pending(data_dir));
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        ndsum_server::serve(listener, state, static_dir.as_deref(), shutdown).await?;
        Ok(())
    })
}
