use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde::Serialize;
use urbanlens_cli::analysis::{self, Datasets, DeformationRequest, ForecastQuery, Position, SunlightRequest};
use urbanlens_cli::server::{self, AppState, ServerConfig};
use urbanlens_core::ingest::{load_scene, synth_city, write_to_dir, SynthSpec};
use urbanlens_core::traffic::ClassThresholds;
use urbanlens_core::Error;

#[derive(Parser)]
#[command(name = "urbanlens", version, about = "City scene analysis and tile service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city and its data streams.
    Synth(SynthArgs),
    /// Load a scene and report every violation.
    Validate { scene: PathBuf },
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Run one analysis and print the JSON result.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    buildings: usize,
    /// Side of the square city in meters.
    #[arg(long, default_value_t = 2000.0)]
    extent: f64,
    #[arg(long, default_value_t = 6)]
    stations: usize,
}

#[derive(clap::Args)]
struct ServeArgs {
    scene: PathBuf,
    #[arg(long)]
    traffic: Option<PathBuf>,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    monitoring: Option<PathBuf>,
    #[arg(long, env = "UL_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "UL_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, env = "UL_DETAIL_ZOOM", default_value_t = urbanlens_core::tiles::DEFAULT_DETAIL_ZOOM)]
    detail_zoom: u8,
    /// Free and slow speed-ratio thresholds, e.g. `0.7,0.4`.
    #[arg(long, env = "UL_CLASS_THRESHOLDS", default_value = "0.7,0.4")]
    class_thresholds: ClassThresholds,
}

#[derive(Subcommand)]
enum Analyze {
    /// Sunshine hours at a point for one day.
    Sunlight {
        scene: PathBuf,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        /// Height above datum; defaults to the terrain surface.
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, default_value_t = 10)]
        step: u32,
    },
    /// Monitoring points, glyphs and trends along a metro line.
    Deformation {
        scene: PathBuf,
        #[arg(long)]
        monitoring: PathBuf,
        #[arg(long)]
        line: String,
        #[arg(long, default_value_t = 100.0)]
        buffer: f64,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Population density of every community.
    Density { scene: PathBuf },
    /// Passenger-flow forecast for one station.
    Forecast {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        station: String,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        period: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn validate(scene: &Path) -> anyhow::Result<ExitCode> {
    match load_scene(scene) {
        Ok(s) => {
            println!(
                "ok: {} buildings, {} roads, {} metro lines, {} communities",
                s.buildings().len(),
                s.roads().len(),
                s.metro_lines().len(),
                s.communities().len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::Validation(report)) => {
            for v in &report.violations {
                println!("{v}");
            }
            eprintln!("{} violation(s)", report.violations.len());
            Ok(ExitCode::from(1))
        }
        Err(e @ Error::Syntax { .. }) => {
            println!("{e}");
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

fn run_analysis(cmd: Analyze) -> anyhow::Result<()> {
    match cmd {
        Analyze::Sunlight { scene, x, y, z, date, step } => {
            let data = Datasets::new(load_scene(&scene)?, Default::default(), Vec::new());
            let point = Position(match z {
                Some(z) => vec![x, y, z],
                None => vec![x, y],
            });
            print_json(&analysis::sunlight(&data, &SunlightRequest { point, date, step })?)
        }
        Analyze::Deformation { scene, monitoring, line, buffer, scale } => {
            let data = Datasets::load(&scene, None, Some(&monitoring))?;
            print_json(&analysis::deformation(&data, &DeformationRequest { line_id: line, buffer_m: buffer, scale })?)
        }
        Analyze::Density { scene } => print_json(&analysis::densities(&load_scene(&scene)?)?),
        Analyze::Forecast { flows, station, horizon, period, alpha, k } => {
            let flows = analysis::load_flows(&flows)?;
            print_json(&analysis::station_forecast(&flows, &station, &ForecastQuery { horizon, period, alpha, k })?)
        }
    }
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let data = Datasets::load(&args.scene, args.flows.as_deref(), args.monitoring.as_deref())?;
    let observations = args.traffic.as_deref().map(analysis::load_traffic).transpose()?.unwrap_or_default();
    let config = ServerConfig { detail_zoom: args.detail_zoom, thresholds: args.class_thresholds };
    let state = Arc::new(AppState::new(data, observations, config)?);
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(server::serve(state, SocketAddr::new(args.bind, args.port)))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                seed: a.seed,
                building_count: a.buildings,
                extent: a.extent,
                station_count: a.stations,
                ..SynthSpec::default()
            };
            let city = synth_city(&spec)?;
            write_to_dir(&city, &a.out)?;
            eprintln!("wrote {} buildings to {}", city.scene.buildings().len(), a.out.display());
        }
        Command::Validate { scene } => return validate(&scene),
        Command::Serve(args) => serve(args)?,
        Command::Analyze(cmd) => run_analysis(cmd)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
