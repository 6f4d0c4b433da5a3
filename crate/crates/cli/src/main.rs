//! `pluvio` — rain-gauge telemetry ingest and graph-based heavy-rain
//! forecasting for a regional station network.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use pluvio::commands::{self, CmdError};
use pluvio::config::RunConfig;
use pluvio::fixture::{self, FixtureSpec};

use pluvio_core::model::model_preset;

#[derive(Parser)]
#[command(
    name = "pluvio",
    version,
    about = "Rain-gauge network telemetry, station graphs, and heavy-rainfall forecasts"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Data-source flags shared by the pipeline subcommands.
#[derive(Args)]
struct DataArgs {
    /// Station registry CSV (station_id,name,latitude_deg,longitude_deg,altitude_m).
    #[arg(long, value_name = "FILE")]
    stations: Option<PathBuf>,

    /// Daily rainfall CSV (station_id,date,precip_mm).
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,

    /// Directory for generated outputs.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

impl DataArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(p) = &self.stations {
            config.stations_csv = Some(p.clone());
        }
        if let Some(p) = &self.records {
            config.records_csv = Some(p.clone());
        }
        if let Some(p) = &self.out_dir {
            config.output_dir = p.clone();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP ingest gateway until interrupted.
    Serve {
        /// Address to listen on.
        #[arg(long, default_value = "127.0.0.1:8080", value_name = "ADDR")]
        listen: SocketAddr,

        /// Append-only store file for received frames.
        #[arg(long, value_name = "FILE")]
        store: PathBuf,
    },

    /// Replay a gateway store into a daily per-station rainfall CSV.
    Export {
        /// Append-only store file written by `serve`.
        #[arg(long, value_name = "FILE")]
        store: PathBuf,

        /// device_id,station_id map; without it device ids are used as
        /// station ids.
        #[arg(long, value_name = "FILE")]
        device_map: Option<PathBuf>,

        /// Output records CSV.
        #[arg(long, default_value = "records.csv", value_name = "FILE")]
        out: PathBuf,
    },

    /// Train a forecaster and write checkpoint, report, and graph files.
    Train {
        #[command(flatten)]
        data: DataArgs,

        /// Model preset A-D (sets the convolution widths).
        #[arg(long, value_name = "NAME")]
        model: Option<String>,

        /// Random seed for weight initialization.
        #[arg(long)]
        seed: Option<u64>,

        /// Days of history per input window.
        #[arg(long, value_name = "DAYS")]
        window: Option<usize>,

        /// Upper bound on training epochs.
        #[arg(long)]
        max_epochs: Option<usize>,

        /// Heavy-rain threshold in mm/day.
        #[arg(long, value_name = "MM")]
        threshold: Option<f64>,

        /// Graph scheme: inverse_distance or knn.
        #[arg(long, value_name = "SCHEME")]
        adjacency: Option<String>,
    },

    /// Score a checkpoint on the held-out test block.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,

        /// Trained checkpoint; defaults to <out-dir>/checkpoint.json.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
    },

    /// Forecast the day after the last recorded day.
    Predict {
        #[command(flatten)]
        data: DataArgs,

        /// Trained checkpoint; defaults to <out-dir>/checkpoint.json.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,

        /// Heavy-rain threshold in mm/day (defaults to the trained one).
        #[arg(long, value_name = "MM")]
        threshold: Option<f64>,
    },

    /// Per-station heavy-day climatology from observed records.
    Climatology {
        #[command(flatten)]
        data: DataArgs,

        /// Heavy-rain threshold in mm/day.
        #[arg(long, value_name = "MM")]
        threshold: Option<f64>,
    },

    /// Generate the synthetic demo dataset.
    MakeFixture {
        /// Directory to write the fixture files into.
        #[arg(long, default_value = "fixtures", value_name = "DIR")]
        out_dir: PathBuf,

        #[arg(long, default_value_t = 42)]
        seed: u64,

        #[arg(long, default_value_t = 5)]
        stations: usize,

        #[arg(long, default_value_t = 200)]
        days: usize,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;

    match cli.command {
        Command::Serve { listen, store } => commands::cmd_serve(listen, &store),

        Command::Export { store, device_map, out } => {
            commands::cmd_export(&store, device_map.as_deref(), &out).map(|_| ())
        }

        Command::Train { data, model, seed, window, max_epochs, threshold, adjacency } => {
            data.apply(&mut config);
            if let Some(name) = model {
                config.gcl_widths = model_preset(&name).ok_or_else(|| {
                    CmdError::Usage(format!("unknown model preset {name:?} (use A-D)"))
                })?;
            }
            if let Some(v) = seed {
                config.seed = v;
            }
            if let Some(v) = window {
                config.window_length = v;
            }
            if let Some(v) = max_epochs {
                config.max_epochs = v;
            }
            if let Some(v) = threshold {
                config.heavy_threshold_mm = v;
            }
            if let Some(v) = adjacency {
                config.adjacency = v;
            }
            commands::cmd_train(&config).map(|_| ())
        }

        Command::Evaluate { data, checkpoint } => {
            data.apply(&mut config);
            let checkpoint = checkpoint.unwrap_or_else(|| config.output_dir.join("checkpoint.json"));
            commands::cmd_evaluate(&config, &checkpoint).map(|_| ())
        }

        Command::Predict { data, checkpoint, threshold } => {
            data.apply(&mut config);
            let checkpoint = checkpoint.unwrap_or_else(|| config.output_dir.join("checkpoint.json"));
            commands::cmd_predict(&config, &checkpoint, threshold).map(|_| ())
        }

        Command::Climatology { data, threshold } => {
            data.apply(&mut config);
            if let Some(v) = threshold {
                config.heavy_threshold_mm = v;
            }
            commands::cmd_climatology(&config).map(|_| ())
        }

        Command::MakeFixture { out_dir, seed, stations, days } => {
            let spec = FixtureSpec { stations, days, seed };
            fixture::cmd_make_fixture(&out_dir, &spec).map(|_| ())
        }
    }
}
