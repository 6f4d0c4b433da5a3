//! Subcommand implementations behind the thin argument layer in `main`.
//!
//! Every command returns a [`CmdError`] whose variant fixes the process
//! exit code: `Usage` (1) for bad invocations and configs, `Data` (2) for
//! problems in the inputs, `Internal` (3) for bugs and environment failures
//! (I/O, ports, runtime). Keeping commands as plain functions lets the
//! integration tests drive them in-process and inspect the returned
//! summaries instead of scraping stdout.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use pluvio_core::data::{
    apply_standardization, drop_sparse_stations, interpolate_missing, latest_feature_matrix,
    make_samples, split_chronological, standardize, DailyRecord, DataError, SampleSet, Split,
    Station,
};
use pluvio_core::graph::{GraphError, StationGraph};
use pluvio_core::metrics::{evaluate, heavy_climatology, EvalReport, MetricsError, StationClimatology};
use pluvio_core::model::{
    forward, predict_with_flags, train, Forecast, GcnModel, ModelError, TrainReport,
};
use pluvio_core::telemetry::aggregate_daily;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataio::{self, DataioError};
use crate::gateway;

/// What went wrong, sorted by whose fault it is.
#[derive(Debug)]
pub enum CmdError {
    /// The invocation or configuration is wrong; exit code 1.
    Usage(String),
    /// The input data violates the contract; exit code 2.
    Data(String),
    /// A bug or an environment failure; exit code 3.
    Internal(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Data(_) => 2,
            CmdError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Usage(msg) | CmdError::Data(msg) | CmdError::Internal(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl std::error::Error for CmdError {}

impl From<DataioError> for CmdError {
    fn from(e: DataioError) -> Self {
        match e {
            DataioError::Io { .. } => CmdError::Internal(e.to_string()),
            _ => CmdError::Data(e.to_string()),
        }
    }
}

impl From<DataError> for CmdError {
    fn from(e: DataError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<GraphError> for CmdError {
    fn from(e: GraphError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<MetricsError> for CmdError {
    fn from(e: MetricsError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<ModelError> for CmdError {
    fn from(e: ModelError) -> Self {
        match e {
            // A config that reaches the model was user-provided.
            ModelError::InvalidConfig(_) => CmdError::Usage(e.to_string()),
            ModelError::EmptySplit => CmdError::Data(e.to_string()),
            ModelError::ShapeMismatch(_) => CmdError::Internal(e.to_string()),
        }
    }
}

fn internal_io(context: &str, path: &Path) -> impl FnOnce(std::io::Error) -> CmdError {
    let prefix = format!("{context} {}", path.display());
    move |e| CmdError::Internal(format!("{prefix}: {e}"))
}

/// Loads stations and records, drops stations with too many gaps, sorts the
/// survivors by id, and fills the remaining gaps. This is the shared front
/// half of training and evaluation.
fn prepare_dataset(
    stations_csv: &Path,
    records_csv: &Path,
    max_missing_frac: f64,
) -> Result<(Vec<Station>, Vec<DailyRecord>), CmdError> {
    let stations = dataio::load_stations(stations_csv)?;
    let records = dataio::load_records(records_csv)?;
    let (records, mut stations) = drop_sparse_stations(records, stations, max_missing_frac)?;
    // Node order everywhere downstream is the station order handed to the
    // core, so fix it deterministically regardless of CSV row order.
    stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let records = interpolate_missing(records)?;
    Ok((stations, records))
}

fn build_samples_and_split(
    config: &RunConfig,
    stations: &[Station],
    records: &[DailyRecord],
) -> Result<(SampleSet, Split), CmdError> {
    let samples = make_samples(records, stations, config.window_length)?;
    let split = split_chronological(samples.len(), config.split_fractions())?;
    Ok((samples, split))
}

pub struct TrainOutput {
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
    pub graph_path: PathBuf,
    pub report: TrainReport,
    pub stations: usize,
    pub samples: usize,
}

/// Full training pipeline: clean, graph, window, standardize, fit, and
/// write `checkpoint.json`, `train_report.json`, and `graph.csv` under the
/// output directory.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput, CmdError> {
    let (stations, records) =
        prepare_dataset(config.stations_csv()?, config.records_csv()?, config.max_missing_frac)?;
    let graph = StationGraph::build(&stations, &config.adjacency_scheme()?)?;
    let (mut samples, split) = build_samples_and_split(config, &stations, &records)?;
    let stats = standardize(&mut samples, &split.train)?;

    let mut model = GcnModel::init(config.gcn_config(), samples.feature_dim(), config.seed)?;
    let report = train(&mut model, &graph.normalized_adjacency, &samples, &split)?;

    std::fs::create_dir_all(&config.output_dir)
        .map_err(internal_io("cannot create", &config.output_dir))?;
    let checkpoint_path = config.output_dir.join("checkpoint.json");
    let report_path = config.output_dir.join("train_report.json");
    let graph_path = config.output_dir.join("graph.csv");

    Checkpoint::from_trained(config, &samples.node_order, samples.feature_dim(), &stats, &model)
        .save(&checkpoint_path)?;
    write_json(&report_path, &train_report_json(&report))?;
    dataio::write_graph_csv(&graph, &graph_path)?;

    println!(
        "trained on {} stations, {} samples (train {} / val {} / test {})",
        stations.len(),
        samples.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    println!(
        "epochs run: {} (best epoch {}, {}), final val loss {:.6}",
        report.epochs_run,
        report.best_epoch,
        if report.stopped_early { "stopped early" } else { "ran to the limit" },
        report.val_loss_history[report.best_epoch - 1]
    );
    println!("wrote {}", checkpoint_path.display());

    Ok(TrainOutput {
        checkpoint_path,
        report_path,
        graph_path,
        report,
        stations: stations.len(),
        samples: samples.len(),
    })
}

fn train_report_json(report: &TrainReport) -> serde_json::Value {
    serde_json::json!({
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
        "train_loss": report.train_loss_history,
        "val_loss": report.val_loss_history,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CmdError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CmdError::Internal(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(internal_io("cannot write", path))
}

/// Rebuilds the evaluation-time dataset exactly as the checkpoint's run saw
/// it and verifies the station set still matches the trained node order.
fn prepare_for_checkpoint(
    checkpoint: &Checkpoint,
    stations_csv: &Path,
    records_csv: &Path,
) -> Result<(Vec<Station>, Vec<DailyRecord>, StationGraph), CmdError> {
    let (stations, records) = prepare_dataset(
        stations_csv,
        records_csv,
        checkpoint.config.max_missing_frac,
    )?;
    let current: Vec<&str> = stations.iter().map(|s| s.station_id.as_str()).collect();
    let trained: Vec<&str> = checkpoint.node_order.iter().map(String::as_str).collect();
    if current != trained {
        return Err(CmdError::Data(format!(
            "NodeOrderMismatch: checkpoint was trained on stations [{}] but the data yields [{}]",
            trained.join(", "),
            current.join(", ")
        )));
    }
    let graph = StationGraph::build(&stations, &checkpoint.config.adjacency_scheme()?)?;
    Ok((stations, records, graph))
}

pub struct EvalOutput {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub test_samples: usize,
    pub first_test_date: String,
    pub last_test_date: String,
}

/// Scores a checkpoint on the chronologically held-out test block of the
/// given records and writes `evaluation.json` under the output directory.
///
/// Predictions are scored after the output policy (negative rainfall
/// clamps to zero), i.e. the numbers describe the forecasts the system
/// would actually emit.
pub fn cmd_evaluate(config: &RunConfig, checkpoint_path: &Path) -> Result<EvalOutput, CmdError> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let model = checkpoint.to_model()?;
    let (stations, records, graph) =
        prepare_for_checkpoint(&checkpoint, config.stations_csv()?, config.records_csv()?)?;

    let run = &checkpoint.config;
    let mut samples = make_samples(&records, &stations, run.window_length)?;
    if samples.feature_dim() != checkpoint.feature_dim {
        return Err(CmdError::Data(format!(
            "FeatureDimMismatch: checkpoint expects {} feature columns, data yields {}",
            checkpoint.feature_dim,
            samples.feature_dim()
        )));
    }
    apply_standardization(&mut samples, &checkpoint.standardization());
    let split = split_chronological(samples.len(), run.split_fractions())?;

    // Flatten test-block truths and clamped predictions, sample-major.
    let mut y = Vec::new();
    let mut y_hat = Vec::new();
    for k in split.test.clone() {
        let raw = forward(&model, &graph.normalized_adjacency, &samples.features[k])?;
        y.extend_from_slice(&samples.targets[k]);
        y_hat.extend(raw.into_iter().map(|v| v.max(0.0)));
    }
    let report = evaluate(&y, &y_hat, run.heavy_threshold_mm)?;

    std::fs::create_dir_all(&config.output_dir)
        .map_err(internal_io("cannot create", &config.output_dir))?;
    let report_path = config.output_dir.join("evaluation.json");
    let first_test_date = dataio::day_to_iso(samples.target_dates[split.test.start]);
    let last_test_date = dataio::day_to_iso(samples.target_dates[split.test.end - 1]);
    write_json(
        &report_path,
        &serde_json::json!({
            "mse": report.mse,
            "mae": report.mae,
            "pearson_r": report.pearson_r,
            "n": report.n,
            "heavy_precision": report.heavy_precision,
            "heavy_recall": report.heavy_recall,
            "heavy_threshold_mm": run.heavy_threshold_mm,
            "test_samples": split.test.len(),
            "first_test_date": first_test_date,
            "last_test_date": last_test_date,
        }),
    )?;

    println!(
        "test block: {} graph-days ({} to {}), {} station-days",
        split.test.len(),
        first_test_date,
        last_test_date,
        report.n
    );
    println!("mse {:.4}  mae {:.4}  pearson r {:.4}", report.mse, report.mae, report.pearson_r);
    match (report.heavy_precision, report.heavy_recall) {
        (Some(p), Some(r)) => println!("heavy events: precision {p:.4}  recall {r:.4}"),
        (p, r) => println!(
            "heavy events: precision {}  recall {}",
            p.map_or("undefined".to_string(), |v| format!("{v:.4}")),
            r.map_or("undefined".to_string(), |v| format!("{v:.4}"))
        ),
    }

    Ok(EvalOutput {
        report,
        report_path,
        test_samples: split.test.len(),
        first_test_date,
        last_test_date,
    })
}

pub struct PredictOutput {
    pub forecast_path: PathBuf,
    pub based_on_through: String,
    pub forecast_for: String,
    pub forecasts: Vec<(String, Forecast)>,
}

/// Forecasts the day after the last recorded day and writes
/// `forecast.json`. Prediction never interpolates: every station must have
/// observed values for the trailing window.
pub fn cmd_predict(
    config: &RunConfig,
    checkpoint_path: &Path,
    threshold_override: Option<f64>,
) -> Result<PredictOutput, CmdError> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let model = checkpoint.to_model()?;
    let run = &checkpoint.config;

    let mut stations = dataio::load_stations(config.stations_csv()?)?;
    stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let current: Vec<&str> = stations.iter().map(|s| s.station_id.as_str()).collect();
    let trained: Vec<&str> = checkpoint.node_order.iter().map(String::as_str).collect();
    if current != trained {
        return Err(CmdError::Data(format!(
            "NodeOrderMismatch: checkpoint was trained on stations [{}] but the data yields [{}]",
            trained.join(", "),
            current.join(", ")
        )));
    }
    let records = dataio::load_records(config.records_csv()?)?;

    let (mut features, last_day) =
        latest_feature_matrix(&records, &stations, run.window_length).map_err(|e| match e {
            DataError::Incomplete { station_id } => CmdError::Data(format!(
                "SpanTooShort: station {station_id} has no observed value on each of the \
                 trailing {} days; prediction does not interpolate",
                run.window_length
            )),
            other => CmdError::from(other),
        })?;
    if features.cols() != checkpoint.feature_dim {
        return Err(CmdError::Data(format!(
            "FeatureDimMismatch: checkpoint expects {} feature columns, data yields {}",
            checkpoint.feature_dim,
            features.cols()
        )));
    }
    checkpoint.standardization().apply(&mut features);

    let graph = StationGraph::build(&stations, &run.adjacency_scheme()?)?;
    let threshold = threshold_override.unwrap_or(run.heavy_threshold_mm);
    let forecasts = predict_with_flags(&model, &graph.normalized_adjacency, &features, threshold)?;

    let based_on_through = dataio::day_to_iso(last_day);
    let forecast_for = dataio::day_to_iso(pluvio_core::data::Day(last_day.0 + 1));

    std::fs::create_dir_all(&config.output_dir)
        .map_err(internal_io("cannot create", &config.output_dir))?;
    let forecast_path = config.output_dir.join("forecast.json");
    let station_rows: Vec<serde_json::Value> = stations
        .iter()
        .zip(&forecasts)
        .map(|(s, f)| {
            serde_json::json!({
                "station_id": s.station_id,
                "rain_mm": f.rain_mm,
                "heavy": f.heavy,
            })
        })
        .collect();
    write_json(
        &forecast_path,
        &serde_json::json!({
            "forecast_for": forecast_for,
            "based_on_through": based_on_through,
            "heavy_threshold_mm": threshold,
            "stations": station_rows,
        }),
    )?;

    println!("forecast for {forecast_for} (observations through {based_on_through}):");
    for (s, f) in stations.iter().zip(&forecasts) {
        println!(
            "  {}  {:6.2} mm{}",
            s.station_id,
            f.rain_mm,
            if f.heavy { "  HEAVY" } else { "" }
        );
    }

    Ok(PredictOutput {
        forecast_path,
        based_on_through,
        forecast_for,
        forecasts: stations
            .into_iter()
            .map(|s| s.station_id)
            .zip(forecasts)
            .collect(),
    })
}

pub struct ClimatologyOutput {
    pub csv_path: PathBuf,
    pub rows: Vec<StationClimatology>,
}

/// Counts observed heavy days per station and writes `climatology.csv`
/// (station, coordinates, average heavy days per year). Interpolated values
/// would dilute the count, so only observed records participate.
pub fn cmd_climatology(config: &RunConfig) -> Result<ClimatologyOutput, CmdError> {
    let stations = dataio::load_stations(config.stations_csv()?)?;
    let records = dataio::load_records(config.records_csv()?)?;
    let known: std::collections::BTreeSet<&str> =
        stations.iter().map(|s| s.station_id.as_str()).collect();
    for r in &records {
        if !known.contains(r.station_id.as_str()) {
            return Err(CmdError::Data(format!(
                "climatology: records mention station {} absent from the station file",
                r.station_id
            )));
        }
    }
    let rows = heavy_climatology(&records, config.heavy_threshold_mm)?;

    std::fs::create_dir_all(&config.output_dir)
        .map_err(internal_io("cannot create", &config.output_dir))?;
    let csv_path = config.output_dir.join("climatology.csv");
    dataio::write_climatology_csv(&rows, &stations, &csv_path)?;

    println!(
        "heavy-day climatology at >= {} mm across {} stations:",
        config.heavy_threshold_mm,
        rows.len()
    );
    for row in &rows {
        println!(
            "  {}  {} heavy days over {} days  ({:.2} per year)",
            row.station_id, row.heavy_days, row.span_days, row.avg_heavy_days_per_year
        );
    }

    Ok(ClimatologyOutput { csv_path, rows })
}

pub struct ExportOutput {
    pub out_path: PathBuf,
    pub records_written: usize,
    pub unknown_devices: usize,
}

/// Replays the gateway store into daily per-station records.
///
/// With no device map, device ids are taken as station ids directly.
/// Readings from unmapped devices are skipped with a warning on stderr —
/// a telemetry archive may legitimately contain devices that never joined
/// the network.
pub fn cmd_export(
    store_path: &Path,
    device_map_path: Option<&Path>,
    out_path: &Path,
) -> Result<ExportOutput, CmdError> {
    let readings = gateway::replay_store(store_path)?;
    let messages: Vec<_> = readings.into_iter().map(|r| r.message).collect();

    let device_map = match device_map_path {
        Some(path) => dataio::load_device_map(path)?,
        None => messages
            .iter()
            .map(|m| (m.device_id.clone(), m.device_id.clone()))
            .collect(),
    };

    let (records, unknown) = aggregate_daily(&messages, &device_map);
    for u in &unknown {
        eprintln!(
            "warning: skipped reading from unmapped device {} at unix {}",
            u.device_id, u.timestamp
        );
    }

    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(internal_io("cannot create", parent))?;
        }
    }
    dataio::write_records_csv(&records, out_path)?;
    println!(
        "exported {} station-day records to {} ({} unmapped readings skipped)",
        records.len(),
        out_path.display(),
        unknown.len()
    );

    Ok(ExportOutput {
        out_path: out_path.to_path_buf(),
        records_written: records.len(),
        unknown_devices: unknown.len(),
    })
}

/// Runs the ingest gateway until interrupted.
pub fn cmd_serve(listen: SocketAddr, store_path: &Path) -> Result<(), CmdError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CmdError::Internal(format!("tokio runtime: {e}")))?;
    runtime.block_on(gateway::serve(listen, store_path.to_path_buf()))
}
