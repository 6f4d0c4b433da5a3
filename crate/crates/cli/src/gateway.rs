//! HTTP ingest gateway for gauge telemetry delivered over SMS webhooks.
//!
//! The SMS provider POSTs each inbound message as a urlencoded form whose
//! `Body` field carries one telemetry frame. The gateway verifies the frame
//! and appends it to a plain-text, append-only store — one
//! `<received-at>|<frame>` line per reading — acknowledging only after the
//! line is on disk. The store is the system of record; everything else
//! (`/readings/latest`, exports) is derived from it.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use tokio::io::AsyncWriteExt;

use pluvio_core::telemetry::{parse_telemetry, tips_to_mm, TelemetryMessage};

use crate::commands::CmdError;

/// One replayed or freshly ingested reading.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredReading {
    /// Gateway-side receive time, RFC 3339 UTC.
    pub received_at: String,
    /// The frame exactly as received.
    pub frame: String,
    pub message: TelemetryMessage,
}

/// Reads a store file back into readings, in append order.
///
/// Lines are strict — this process wrote them — with one exception: a final
/// line without a newline that fails to parse is treated as a torn write
/// from a crash, skipped with a warning instead of poisoning the whole
/// store.
pub fn replay_store(path: &Path) -> Result<Vec<StoredReading>, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("cannot read store {}: {e}", path.display())))?;
    let ends_clean = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();

    let mut readings = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let parsed = line.split_once('|').and_then(|(received_at, frame)| {
            parse_telemetry(frame.as_bytes()).ok().map(|message| StoredReading {
                received_at: received_at.to_string(),
                frame: frame.to_string(),
                message,
            })
        });
        match parsed {
            Some(reading) => readings.push(reading),
            None if i + 1 == lines.len() && !ends_clean => {
                eprintln!(
                    "warning: store {}: dropping torn final line ({} bytes)",
                    path.display(),
                    line.len()
                );
            }
            None => {
                return Err(CmdError::Data(format!(
                    "store {}: line {} is corrupt",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(readings)
}

struct Store {
    file: tokio::fs::File,
    path: PathBuf,
}

impl Store {
    /// Appends one line; on a failed write, truncates back to the previous
    /// length so a partial line cannot linger mid-file.
    async fn append(&mut self, line: &str) -> std::io::Result<()> {
        let before = self.file.metadata().await?.len();
        let result = async {
            self.file.write_all(line.as_bytes()).await?;
            self.file.flush().await?;
            self.file.sync_data().await
        }
        .await;
        if result.is_err() {
            // Best effort: the next startup tolerates a torn tail anyway.
            let _ = self.file.set_len(before).await;
        }
        result
    }
}

struct Shared {
    store: tokio::sync::Mutex<Store>,
    latest: tokio::sync::RwLock<HashMap<String, StoredReading>>,
}

fn json_status(status: StatusCode, body: serde_json::Value) -> (StatusCode, Json<serde_json::Value>) {
    (status, Json(body))
}

fn error_body(reason: &str) -> serde_json::Value {
    serde_json::json!({ "status": "error", "reason": reason })
}

fn message_json(reading: &StoredReading) -> serde_json::Value {
    let m = &reading.message;
    serde_json::json!({
        "received_at": reading.received_at,
        "frame": reading.frame,
        "message": {
            "device_id": m.device_id,
            "timestamp": m.timestamp,
            "tip_count": m.tip_count,
            "rain_mm": tips_to_mm(u64::from(m.tip_count)),
            "temp_c": m.temp_c.value(),
            "soil_pct": m.soil_pct.value(),
            "hum_pct": m.hum_pct.value(),
            "uv_mw_cm2": m.uv_mw_cm2.value(),
            "batt_v": m.batt_v.value(),
        },
    })
}

/// POST /webhook/sms — the provider's inbound-message hook.
async fn webhook_sms(
    State(shared): State<Arc<Shared>>,
    body: Bytes,
) -> (StatusCode, Json<serde_json::Value>) {
    // Parse the form ourselves instead of using a typed extractor: every
    // rejection must come back as our JSON error shape, not a framework
    // default.
    let pairs: Vec<(String, String)> = serde_urlencoded::from_bytes(&body).unwrap_or_default();
    let Some((_, frame)) = pairs.iter().find(|(k, _)| k == "Body") else {
        return json_status(StatusCode::BAD_REQUEST, error_body("BadFrame"));
    };

    let message = match parse_telemetry(frame.as_bytes()) {
        Ok(message) => message,
        Err(e) => return json_status(StatusCode::BAD_REQUEST, error_body(e.name())),
    };

    let reading = StoredReading {
        received_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        frame: frame.clone(),
        message,
    };
    let line = format!("{}|{}\n", reading.received_at, reading.frame);

    // Serialize writers; acknowledge only once the line is durable.
    {
        let mut store = shared.store.lock().await;
        if let Err(e) = store.append(&line).await {
            eprintln!("error: store {}: {e}", store.path.display());
            return json_status(
                StatusCode::INTERNAL_SERVER_ERROR,
                error_body("StoreUnwritable"),
            );
        }
    }
    shared
        .latest
        .write()
        .await
        .insert(reading.message.device_id.clone(), reading);
    json_status(StatusCode::OK, serde_json::json!({ "status": "ok" }))
}

/// GET /healthz — liveness only.
async fn healthz() -> (StatusCode, Json<serde_json::Value>) {
    json_status(StatusCode::OK, serde_json::json!({ "status": "ok" }))
}

/// GET /readings/latest?device=ID — most recent reading per device.
async fn latest_reading(
    State(shared): State<Arc<Shared>>,
    Query(params): Query<HashMap<String, String>>,
) -> (StatusCode, Json<serde_json::Value>) {
    let Some(device) = params.get("device") else {
        return json_status(StatusCode::BAD_REQUEST, error_body("BadRequest"));
    };
    match shared.latest.read().await.get(device) {
        Some(reading) => json_status(StatusCode::OK, message_json(reading)),
        None => json_status(StatusCode::NOT_FOUND, error_body("UnknownDevice")),
    }
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/webhook/sms", post(webhook_sms))
        .route("/healthz", get(healthz))
        .route("/readings/latest", get(latest_reading))
        .with_state(shared)
}

/// A gateway bound and serving in the background, owned by tests or
/// [`serve`].
pub struct RunningGateway {
    pub addr: SocketAddr,
    shutdown: tokio::sync::oneshot::Sender<()>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl RunningGateway {
    pub async fn shutdown(self) -> Result<(), CmdError> {
        let _ = self.shutdown.send(());
        match self.task.await {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => Err(CmdError::Internal(format!("gateway: {e}"))),
            Err(e) => Err(CmdError::Internal(format!("gateway task: {e}"))),
        }
    }
}

/// Binds the listener, replays the store to warm the latest-reading cache,
/// and serves in a background task. Pass port 0 to bind an ephemeral port;
/// the actual address is in the returned handle.
pub async fn start(listen: SocketAddr, store_path: PathBuf) -> Result<RunningGateway, CmdError> {
    let mut latest: HashMap<String, StoredReading> = HashMap::new();
    if store_path.exists() {
        for reading in replay_store(&store_path)? {
            latest.insert(reading.message.device_id.clone(), reading);
        }
    } else if let Some(parent) = store_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CmdError::Internal(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }

    let file = tokio::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&store_path)
        .await
        .map_err(|e| {
            CmdError::Internal(format!("cannot open store {}: {e}", store_path.display()))
        })?;

    let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            CmdError::Internal(format!("AddressInUse: cannot bind {listen}: {e}"))
        } else {
            CmdError::Internal(format!("cannot bind {listen}: {e}"))
        }
    })?;
    let addr = listener
        .local_addr()
        .map_err(|e| CmdError::Internal(format!("listener address: {e}")))?;

    let shared = Arc::new(Shared {
        store: tokio::sync::Mutex::new(Store { file, path: store_path }),
        latest: tokio::sync::RwLock::new(latest),
    });
    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(shared);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await
    });

    Ok(RunningGateway { addr, shutdown: shutdown_tx, task })
}

/// Serves until interrupted. This is the `serve` subcommand.
pub async fn serve(listen: SocketAddr, store_path: PathBuf) -> Result<(), CmdError> {
    let gateway = start(listen, store_path.clone()).await?;
    println!(
        "gateway listening on http://{} (store: {})",
        gateway.addr,
        store_path.display()
    );
    tokio::signal::ctrl_c()
        .await
        .map_err(|e| CmdError::Internal(format!("signal handler: {e}")))?;
    println!("shutting down");
    gateway.shutdown().await
}

#[cfg(test)]
mod tests {
    use super::*;
    use pluvio_core::telemetry::{encode_telemetry, Dec1, Dec2};

    fn frame(device: &str, ts: i64, tips: u32) -> String {
        encode_telemetry(&TelemetryMessage {
            device_id: device.to_string(),
            timestamp: ts,
            tip_count: tips,
            temp_c: Dec1::from_scaled(185),
            soil_pct: Dec1::from_scaled(420),
            hum_pct: Dec1::from_scaled(550),
            uv_mw_cm2: Dec2::from_scaled(125),
            batt_v: Dec2::from_scaled(698),
        })
        .unwrap()
    }

    #[test]
    fn replay_reads_back_appended_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        let f1 = frame("LP-01", 1_700_000_000, 3);
        let f2 = frame("LP-02", 1_700_000_060, 0);
        std::fs::write(
            &path,
            format!("2023-11-14T22:13:20.000Z|{f1}\n2023-11-14T22:14:20.000Z|{f2}\n"),
        )
        .unwrap();
        let readings = replay_store(&path).unwrap();
        assert_eq!(readings.len(), 2);
        assert_eq!(readings[0].message.device_id, "LP-01");
        assert_eq!(readings[0].frame, f1);
        assert_eq!(readings[0].received_at, "2023-11-14T22:13:20.000Z");
        assert_eq!(readings[1].message.tip_count, 0);
    }

    #[test]
    fn replay_skips_only_a_torn_final_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        let f1 = frame("LP-01", 1_700_000_000, 3);
        // Torn write: the process died mid-line, no trailing newline.
        std::fs::write(&path, format!("2023-11-14T22:13:20.000Z|{f1}\n2023-11-14T22:1")).unwrap();
        let readings = replay_store(&path).unwrap();
        assert_eq!(readings.len(), 1);

        // The same garbage mid-file is corruption, not a torn write.
        std::fs::write(
            &path,
            format!("2023-11-14T22:13:20.000Z|junk\n2023-11-14T22:14:20.000Z|{f1}\n"),
        )
        .unwrap();
        let err = replay_store(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn replay_of_missing_store_is_a_data_error() {
        let err = replay_store(Path::new("/nonexistent/store.log")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_store_is_fine() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        std::fs::write(&path, "").unwrap();
        assert_eq!(replay_store(&path).unwrap(), vec![]);
    }
}
