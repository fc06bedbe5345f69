//! HTTP and websocket front end.
//!
//! | route         | method | body                                    |
//! |---------------|--------|-----------------------------------------|
//! | `/health`     | GET    | `{status, model_version}`               |
//! | `/model/info` | GET    | [`ModelInfo`]                           |
//! | `/classify`   | POST   | JSON [`ClassifyRequest`] or gain CSV    |
//! | `/stream`     | GET    | websocket, see [`crate::stream`]        |
//!
//! A CSV body (`Content-Type: text/csv`) uses the gain CSV layout and is
//! classified against the simulated touch-free gains; `?worn=true` selects
//! the worn pad.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use knitpad::mesh::MeshConfig;
use knitpad::nn::{ModelSpec, FORMAT_VERSION};
use knitpad::signal::{FilterSpec, GainSeries};
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyRequest, Classifier, CAPTURE_SECONDS, FRAME_RATE};
use crate::stream::StreamSession;

pub const BIND_ENV: &str = "KNITPAD_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:7878";
/// Largest accepted request body. A 250-frame JSON capture with baseline is
/// about 40 kB.
pub const MAX_BODY_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadConfigs {
    pub benchtop: MeshConfig,
    pub worn: MeshConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_version: String,
    pub format_version: u32,
    pub spec: ModelSpec,
    pub parameter_count: usize,
    pub classes: Vec<String>,
    pub frame_rate: f64,
    pub capture_seconds: f64,
    pub filter: FilterSpec,
    pub pad: PadConfigs,
}

impl ModelInfo {
    pub fn of(classifier: &Classifier) -> Self {
        ModelInfo {
            model_version: classifier.version().to_owned(),
            format_version: FORMAT_VERSION,
            spec: classifier.spec().clone(),
            parameter_count: classifier.params().parameter_count(),
            classes: knitpad::eval::class_labels(),
            frame_rate: FRAME_RATE,
            capture_seconds: CAPTURE_SECONDS,
            filter: *classifier.filter(),
            pad: PadConfigs {
                benchtop: classifier.gain_model(false).config().clone(),
                worn: classifier.gain_model(true).config().clone(),
            },
        }
    }
}

pub fn router(classifier: Arc<Classifier>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model/info", get(model_info))
        .route("/classify", post(classify))
        .route("/stream", get(stream))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(classifier)
}

/// Bind address from the flag, then [`BIND_ENV`], then [`DEFAULT_BIND`].
pub fn bind_address(flag: Option<&str>) -> Result<SocketAddr, std::net::AddrParseError> {
    let env = std::env::var(BIND_ENV).ok();
    flag.or(env.as_deref()).unwrap_or(DEFAULT_BIND).parse()
}

pub async fn serve(classifier: Arc<Classifier>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(classifier)).await
}

fn bad_request(message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn health(State(c): State<Arc<Classifier>>) -> Json<Health> {
    Json(Health { status: "ok".into(), model_version: c.version().to_owned() })
}

async fn model_info(State(c): State<Arc<Classifier>>) -> Json<ModelInfo> {
    Json(ModelInfo::of(&c))
}

#[derive(Debug, Default, Deserialize)]
struct ClassifyQuery {
    #[serde(default)]
    worn: bool,
}

async fn classify(State(c): State<Arc<Classifier>>, Query(q): Query<ClassifyQuery>, headers: HeaderMap, body: Bytes) -> Response {
    let content_type = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    let request = if content_type.starts_with("text/csv") {
        let text = match std::str::from_utf8(&body) {
            Ok(t) => t,
            Err(_) => return bad_request("CSV body is not UTF-8"),
        };
        match GainSeries::from_csv_str(text) {
            Ok(series) => ClassifyRequest { worn: q.worn, ..ClassifyRequest::from_gains(&series, None) },
            Err(e) => return bad_request(e.to_string()),
        }
    } else {
        match serde_json::from_slice::<ClassifyRequest>(&body) {
            Ok(r) => r,
            Err(e) => return bad_request(format!("malformed request: {e}")),
        }
    };
    match tokio::task::spawn_blocking(move || c.classify(&request)).await {
        Ok(Ok(response)) => Json(response).into_response(),
        Ok(Err(e)) => bad_request(e.to_string()),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn stream(State(c): State<Arc<Classifier>>, ws: WebSocketUpgrade) -> Response {
    ws.max_message_size(MAX_BODY_BYTES).on_upgrade(move |socket| run_session(socket, c))
}

async fn run_session(mut socket: WebSocket, classifier: Arc<Classifier>) {
    let mut session = StreamSession::new(classifier);
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        // Touch-ups run a full classification; keep it off the reactor.
        let Ok((back, replies)) = tokio::task::spawn_blocking(move || {
            let replies = session.handle_text(&text);
            (session, replies)
        })
        .await
        else {
            break;
        };
        session = back;
        for reply in replies {
            let Ok(json) = serde_json::to_string(&reply) else { continue };
            if socket.send(Message::Text(json.into())).await.is_err() {
                return;
            }
        }
    }
}
