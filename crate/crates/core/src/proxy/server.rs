//! HTTP front end of the proxy.
//!
//! `POST /` accepts one JSON-RPC call and answers with the dispatched
//! response. `GET /admin` reports scores and the current ranking. Responses
//! carry `x-nvgate-sub-node` and `x-nvgate-attempt-us` so clients can
//! classify the returned attempt with its own latency. When every sub-node
//! failed at the transport level the proxy answers 502 with a JSON-RPC error
//! and names the first failure in `x-nvgate-transport-error`.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::warn;

use super::{AdminView, Dispatch, Scoreboard, Step, SubNodeState};
use crate::classifier::{parse_quantity, HEAD_QUERY};
use crate::clock::{Clock, WallClock};
use crate::http::{post_json, Endpoint};
use crate::model::{
    error_response_bytes, parse_rpc_response, ClassifierConfig, RawResponse, RequestId,
    RpcExchange, RpcRequest,
};

pub const SUB_NODE_HEADER: &str = "x-nvgate-sub-node";
pub const ATTEMPT_US_HEADER: &str = "x-nvgate-attempt-us";
pub const ATTEMPTS_HEADER: &str = "x-nvgate-attempts";
pub const TRANSPORT_ERROR_HEADER: &str = "x-nvgate-transport-error";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubNodeConfig {
    pub id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub listen: SocketAddr,
    pub sub_nodes: Vec<SubNodeConfig>,
    #[serde(flatten)]
    pub classifier: ClassifierConfig,
    /// Rank on the last `window` outcomes per sub-node instead of the whole run.
    #[serde(default)]
    pub window: Option<usize>,
    /// JSON-RPC endpoint polled for the reference head. Without it the
    /// highest head reported by any sub-node is used.
    #[serde(default)]
    pub oracle_url: Option<String>,
    #[serde(default = "default_poll_ms")]
    pub oracle_poll_ms: u64,
}

fn default_poll_ms() -> u64 {
    250
}

impl ProxyConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: ProxyConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sub_nodes.is_empty() {
            return Err("at least one sub-node is required".into());
        }
        if self.classifier.timeliness_ms == 0 {
            return Err("T must be positive".into());
        }
        for s in &self.sub_nodes {
            Endpoint::parse(&s.url)?;
        }
        if let Some(url) = &self.oracle_url {
            Endpoint::parse(url)?;
        }
        Ok(())
    }
}

struct ProxyState {
    board: Mutex<Scoreboard>,
    endpoints: Vec<Endpoint>,
    config: ClassifierConfig,
    oracle_head: AtomicU64,
}

pub struct ProxyHandle {
    pub addr: SocketAddr,
    state: Arc<ProxyState>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ProxyHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn admin(&self) -> AdminView {
        self.state.board.lock().unwrap().snapshot()
    }

    pub fn oracle_head(&self) -> u64 {
        self.state.oracle_head.load(Ordering::Acquire)
    }

    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
    }
}

pub async fn serve_proxy(config: ProxyConfig) -> std::io::Result<ProxyHandle> {
    config
        .validate()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let endpoints: Vec<Endpoint> = config
        .sub_nodes
        .iter()
        .map(|s| Endpoint::parse(&s.url).expect("validated"))
        .collect();
    let states = config
        .sub_nodes
        .iter()
        .map(|s| SubNodeState::new(&s.id, &s.url))
        .collect();
    let state = Arc::new(ProxyState {
        board: Mutex::new(Scoreboard::with_window(states, config.window)),
        endpoints,
        config: config.classifier,
        oracle_head: AtomicU64::new(0),
    });
    let (stop, stop_rx) = watch::channel(false);

    let oracle = match &config.oracle_url {
        Some(url) => vec![Endpoint::parse(url).expect("validated")],
        None => state.endpoints.clone(),
    };
    let poll = Duration::from_millis(config.oracle_poll_ms.max(1));
    refresh_oracle(&state, &oracle).await;
    let poller = {
        let state = state.clone();
        let mut stop = stop_rx.clone();
        tokio::spawn(async move {
            loop {
                tokio::select! {
                    _ = tokio::time::sleep(poll) => refresh_oracle(&state, &oracle).await,
                    _ = stop.changed() => return,
                }
            }
        })
    };

    let listener = TcpListener::bind(config.listen).await?;
    let addr = listener.local_addr()?;
    let app = Router::new()
        .route("/", post(handle_rpc))
        .route("/admin", get(admin))
        .with_state(state.clone());
    let mut server_stop = stop_rx;
    let server = tokio::spawn(async move {
        let shutdown = async move {
            let _ = server_stop.wait_for(|s| *s).await;
        };
        if let Err(e) = axum::serve(listener, app)
            .with_graceful_shutdown(shutdown)
            .await
        {
            warn!("proxy server: {e}");
        }
    });

    Ok(ProxyHandle {
        addr,
        state,
        stop,
        tasks: vec![poller, server],
    })
}

async fn refresh_oracle(state: &ProxyState, sources: &[Endpoint]) {
    let query = RpcRequest::new(0, HEAD_QUERY, vec![]).to_bytes();
    for endpoint in sources {
        let outcome = post_json(endpoint, &query, Duration::from_secs(1)).await;
        let head = outcome
            .response
            .body()
            .and_then(|b| parse_rpc_response(b).ok())
            .and_then(|r| r.result().and_then(parse_quantity));
        if let Some(head) = head {
            state.oracle_head.fetch_max(head, Ordering::AcqRel);
        }
    }
}

#[derive(Serialize)]
struct AdminBody {
    oracle_head: u64,
    #[serde(flatten)]
    view: AdminView,
}

async fn admin(State(state): State<Arc<ProxyState>>) -> Json<serde_json::Value> {
    let body = AdminBody {
        oracle_head: state.oracle_head.load(Ordering::Acquire),
        view: state.board.lock().unwrap().snapshot(),
    };
    Json(serde_json::to_value(body).expect("admin view serializes"))
}

fn json(status: StatusCode, body: Vec<u8>, headers: HeaderMap) -> Response {
    let mut response = (status, body).into_response();
    response.headers_mut().insert(
        axum::http::header::CONTENT_TYPE,
        HeaderValue::from_static("application/json"),
    );
    response.headers_mut().extend(headers);
    response
}

fn header_value(s: &str) -> HeaderValue {
    HeaderValue::from_str(s).unwrap_or_else(|_| HeaderValue::from_static("invalid"))
}

async fn handle_rpc(State(state): State<Arc<ProxyState>>, body: Bytes) -> Response {
    let request = match RpcRequest::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            let body = error_response_bytes(&RequestId::Num(0), -32700, &e.to_string());
            return json(StatusCode::BAD_REQUEST, body, HeaderMap::new());
        }
    };
    let payload = request.to_bytes();
    let oracle = state.oracle_head.load(Ordering::Acquire);
    let (mut dispatch, mut step) = {
        let board = state.board.lock().unwrap();
        Dispatch::start(request.clone(), oracle, state.config, &board)
    };
    let timeout = dispatch.attempt_timeout();
    let outcome = loop {
        match step {
            Step::Forward(i) => {
                let sent_at = WallClock.now();
                let result = post_json(&state.endpoints[i], &payload, timeout).await;
                let exchange = RpcExchange {
                    request: request.clone(),
                    response: result.response,
                    t_r: result.elapsed,
                    sent_at,
                    sub_node_id: None,
                };
                let mut board = state.board.lock().unwrap();
                step = dispatch.on_exchange(&mut board, i, exchange);
            }
            Step::Done(outcome) => break outcome,
        }
    };

    let sub_node_id = state.board.lock().unwrap().states()[outcome.sub_node]
        .id
        .clone();
    let mut headers = HeaderMap::new();
    headers.insert(SUB_NODE_HEADER, header_value(&sub_node_id));
    headers.insert(
        ATTEMPT_US_HEADER,
        header_value(&outcome.exchange.t_r.as_micros().to_string()),
    );
    headers.insert(
        ATTEMPTS_HEADER,
        header_value(&outcome.attempts.len().to_string()),
    );
    match outcome.exchange.response {
        RawResponse::Body(body) => json(StatusCode::OK, body, headers),
        RawResponse::Transport(kind) => {
            headers.insert(TRANSPORT_ERROR_HEADER, header_value(kind.name()));
            let body = error_response_bytes(&request.id, -32000, kind.message());
            json(StatusCode::BAD_GATEWAY, body, headers)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let text = r#"{
            "listen": "127.0.0.1:0",
            "sub_nodes": [{"id": "a", "url": "http://127.0.0.1:9000"}]
        }"#;
        let c = ProxyConfig::from_json(text).unwrap();
        assert_eq!(c.classifier, ClassifierConfig::default());
        assert_eq!(c.window, None);
        assert_eq!(c.oracle_poll_ms, 250);
    }

    #[test]
    fn config_rejects_empty_and_bad_urls() {
        let empty = r#"{"listen": "127.0.0.1:0", "sub_nodes": []}"#;
        assert!(ProxyConfig::from_json(empty).is_err());
        let bad = r#"{"listen": "127.0.0.1:0", "sub_nodes": [{"id": "a", "url": "ftp://x"}]}"#;
        assert!(ProxyConfig::from_json(bad).is_err());
        let zero_t =
            r#"{"listen": "127.0.0.1:0", "T": 0, "sub_nodes": [{"id": "a", "url": "http://h:1"}]}"#;
        assert!(ProxyConfig::from_json(zero_t).is_err());
    }
}
