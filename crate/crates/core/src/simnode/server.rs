//! Raw-socket HTTP front end for a [`SimNode`], plus its control endpoint.
//!
//! Responses are written byte by byte rather than through an HTTP library so
//! that broken preambles, bad chunk sizes, corrupt gzip trailers, resets and
//! stalls reach the client exactly as emitted. While the node is crashed the
//! listening socket is closed, so clients get genuine connection refusals.

use std::io::Write;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use flate2::{write::GzEncoder, Compression};
use serde::{Deserialize, Serialize};
use socket2::SockRef;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpSocket, TcpStream};
use tokio::sync::{watch, Notify};
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use super::{Emission, JournalEntry, SimNode, SimNodeFaultConfig};
use crate::clock::Clock;
use crate::model::{error_response_bytes, RequestId, RpcRequest};

const REQUEST_READ_LIMIT: Duration = Duration::from_secs(5);
const STALL_LIMIT: Duration = Duration::from_secs(30);
const MAX_REQUEST_BYTES: usize = 1 << 20;

struct Shared {
    node: Mutex<SimNode>,
    clock: Arc<dyn Clock>,
    state_changed: Notify,
}

impl Shared {
    fn crash_remaining(&self) -> Option<Duration> {
        let now = self.clock.now();
        self.node.lock().unwrap().crash_remaining(now)
    }
}

/// A running simulated node. Dropping the handle does not stop it; call [`SimNodeHandle::shutdown`].
pub struct SimNodeHandle {
    pub rpc_addr: SocketAddr,
    pub control_addr: SocketAddr,
    shared: Arc<Shared>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl SimNodeHandle {
    pub fn rpc_url(&self) -> String {
        format!("http://{}", self.rpc_addr)
    }

    pub fn control_url(&self) -> String {
        format!("http://{}", self.control_addr)
    }

    pub fn journal(&self) -> Vec<JournalEntry> {
        self.shared.node.lock().unwrap().journal().to_vec()
    }

    pub fn local_head(&self) -> u64 {
        let now = self.shared.clock.now();
        self.shared.node.lock().unwrap().advance_chain(now)
    }

    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
    }
}

fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    let socket = if addr.is_ipv4() {
        TcpSocket::new_v4()?
    } else {
        TcpSocket::new_v6()?
    };
    socket.set_reuseaddr(true)?;
    socket.bind(addr)?;
    socket.listen(1024)
}

/// Starts serving `node` on `rpc_addr` with its control API on `control_addr`.
/// Port 0 picks a free port; the chosen port is kept across crash restarts.
pub async fn spawn_simnode(
    node: SimNode,
    clock: Arc<dyn Clock>,
    rpc_addr: SocketAddr,
    control_addr: SocketAddr,
) -> std::io::Result<SimNodeHandle> {
    let shared = Arc::new(Shared {
        node: Mutex::new(node),
        clock,
        state_changed: Notify::new(),
    });
    let (stop, stop_rx) = watch::channel(false);

    let listener = bind(rpc_addr)?;
    let rpc_addr = listener.local_addr()?;
    let rpc_task = tokio::spawn(accept_loop(
        listener,
        rpc_addr,
        shared.clone(),
        stop_rx.clone(),
    ));

    let control = TcpListener::bind(control_addr).await?;
    let control_addr = control.local_addr()?;
    let app = Router::new()
        .route("/head", get(head))
        .route("/faults", post(set_faults))
        .route("/crash", post(crash))
        .route("/restore", post(restore))
        .route("/journal", get(journal))
        .with_state(shared.clone());
    let mut control_stop = stop_rx;
    let control_task = tokio::spawn(async move {
        let shutdown = async move {
            let _ = control_stop.wait_for(|s| *s).await;
        };
        if let Err(e) = axum::serve(control, app)
            .with_graceful_shutdown(shutdown)
            .await
        {
            warn!("control server: {e}");
        }
    });

    Ok(SimNodeHandle {
        rpc_addr,
        control_addr,
        shared,
        stop,
        tasks: vec![rpc_task, control_task],
    })
}

async fn accept_loop(
    listener: TcpListener,
    addr: SocketAddr,
    shared: Arc<Shared>,
    mut stop: watch::Receiver<bool>,
) {
    let mut listener = Some(listener);
    loop {
        if *stop.borrow() {
            return;
        }
        if let Some(remaining) = shared.crash_remaining() {
            listener = None;
            debug!(%addr, ?remaining, "crashed, listener closed");
            tokio::select! {
                _ = tokio::time::sleep(remaining) => {}
                _ = shared.state_changed.notified() => {}
                _ = stop.changed() => return,
            }
            continue;
        }
        let active = match listener.take() {
            Some(l) => l,
            None => match bind(addr) {
                Ok(l) => l,
                Err(e) => {
                    warn!(%addr, "rebind failed: {e}");
                    tokio::time::sleep(Duration::from_millis(20)).await;
                    continue;
                }
            },
        };
        tokio::select! {
            accepted = active.accept() => {
                listener = Some(active);
                if let Ok((stream, _)) = accepted {
                    tokio::spawn(handle_connection(stream, shared.clone()));
                }
            }
            _ = shared.state_changed.notified() => listener = Some(active),
            _ = stop.changed() => return,
        }
    }
}

async fn read_request(stream: &mut TcpStream) -> Option<Vec<u8>> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    loop {
        let mut headers = [httparse::EMPTY_HEADER; 32];
        let mut req = httparse::Request::new(&mut headers);
        if let Ok(httparse::Status::Complete(consumed)) = req.parse(&buf) {
            let len = req
                .headers
                .iter()
                .find(|h| h.name.eq_ignore_ascii_case("content-length"))
                .and_then(|h| {
                    std::str::from_utf8(h.value)
                        .ok()?
                        .trim()
                        .parse::<usize>()
                        .ok()
                })
                .unwrap_or(0);
            if buf.len() >= consumed + len {
                return Some(buf[consumed..consumed + len].to_vec());
            }
        }
        if buf.len() > MAX_REQUEST_BYTES {
            return None;
        }
        let n = stream.read(&mut chunk).await.ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}

fn preamble(status: &str, headers: &[(&str, String)]) -> Vec<u8> {
    let mut out = format!("HTTP/1.1 {status}\r\n");
    for (k, v) in headers {
        out.push_str(&format!("{k}: {v}\r\n"));
    }
    out.push_str("\r\n");
    out.into_bytes()
}

fn json_response(body: &[u8]) -> Vec<u8> {
    let mut out = preamble(
        "200 OK",
        &[
            ("Content-Type", "application/json".into()),
            ("Content-Length", body.len().to_string()),
            ("Connection", "close".into()),
        ],
    );
    out.extend_from_slice(body);
    out
}

fn reset(stream: TcpStream) {
    let _ = SockRef::from(&stream).set_linger(Some(Duration::ZERO));
    drop(stream);
}

/// Holds the connection open without sending anything more until the client gives up.
async fn stall(stream: &mut TcpStream) {
    let mut sink = [0u8; 1024];
    let _ = tokio::time::timeout(STALL_LIMIT, async {
        while let Ok(n) = stream.read(&mut sink).await {
            if n == 0 {
                break;
            }
        }
    })
    .await;
}

async fn handle_connection(mut stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_nodelay(true);
    let Ok(Some(raw)) = tokio::time::timeout(REQUEST_READ_LIMIT, read_request(&mut stream)).await
    else {
        return;
    };
    let req = match RpcRequest::from_slice(&raw) {
        Ok(req) => req,
        Err(e) => {
            let body = error_response_bytes(&RequestId::Num(0), -32700, &e.to_string());
            let _ = stream.write_all(&json_response(&body)).await;
            return;
        }
    };
    let served = {
        let now = shared.clock.now();
        let mut node = shared.node.lock().unwrap();
        let was_crashed = node.is_crashed(now);
        let served = node.serve(&req, now);
        if !was_crashed && node.is_crashed(now) {
            shared.state_changed.notify_waiters();
        }
        served
    };
    tokio::time::sleep(served.latency).await;
    emit(stream, served.emission).await;
}

async fn emit(mut stream: TcpStream, emission: Emission) {
    let result = match emission {
        Emission::Respond(body) => stream.write_all(&json_response(&body)).await,
        Emission::Refuse | Emission::Reset => {
            reset(stream);
            return;
        }
        Emission::StallBeforeHeaders => {
            stall(&mut stream).await;
            return;
        }
        Emission::StallMidBody { body, sent } => {
            let mut out = preamble(
                "200 OK",
                &[
                    ("Content-Type", "application/json".into()),
                    ("Content-Length", body.len().to_string()),
                ],
            );
            out.extend_from_slice(&body[..sent]);
            if stream.write_all(&out).await.is_ok() {
                stall(&mut stream).await;
            }
            return;
        }
        Emission::CloseIdle => {
            let out = preamble(
                "408 Request Timeout",
                &[
                    ("Content-Length", "0".into()),
                    ("Connection", "close".into()),
                ],
            );
            stream.write_all(&out).await
        }
        Emission::CloseWithoutResponse => Ok(()),
        Emission::TruncatedBody { body, sent } => {
            let mut out = preamble(
                "200 OK",
                &[
                    ("Content-Type", "application/json".into()),
                    ("Content-Length", body.len().to_string()),
                    ("Connection", "close".into()),
                ],
            );
            out.extend_from_slice(&body[..sent]);
            stream.write_all(&out).await
        }
        Emission::MalformedPreamble => {
            stream
                .write_all(b"HTTP/1.1 2OO 0K\r\nContent-Length: 0\r\n\r\n")
                .await
        }
        Emission::BadChunkLength { body } => {
            let mut out = preamble(
                "200 OK",
                &[
                    ("Content-Type", "application/json".into()),
                    ("Transfer-Encoding", "chunked".into()),
                    ("Connection", "close".into()),
                ],
            );
            out.extend_from_slice(format!("{:x}zz\r\n", body.len()).as_bytes());
            out.extend_from_slice(&body);
            out.extend_from_slice(b"\r\n0\r\n\r\n");
            stream.write_all(&out).await
        }
        Emission::BadGzipChecksum { body } => {
            let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
            let _ = enc.write_all(&body);
            let mut gz = enc.finish().unwrap_or_default();
            if gz.len() >= 8 {
                let crc = gz.len() - 8;
                gz[crc] ^= 0xff;
            }
            let mut out = preamble(
                "200 OK",
                &[
                    ("Content-Type", "application/json".into()),
                    ("Content-Encoding", "gzip".into()),
                    ("Content-Length", gz.len().to_string()),
                    ("Connection", "close".into()),
                ],
            );
            out.extend_from_slice(&gz);
            stream.write_all(&out).await
        }
    };
    if result.is_ok() {
        let _ = stream.shutdown().await;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadReport {
    pub local_head: u64,
    pub global_head: u64,
    pub crashed: bool,
}

async fn head(State(shared): State<Arc<Shared>>) -> Json<HeadReport> {
    let now = shared.clock.now();
    let mut node = shared.node.lock().unwrap();
    Json(HeadReport {
        local_head: node.advance_chain(now),
        global_head: node.chain().head_at(now),
        crashed: node.is_crashed(now),
    })
}

async fn set_faults(
    State(shared): State<Arc<Shared>>,
    Json(faults): Json<SimNodeFaultConfig>,
) -> Result<Json<serde_json::Value>, (axum::http::StatusCode, String)> {
    shared
        .node
        .lock()
        .unwrap()
        .set_faults(faults)
        .map_err(|e| (axum::http::StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(Json(serde_json::json!({ "ok": true })))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrashRequest {
    pub duration_ms: u64,
}

async fn crash(
    State(shared): State<Arc<Shared>>,
    Json(req): Json<CrashRequest>,
) -> Json<HeadReport> {
    {
        let now = shared.clock.now();
        shared
            .node
            .lock()
            .unwrap()
            .crash(now, Duration::from_millis(req.duration_ms));
    }
    shared.state_changed.notify_waiters();
    head(State(shared)).await
}

async fn restore(State(shared): State<Arc<Shared>>) -> Json<HeadReport> {
    {
        let now = shared.clock.now();
        shared.node.lock().unwrap().restore(now);
    }
    shared.state_changed.notify_waiters();
    head(State(shared)).await
}

async fn journal(State(shared): State<Arc<Shared>>) -> Json<Vec<JournalEntry>> {
    Json(shared.node.lock().unwrap().journal().to_vec())
}
