//! Shared domain types: JSON-RPC requests and responses, request/response
//! exchanges, the transport error taxonomy, chain state and classifier bounds.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const JSONRPC_VERSION: &str = "2.0";

/// Default block height used by demos and fixtures (`0xa55e27`).
pub const DEFAULT_GENESIS_HEAD: u64 = 0xa5_5e27;

/// Microseconds on either the virtual or the wall clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_millis(ms: u64) -> Self {
        Timestamp(ms * 1_000)
    }

    pub fn from_secs(s: u64) -> Self {
        Timestamp(s * 1_000_000)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    /// Elapsed time since `earlier`, zero if `earlier` is in the future.
    pub fn since(self, earlier: Timestamp) -> Duration {
        Duration::from_micros(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(rhs.as_micros() as u64))
    }
}

impl Sub<Duration> for Timestamp {
    type Output = Timestamp;

    fn sub(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0.saturating_sub(rhs.as_micros() as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequestId {
    Num(u64),
    Str(String),
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestId::Num(n) => write!(f, "{n}"),
            RequestId::Str(s) => f.write_str(s),
        }
    }
}

impl From<u64> for RequestId {
    fn from(n: u64) -> Self {
        RequestId::Num(n)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RequestError {
    #[error("request is not valid JSON: {0}")]
    Json(String),
    #[error("unsupported jsonrpc version {0:?}")]
    Version(String),
    #[error("method name is empty")]
    EmptyMethod,
}

/// A single JSON-RPC 2.0 call. Batches are not supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcRequest {
    pub jsonrpc: String,
    pub method: String,
    #[serde(default)]
    pub params: Vec<Value>,
    pub id: RequestId,
}

impl RpcRequest {
    pub fn new(id: impl Into<RequestId>, method: impl Into<String>, params: Vec<Value>) -> Self {
        RpcRequest {
            jsonrpc: JSONRPC_VERSION.to_owned(),
            method: method.into(),
            params,
            id: id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RequestError> {
        if self.jsonrpc != JSONRPC_VERSION {
            return Err(RequestError::Version(self.jsonrpc.clone()));
        }
        if self.method.is_empty() {
            return Err(RequestError::EmptyMethod);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serialization is infallible")
    }

    pub fn from_slice(raw: &[u8]) -> Result<Self, RequestError> {
        let req: RpcRequest =
            serde_json::from_slice(raw).map_err(|e| RequestError::Json(e.to_string()))?;
        req.validate()?;
        Ok(req)
    }

    /// Numeric id, if the id is an integer.
    pub fn numeric_id(&self) -> Option<u64> {
        match self.id {
            RequestId::Num(n) => Some(n),
            RequestId::Str(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcErrorObject {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RpcOutcome {
    Result(Value),
    Error(RpcErrorObject),
}

/// A structurally valid JSON-RPC 2.0 response envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcResponse {
    pub id: Value,
    pub outcome: RpcOutcome,
}

impl RpcResponse {
    pub fn result(&self) -> Option<&Value> {
        match &self.outcome {
            RpcOutcome::Result(v) => Some(v),
            RpcOutcome::Error(_) => None,
        }
    }
}

/// First defect found while parsing a response body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseDefect {
    /// Input ended before the JSON value was complete (includes empty input).
    Truncated,
    /// A byte that cannot appear at this position.
    InvalidCharacter { line: usize, column: usize },
    /// The body does not start like a JSON value at all.
    NotJson,
    /// Valid JSON, but not a JSON-RPC 2.0 response envelope.
    NotJsonRpc(String),
}

impl ParseDefect {
    /// The transport-taxonomy name an HTTP client would report for this defect.
    pub fn error_kind(&self) -> Option<TransportErrorKind> {
        match self {
            ParseDefect::Truncated => Some(TransportErrorKind::UnexpectedEndOfJson),
            ParseDefect::InvalidCharacter { .. } | ParseDefect::NotJson => {
                Some(TransportErrorKind::InvalidCharacterInResponse)
            }
            ParseDefect::NotJsonRpc(_) => None,
        }
    }
}

impl fmt::Display for ParseDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseDefect::Truncated => f.write_str("truncated body"),
            ParseDefect::InvalidCharacter { line, column } => {
                write!(f, "invalid character at line {line} column {column}")
            }
            ParseDefect::NotJson => f.write_str("body is not JSON"),
            ParseDefect::NotJsonRpc(why) => write!(f, "not a JSON-RPC 2.0 response: {why}"),
        }
    }
}

fn starts_like_json(b: u8) -> bool {
    matches!(
        b,
        b'{' | b'[' | b'"' | b'-' | b'0'..=b'9' | b't' | b'f' | b'n'
    )
}

/// Parses a raw body into a JSON-RPC 2.0 response. Failure is a value.
pub fn parse_rpc_response(raw: &[u8]) -> Result<RpcResponse, ParseDefect> {
    match raw.iter().find(|b| !b.is_ascii_whitespace()) {
        None => return Err(ParseDefect::Truncated),
        Some(&b) if !starts_like_json(b) => return Err(ParseDefect::NotJson),
        Some(_) => {}
    }
    let value: Value = serde_json::from_slice(raw).map_err(|e| {
        if e.is_eof() {
            ParseDefect::Truncated
        } else {
            ParseDefect::InvalidCharacter {
                line: e.line(),
                column: e.column(),
            }
        }
    })?;
    envelope(value)
}

fn envelope(value: Value) -> Result<RpcResponse, ParseDefect> {
    let not_rpc = |why: &str| ParseDefect::NotJsonRpc(why.to_owned());
    let Value::Object(mut obj) = value else {
        return Err(not_rpc("top-level value is not an object"));
    };
    match obj.get("jsonrpc") {
        Some(Value::String(v)) if v == JSONRPC_VERSION => {}
        Some(_) => return Err(not_rpc("jsonrpc member is not \"2.0\"")),
        None => return Err(not_rpc("missing jsonrpc member")),
    }
    let id = obj.remove("id").ok_or_else(|| not_rpc("missing id"))?;
    if !matches!(id, Value::Number(_) | Value::String(_) | Value::Null) {
        return Err(not_rpc("id must be a number, string or null"));
    }
    let outcome = match (obj.remove("result"), obj.remove("error")) {
        (Some(result), None) => RpcOutcome::Result(result),
        (None, Some(err)) => RpcOutcome::Error(
            serde_json::from_value(err).map_err(|_| not_rpc("malformed error object"))?,
        ),
        (Some(_), Some(_)) => return Err(not_rpc("both result and error present")),
        (None, None) => return Err(not_rpc("neither result nor error present")),
    };
    Ok(RpcResponse { id, outcome })
}

/// Builds a serialized JSON-RPC error response.
pub fn error_response_bytes(id: &RequestId, code: i64, message: &str) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({
        "jsonrpc": JSONRPC_VERSION,
        "id": id,
        "error": { "code": code, "message": message },
    }))
    .expect("error response serialization is infallible")
}

/// Builds a serialized JSON-RPC success response.
pub fn result_response_bytes(id: &RequestId, result: &Value) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({
        "jsonrpc": JSONRPC_VERSION,
        "id": id,
        "result": result,
    }))
    .expect("result response serialization is infallible")
}

/// Client-observed transport and decoding failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransportErrorKind {
    ConnectionRefused,
    TimeoutAwaitingHeaders,
    TimeoutReadingBody,
    ConnectionResetByPeer,
    ServerClosedIdleConnection,
    Eof,
    UnexpectedEof,
    MalformedHttpResponse,
    InvalidChunkLength,
    InvalidChecksum,
    InvalidCharacterInResponse,
    UnexpectedEndOfJson,
}

impl TransportErrorKind {
    pub const ALL: [TransportErrorKind; 12] = [
        TransportErrorKind::ConnectionRefused,
        TransportErrorKind::TimeoutAwaitingHeaders,
        TransportErrorKind::TimeoutReadingBody,
        TransportErrorKind::ConnectionResetByPeer,
        TransportErrorKind::ServerClosedIdleConnection,
        TransportErrorKind::Eof,
        TransportErrorKind::UnexpectedEof,
        TransportErrorKind::MalformedHttpResponse,
        TransportErrorKind::InvalidChunkLength,
        TransportErrorKind::InvalidChecksum,
        TransportErrorKind::InvalidCharacterInResponse,
        TransportErrorKind::UnexpectedEndOfJson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransportErrorKind::ConnectionRefused => "ConnectionRefused",
            TransportErrorKind::TimeoutAwaitingHeaders => "TimeoutAwaitingHeaders",
            TransportErrorKind::TimeoutReadingBody => "TimeoutReadingBody",
            TransportErrorKind::ConnectionResetByPeer => "ConnectionResetByPeer",
            TransportErrorKind::ServerClosedIdleConnection => "ServerClosedIdleConnection",
            TransportErrorKind::Eof => "Eof",
            TransportErrorKind::UnexpectedEof => "UnexpectedEof",
            TransportErrorKind::MalformedHttpResponse => "MalformedHttpResponse",
            TransportErrorKind::InvalidChunkLength => "InvalidChunkLength",
            TransportErrorKind::InvalidChecksum => "InvalidChecksum",
            TransportErrorKind::InvalidCharacterInResponse => "InvalidCharacterInResponse",
            TransportErrorKind::UnexpectedEndOfJson => "UnexpectedEndOfJson",
        }
    }

    /// The error text an HTTP client typically reports for this failure.
    pub fn message(self) -> &'static str {
        match self {
            TransportErrorKind::ConnectionRefused => "connect: connection refused",
            TransportErrorKind::TimeoutAwaitingHeaders => {
                "Client.Timeout exceeded while awaiting headers"
            }
            TransportErrorKind::TimeoutReadingBody => "Client.Timeout while reading body",
            TransportErrorKind::ConnectionResetByPeer => "read: connection reset by peer",
            TransportErrorKind::ServerClosedIdleConnection => "http: server closed idle connection",
            TransportErrorKind::Eof => "EOF",
            TransportErrorKind::UnexpectedEof => "unexpected EOF",
            TransportErrorKind::MalformedHttpResponse => "malformed HTTP response",
            TransportErrorKind::InvalidChunkLength => "invalid byte in chunk length",
            TransportErrorKind::InvalidChecksum => "gzip: invalid checksum",
            TransportErrorKind::InvalidCharacterInResponse => "invalid character in response",
            TransportErrorKind::UnexpectedEndOfJson => "unexpected end of JSON input",
        }
    }
}

impl fmt::Display for TransportErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown transport error kind {0:?}")]
pub struct UnknownErrorKind(pub String);

impl FromStr for TransportErrorKind {
    type Err = UnknownErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransportErrorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownErrorKind(s.to_owned()))
    }
}

/// What came back for one request: wire bytes, or a transport failure with no body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawResponse {
    Body(Vec<u8>),
    Transport(TransportErrorKind),
}

impl RawResponse {
    pub fn body(&self) -> Option<&[u8]> {
        match self {
            RawResponse::Body(b) => Some(b),
            RawResponse::Transport(_) => None,
        }
    }

    pub fn transport_error(&self) -> Option<TransportErrorKind> {
        match self {
            RawResponse::Body(_) => None,
            RawResponse::Transport(k) => Some(*k),
        }
    }
}

/// One request/response pair, the unit of measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcExchange {
    pub request: RpcRequest,
    pub response: RawResponse,
    /// Response latency; for timeouts, the elapsed time at abandonment.
    pub t_r: Duration,
    pub sent_at: Timestamp,
    pub sub_node_id: Option<String>,
}

impl RpcExchange {
    pub fn received_at(&self) -> Timestamp {
        self.sent_at + self.t_r
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("block interval must be positive")]
    ZeroInterval,
}

/// The global chain: head height grows by one every `block_interval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    /// Head height at `genesis_at`.
    pub head_number: u64,
    #[serde(with = "duration_ms")]
    pub block_interval: Duration,
    pub genesis_at: Timestamp,
}

impl Default for ChainState {
    fn default() -> Self {
        ChainState {
            head_number: DEFAULT_GENESIS_HEAD,
            block_interval: Duration::from_secs(12),
            genesis_at: Timestamp::ZERO,
        }
    }
}

impl ChainState {
    pub fn new(
        head_number: u64,
        block_interval: Duration,
        genesis_at: Timestamp,
    ) -> Result<Self, ChainError> {
        let chain = ChainState {
            head_number,
            block_interval,
            genesis_at,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.block_interval.is_zero() {
            return Err(ChainError::ZeroInterval);
        }
        Ok(())
    }

    pub fn head_at(&self, now: Timestamp) -> u64 {
        let elapsed = now.0.saturating_sub(self.genesis_at.0);
        let interval = self.block_interval.as_micros() as u64;
        self.head_number + elapsed / interval.max(1)
    }

    /// The same chain, re-expressed so that `at` is its new origin.
    pub fn rebased(&self, at: Timestamp, new_origin: Timestamp) -> ChainState {
        ChainState {
            head_number: self.head_at(at),
            block_interval: self.block_interval,
            genesis_at: new_origin,
        }
    }
}

/// Classification bounds: timeliness `T` in milliseconds and freshness `F` in blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    #[serde(rename = "T", alias = "timeliness_ms")]
    pub timeliness_ms: u64,
    #[serde(rename = "F", alias = "freshness_blocks")]
    pub freshness_blocks: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            timeliness_ms: 100,
            freshness_blocks: 2,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("timeliness bound T must be positive")]
pub struct ZeroTimeliness;

impl ClassifierConfig {
    pub fn new(timeliness_ms: u64, freshness_blocks: u64) -> Result<Self, ZeroTimeliness> {
        if timeliness_ms == 0 {
            return Err(ZeroTimeliness);
        }
        Ok(ClassifierConfig {
            timeliness_ms,
            freshness_blocks,
        })
    }

    pub fn timeliness(&self) -> Duration {
        Duration::from_millis(self.timeliness_ms)
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
