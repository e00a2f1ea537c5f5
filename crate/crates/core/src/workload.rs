//! Workload generation, verdict logging and summaries.
//!
//! Workload A samples uniformly from the 21-method read pool; workload B
//! repeats the latest-head query. Both are open-loop: requests go out at a
//! fixed spacing whatever the target does, and every issued request produces
//! exactly one log record.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::classifier::{classify, AvailabilityVerdict, Status, HEAD_QUERY, METHOD_POOL};
use crate::clock::Clock;
use crate::http::{post_json, Endpoint};
use crate::model::{
    parse_rpc_response, ClassifierConfig, RawResponse, RpcExchange, RpcRequest, Timestamp,
    TransportErrorKind,
};
use crate::proxy::server::{ATTEMPT_US_HEADER, SUB_NODE_HEADER, TRANSPORT_ERROR_HEADER};

/// Historical queries reach back at most this many blocks from the anchor head.
pub const HISTORY_WINDOW: u64 = 1_000;
pub const FULL_SCALE_REQUESTS: u64 = 360_000;
pub const DESK_SCALE_REQUESTS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkloadKind {
    A,
    B,
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(WorkloadKind::A),
            "B" | "b" => Ok(WorkloadKind::B),
            _ => Err(format!("unknown workload kind {s:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("request interval must be positive")]
    ZeroInterval,
    #[error("summary of an empty log")]
    EmptyLog,
    #[error("request id {id} does not follow {previous}")]
    NonIncreasingId { previous: u64, id: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub total_requests: u64,
    pub interval_ms: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target: Option<String>,
}

impl WorkloadSpec {
    /// 360 000 requests, 5 ms apart.
    pub fn full_scale(kind: WorkloadKind) -> Self {
        WorkloadSpec {
            kind,
            total_requests: FULL_SCALE_REQUESTS,
            interval_ms: 5,
            seed: 0,
            target: None,
        }
    }

    /// 10 000 requests, 5 ms apart.
    pub fn desk_scale(kind: WorkloadKind) -> Self {
        WorkloadSpec {
            total_requests: DESK_SCALE_REQUESTS,
            ..WorkloadSpec::full_scale(kind)
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.interval_ms == 0 {
            return Err(WorkloadError::ZeroInterval);
        }
        Ok(())
    }

    pub fn interval(&self) -> Duration {
        Duration::from_millis(self.interval_ms)
    }

    pub fn duration(&self) -> Duration {
        self.interval() * self.total_requests as u32
    }
}

/// A request and its send offset from the start of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledRequest {
    pub offset: Duration,
    pub request: RpcRequest,
}

fn block_tag(number: u64) -> Value {
    json!(format!("{number:#x}"))
}

fn hash_like(rng: &mut ChaCha8Rng) -> Value {
    let bytes: [u8; 32] = rng.random();
    json!(format!("0x{}", hex::encode(bytes)))
}

fn address_like(rng: &mut ChaCha8Rng) -> Value {
    let bytes: [u8; 20] = rng.random();
    json!(format!("0x{}", hex::encode(bytes)))
}

/// Parameters for `method`, drawing block numbers from the last
/// [`HISTORY_WINDOW`] blocks below `head`.
pub fn sample_params(method: &str, head: u64, rng: &mut ChaCha8Rng) -> Vec<Value> {
    let low = head.saturating_sub(HISTORY_WINDOW - 1);
    let block = |rng: &mut ChaCha8Rng| block_tag(rng.random_range(low..=head));
    match method {
        "eth_blockNumber" | "eth_gasPrice" => vec![],
        "eth_getBlockByNumber" => vec![block(rng), json!(false)],
        "eth_getBlockByHash" => vec![hash_like(rng), json!(false)],
        "eth_getBlockTransactionCountByNumber" | "eth_getUncleCountByBlockNumber" => {
            vec![block(rng)]
        }
        "eth_getBlockTransactionCountByHash" | "eth_getUncleCountByBlockHash" => {
            vec![hash_like(rng)]
        }
        "eth_getTransactionByBlockNumberAndIndex" | "eth_getUncleByBlockNumberAndIndex" => {
            let b = block(rng);
            vec![b, block_tag(rng.random_range(0..4))]
        }
        "eth_getTransactionByBlockHashAndIndex" | "eth_getUncleByBlockHashAndIndex" => {
            vec![hash_like(rng), block_tag(rng.random_range(0..4))]
        }
        "eth_getTransactionByHash" | "eth_getTransactionReceipt" => vec![hash_like(rng)],
        "eth_getBalance" | "eth_getCode" | "eth_getTransactionCount" => {
            let a = address_like(rng);
            vec![a, block(rng)]
        }
        "eth_getStorageAt" => {
            let a = address_like(rng);
            let slot = block_tag(rng.random_range(0..16));
            vec![a, slot, block(rng)]
        }
        "eth_estimateGas" => {
            let from = address_like(rng);
            let to = address_like(rng);
            vec![json!({ "from": from, "to": to, "value": "0x1" })]
        }
        "eth_feeHistory" => {
            let count = block_tag(rng.random_range(1..=8));
            vec![count, block(rng), json!([25, 75])]
        }
        "eth_getLogs" => {
            let from = rng.random_range(low..=head);
            let to = (from + rng.random_range(0..4)).min(head);
            vec![json!({ "fromBlock": block_tag(from), "toBlock": block_tag(to) })]
        }
        _ => vec![],
    }
}

/// The full request stream for `spec`. Ids run from 1; `anchor_head` bounds
/// historical block numbers.
pub fn generate(spec: &WorkloadSpec, anchor_head: u64) -> Vec<ScheduledRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.total_requests)
        .map(|i| {
            let id = i + 1;
            let request = match spec.kind {
                WorkloadKind::B => RpcRequest::new(id, HEAD_QUERY, vec![]),
                WorkloadKind::A => {
                    let method = METHOD_POOL[rng.random_range(0..METHOD_POOL.len())];
                    let params = sample_params(method, anchor_head, &mut rng);
                    RpcRequest::new(id, method, params)
                }
            };
            ScheduledRequest {
                offset: spec.interval() * i as u32,
                request,
            }
        })
        .collect()
}

/// Error kind visible to the client: the transport failure, or the body defect.
pub fn error_kind(exchange: &RpcExchange) -> Option<TransportErrorKind> {
    match &exchange.response {
        RawResponse::Transport(kind) => Some(*kind),
        RawResponse::Body(body) => parse_rpc_response(body).err().and_then(|d| d.error_kind()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub request_id: u64,
    /// Send time in microseconds.
    pub sent_at: u64,
    pub target: String,
    pub method: String,
    pub status: Status,
    /// Latency of the answering attempt, milliseconds.
    pub t_r: f64,
    pub c_r: bool,
    pub f_r: Option<u64>,
    pub error: Option<TransportErrorKind>,
    /// End-to-end latency observed by the client, milliseconds.
    pub latency: f64,
}

impl LogRecord {
    pub fn new(
        exchange: &RpcExchange,
        verdict: &AvailabilityVerdict,
        target: &str,
        end_to_end: Duration,
    ) -> Self {
        LogRecord {
            request_id: exchange.request.numeric_id().unwrap_or(0),
            sent_at: exchange.sent_at.as_micros(),
            target: exchange
                .sub_node_id
                .clone()
                .unwrap_or_else(|| target.to_string()),
            method: exchange.request.method.clone(),
            status: verdict.status,
            t_r: verdict.t_r_ms(),
            c_r: verdict.c_r,
            f_r: verdict.f_r,
            error: error_kind(exchange),
            latency: end_to_end.as_secs_f64() * 1_000.0,
        }
    }

    pub fn received_at(&self) -> Timestamp {
        Timestamp(self.sent_at + (self.latency * 1_000.0).round() as u64)
    }
}

/// Append-only verdict log ordered by request id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictLog {
    records: Vec<LogRecord>,
}

impl VerdictLog {
    pub fn new() -> Self {
        VerdictLog::default()
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: LogRecord) -> Result<(), WorkloadError> {
        if let Some(last) = self.records.last() {
            if record.request_id <= last.request_id {
                return Err(WorkloadError::NonIncreasingId {
                    previous: last.request_id,
                    id: record.request_id,
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn record(
        &mut self,
        exchange: &RpcExchange,
        verdict: &AvailabilityVerdict,
        target: &str,
    ) -> Result<(), WorkloadError> {
        self.push(LogRecord::new(exchange, verdict, target, exchange.t_r))
    }

    /// JSON lines, one record per line.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).expect("records serialize");
            out.push(b'\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<VerdictLog, String> {
        let mut log = VerdictLog::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let record = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            log.push(record)
                .map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(log)
    }
}

/// Writes records to disk as they arrive, flushing after each.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(JsonlSink {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, record: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub available: u64,
    pub degraded: u64,
    pub unavailable: u64,
}

impl StatusCounts {
    pub fn add(&mut self, status: Status) {
        match status {
            Status::Available => self.available += 1,
            Status::Degraded => self.degraded += 1,
            Status::Unavailable => self.unavailable += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.available + self.degraded + self.unavailable
    }

    pub fn rates(&self) -> Rates {
        let n = self.total().max(1) as f64;
        Rates {
            available: self.available as f64 / n,
            degraded: self.degraded as f64 / n,
            unavailable: self.unavailable as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub available: f64,
    pub degraded: f64,
    pub unavailable: f64,
}

impl Rates {
    pub fn sum(&self) -> f64 {
        self.available + self.degraded + self.unavailable
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MethodSummary {
    pub counts: StatusCounts,
    pub errors: u64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: u64,
    pub counts: StatusCounts,
    pub rates: Rates,
    /// Occurrences of each client-visible error.
    pub errors: BTreeMap<TransportErrorKind, u64>,
    pub per_method: BTreeMap<String, MethodSummary>,
}

pub fn summarize(records: &[LogRecord]) -> Result<Summary, WorkloadError> {
    if records.is_empty() {
        return Err(WorkloadError::EmptyLog);
    }
    let mut counts = StatusCounts::default();
    let mut errors = BTreeMap::new();
    let mut per_method: BTreeMap<String, MethodSummary> = BTreeMap::new();
    for r in records {
        counts.add(r.status);
        let m = per_method.entry(r.method.clone()).or_default();
        m.counts.add(r.status);
        if let Some(kind) = r.error {
            *errors.entry(kind).or_insert(0) += 1;
            m.errors += 1;
        }
    }
    for m in per_method.values_mut() {
        m.error_rate = m.errors as f64 / m.counts.total() as f64;
    }
    Ok(Summary {
        total: counts.total(),
        counts,
        rates: counts.rates(),
        errors,
        per_method,
    })
}

/// Per-target status as a step function: a status holds from the moment its
/// response is received until the next response arrives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatusTimeline {
    steps: Vec<(Timestamp, Status)>,
}

impl StatusTimeline {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Self {
        let mut points: Vec<(Timestamp, u64, Status)> = records
            .into_iter()
            .map(|r| (r.received_at(), r.request_id, r.status))
            .collect();
        points.sort_by_key(|(t, id, _)| (*t, *id));
        let mut steps: Vec<(Timestamp, Status)> = Vec::new();
        for (t, _, status) in points {
            match steps.last_mut() {
                Some((last_t, last_s)) if *last_t == t => *last_s = status,
                Some((_, last_s)) if *last_s == status => {}
                _ => steps.push((t, status)),
            }
        }
        StatusTimeline { steps }
    }

    pub fn steps(&self) -> &[(Timestamp, Status)] {
        &self.steps
    }

    /// Status in force at `t`, or `None` before the first response.
    pub fn status_at(&self, t: Timestamp) -> Option<Status> {
        let i = self.steps.partition_point(|(at, _)| *at <= t);
        i.checked_sub(1).map(|i| self.steps[i].1)
    }
}

/// Classification settings for a live run.
#[derive(Clone)]
pub struct LiveRun {
    pub endpoint: Endpoint,
    pub label: String,
    pub classifier: ClassifierConfig,
    pub client_timeout: Duration,
    pub clock: Arc<dyn Clock>,
    /// Reference head at a given time.
    pub oracle: Arc<dyn Fn(Timestamp) -> u64 + Send + Sync>,
}

/// Interprets proxy response headers: the answering sub-node, the attempt's
/// own latency, and a transport failure reported in place of a body.
fn exchange_from_http(
    request: RpcRequest,
    outcome: crate::http::HttpOutcome,
    sent_at: Timestamp,
) -> RpcExchange {
    let t_r = outcome
        .header(ATTEMPT_US_HEADER)
        .and_then(|v| v.parse().ok())
        .map(Duration::from_micros)
        .unwrap_or(outcome.elapsed);
    let sub_node_id = outcome.header(SUB_NODE_HEADER).map(str::to_string);
    let response = match outcome.header(TRANSPORT_ERROR_HEADER).map(str::parse) {
        Some(Ok(kind)) => RawResponse::Transport(kind),
        _ => outcome.response.clone(),
    };
    RpcExchange {
        request,
        response,
        t_r,
        sent_at,
        sub_node_id,
    }
}

/// Drives a live target with wall-clock pacing. Requests are sent on
/// schedule without waiting for earlier responses; records are released in
/// request-id order. `on_record` sees every record as it is finalized.
pub async fn run_live(
    spec: &WorkloadSpec,
    run: LiveRun,
    anchor_head: u64,
    mut on_record: impl FnMut(&LogRecord),
) -> Result<VerdictLog, WorkloadError> {
    spec.validate()?;
    let schedule = generate(spec, anchor_head);
    let (tx, mut rx) = mpsc::unbounded_channel::<LogRecord>();
    let start = tokio::time::Instant::now();
    let sender = {
        let run = run.clone();
        tokio::spawn(async move {
            for item in schedule {
                tokio::time::sleep_until(start + item.offset).await;
                let run = run.clone();
                let tx = tx.clone();
                tokio::spawn(async move {
                    let sent_at = run.clock.now();
                    let begun = std::time::Instant::now();
                    let body = item.request.to_bytes();
                    let outcome = post_json(&run.endpoint, &body, run.client_timeout).await;
                    let end_to_end = begun.elapsed().min(run.client_timeout);
                    let exchange = exchange_from_http(item.request, outcome, sent_at);
                    let oracle = (run.oracle)(sent_at + end_to_end);
                    let verdict = classify(&exchange, oracle, &run.classifier);
                    let _ = tx.send(LogRecord::new(&exchange, &verdict, &run.label, end_to_end));
                });
            }
        })
    };

    let mut log = VerdictLog::new();
    let mut reorder = Reorder::starting_at(1);
    while let Some(record) = rx.recv().await {
        for record in reorder.insert(record.request_id, record) {
            on_record(&record);
            log.push(record)?;
        }
    }
    let _ = sender.await;
    Ok(log)
}

/// Holds out-of-order items until every earlier id has arrived.
#[derive(Debug, Default)]
pub struct Reorder<T> {
    next: u64,
    held: VecDeque<Option<T>>,
}

impl<T> Reorder<T> {
    pub fn starting_at(next: u64) -> Self {
        Reorder {
            next,
            held: VecDeque::new(),
        }
    }

    /// Inserts item `id` and returns every item now releasable in order.
    pub fn insert(&mut self, id: u64, item: T) -> Vec<T> {
        if id < self.next {
            return vec![];
        }
        let slot = (id - self.next) as usize;
        if self.held.len() <= slot {
            self.held.resize_with(slot + 1, || None);
        }
        self.held[slot] = Some(item);
        let mut out = vec![];
        while let Some(Some(_)) = self.held.front() {
            out.push(self.held.pop_front().flatten().expect("checked"));
            self.next += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::schema::{conforms, method_shape};
    use proptest::prelude::*;

    fn record(id: u64, status: Status) -> LogRecord {
        LogRecord {
            request_id: id,
            sent_at: id * 5_000,
            target: "t".into(),
            method: HEAD_QUERY.into(),
            status,
            t_r: 1.0,
            c_r: status != Status::Unavailable,
            f_r: Some(0),
            error: (status == Status::Unavailable).then_some(TransportErrorKind::ConnectionRefused),
            latency: 1.0,
        }
    }

    #[test]
    fn workload_b_is_identical_head_queries() {
        let spec = WorkloadSpec {
            total_requests: 3,
            ..WorkloadSpec::desk_scale(WorkloadKind::B)
        };
        let reqs = generate(&spec, 100);
        let ids: Vec<_> = reqs
            .iter()
            .map(|r| r.request.numeric_id().unwrap())
            .collect();
        assert_eq!(ids, [1, 2, 3]);
        assert!(reqs
            .iter()
            .all(|r| r.request.method == HEAD_QUERY && r.request.params.is_empty()));
        let offsets: Vec<_> = reqs.iter().map(|r| r.offset.as_millis()).collect();
        assert_eq!(offsets, [0, 5, 10]);
    }

    #[test]
    fn full_scale_spans_thirty_minutes() {
        let spec = WorkloadSpec::full_scale(WorkloadKind::A);
        assert_eq!(spec.total_requests, 360_000);
        assert_eq!(spec.duration(), Duration::from_secs(30 * 60));
    }

    #[test]
    fn workload_a_is_seed_deterministic() {
        let spec = WorkloadSpec {
            total_requests: 500,
            seed: 7,
            ..WorkloadSpec::desk_scale(WorkloadKind::A)
        };
        assert_eq!(generate(&spec, 5_000), generate(&spec, 5_000));
        let other = WorkloadSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(generate(&spec, 5_000), generate(&other, 5_000));
    }

    #[test]
    fn workload_a_covers_the_pool() {
        let spec = WorkloadSpec {
            total_requests: 2_000,
            seed: 3,
            ..WorkloadSpec::desk_scale(WorkloadKind::A)
        };
        let mut seen: Vec<&str> = vec![];
        for r in generate(&spec, 5_000) {
            let m = METHOD_POOL
                .iter()
                .find(|m| **m == r.request.method)
                .unwrap();
            if !seen.contains(m) {
                seen.push(m);
            }
        }
        assert_eq!(seen.len(), METHOD_POOL.len());
    }

    #[test]
    fn sampled_blocks_stay_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let p = sample_params("eth_getBlockByNumber", 5_000, &mut rng);
            let n = crate::classifier::parse_quantity(&p[0]).unwrap();
            assert!((4_001..=5_000).contains(&n));
        }
    }

    #[test]
    fn sampled_params_produce_conforming_results() {
        use crate::simnode::responses::result_for;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for method in METHOD_POOL {
            for _ in 0..20 {
                let params = sample_params(method, 5_000, &mut rng);
                let result = result_for(method, &params, 5_000).unwrap();
                assert!(
                    conforms(&method_shape(method).unwrap(), &result),
                    "{method}"
                );
            }
        }
    }

    #[test]
    fn zero_interval_is_rejected() {
        let spec = WorkloadSpec {
            interval_ms: 0,
            ..WorkloadSpec::desk_scale(WorkloadKind::B)
        };
        assert_eq!(spec.validate(), Err(WorkloadError::ZeroInterval));
    }

    #[test]
    fn summary_example() {
        let log = [
            record(1, Status::Available),
            record(2, Status::Available),
            record(3, Status::Degraded),
            record(4, Status::Unavailable),
        ];
        let s = summarize(&log).unwrap();
        assert_eq!(
            (s.rates.available, s.rates.degraded, s.rates.unavailable),
            (0.5, 0.25, 0.25)
        );
        assert_eq!(s.errors[&TransportErrorKind::ConnectionRefused], 1);
        assert_eq!(s.per_method[HEAD_QUERY].error_rate, 0.25);
        assert_eq!(summarize(&[]), Err(WorkloadError::EmptyLog));
    }

    #[test]
    fn all_available_summary() {
        let log: Vec<_> = (1..=10).map(|i| record(i, Status::Available)).collect();
        let s = summarize(&log).unwrap();
        assert_eq!(
            (s.rates.available, s.rates.degraded, s.rates.unavailable),
            (1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn log_rejects_out_of_order_ids() {
        let mut log = VerdictLog::new();
        log.push(record(1, Status::Available)).unwrap();
        log.push(record(3, Status::Available)).unwrap();
        assert_eq!(
            log.push(record(3, Status::Available)),
            Err(WorkloadError::NonIncreasingId { previous: 3, id: 3 })
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let mut log = VerdictLog::new();
        for i in 1..=5 {
            log.push(record(i, Status::Degraded)).unwrap();
        }
        let text = String::from_utf8(log.to_jsonl()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(VerdictLog::from_jsonl(&text).unwrap(), log);
    }

    #[test]
    fn sink_writes_one_line_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut sink = JsonlSink::create(&path).unwrap();
        sink.append(&record(1, Status::Available)).unwrap();
        sink.append(&record(2, Status::Unavailable)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(VerdictLog::from_jsonl(&text).unwrap().len(), 2);
    }

    #[test]
    fn timeline_steps_only_at_receipts() {
        let recs = [
            record(1, Status::Available),
            record(2, Status::Available),
            record(3, Status::Degraded),
            record(4, Status::Available),
        ];
        let tl = StatusTimeline::from_records(&recs);
        assert_eq!(tl.steps().len(), 3);
        for (t, _) in tl.steps() {
            assert!(recs.iter().any(|r| r.received_at() == *t));
        }
        assert_eq!(tl.status_at(Timestamp::ZERO), None);
        assert_eq!(tl.status_at(recs[2].received_at()), Some(Status::Degraded));
        let between = recs[2].received_at() + Duration::from_micros(10);
        assert_eq!(tl.status_at(between), Some(Status::Degraded));
    }

    #[test]
    fn reorder_releases_in_sequence() {
        let mut r = Reorder::starting_at(1);
        assert!(r.insert(2, 'b').is_empty());
        assert!(r.insert(3, 'c').is_empty());
        assert_eq!(r.insert(1, 'a'), ['a', 'b', 'c']);
        assert_eq!(r.insert(4, 'd'), ['d']);
    }

    proptest! {
        #[test]
        fn summary_matches_brute_force(statuses in proptest::collection::vec(0u8..3, 1..300)) {
            let log: Vec<LogRecord> = statuses
                .iter()
                .enumerate()
                .map(|(i, s)| record(i as u64 + 1, [Status::Unavailable, Status::Degraded, Status::Available][*s as usize]))
                .collect();
            let s = summarize(&log).unwrap();
            let count = |k: u8| statuses.iter().filter(|s| **s == k).count() as u64;
            prop_assert_eq!(s.counts.unavailable, count(0));
            prop_assert_eq!(s.counts.degraded, count(1));
            prop_assert_eq!(s.counts.available, count(2));
            prop_assert!((s.rates.sum() - 1.0).abs() <= 4.0 * f64::EPSILON);
            prop_assert_eq!(s.total, log.len() as u64);
        }
    }
}
