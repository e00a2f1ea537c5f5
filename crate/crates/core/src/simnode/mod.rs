//! Simulated Ethereum-like sub-node.
//!
//! [`SimNode`] is a sans-IO state machine: it serves one request at a given
//! timestamp and returns an [`Emission`], the wire-level behavior to produce.
//! The virtual-time harness turns emissions directly into client-observed
//! exchanges; [`server`] renders them onto real sockets.

mod persona;
pub mod responses;
pub mod server;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    error_response_bytes, result_response_bytes, ChainState, RawResponse, RequestId, RpcExchange,
    RpcRequest, Timestamp, TransportErrorKind,
};

pub use persona::{
    builtin_persona, builtin_personas, parse_personas, LatencyRange, PersonaError, SimNodeProfile,
};

/// Observable misbehaviors a simulated node can produce for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultMode {
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
    /// Respond from a head lagging `stale_lag_blocks` behind the local head.
    StaleHead,
    /// Stop following the chain for `sync_stall_ms`.
    SyncStall,
    /// Refuse all connections for `crash_window_ms`, then catch up.
    Crash,
}

impl FaultMode {
    pub const ALL: [FaultMode; 15] = [
        FaultMode::ConnectionRefused,
        FaultMode::TimeoutAwaitingHeaders,
        FaultMode::TimeoutReadingBody,
        FaultMode::ConnectionResetByPeer,
        FaultMode::ServerClosedIdleConnection,
        FaultMode::Eof,
        FaultMode::UnexpectedEof,
        FaultMode::MalformedHttpResponse,
        FaultMode::InvalidChunkLength,
        FaultMode::InvalidChecksum,
        FaultMode::InvalidCharacterInResponse,
        FaultMode::UnexpectedEndOfJson,
        FaultMode::StaleHead,
        FaultMode::SyncStall,
        FaultMode::Crash,
    ];
}

impl fmt::Display for FaultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown fault mode {s:?}"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FaultConfigError {
    #[error("probability for {mode} is {p}, outside [0, 1]")]
    OutOfRange { mode: FaultMode, p: f64 },
    #[error("fault probabilities sum to {0}, above 1")]
    Oversubscribed(f64),
}

/// Per-request fault schedule of one simulated node. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNodeFaultConfig {
    pub probabilities: BTreeMap<FaultMode, f64>,
    pub crash_window_ms: u64,
    pub catch_up_ms: u64,
    pub sync_stall_ms: u64,
    pub stale_lag_blocks: u64,
    pub seed: u64,
}

impl Default for SimNodeFaultConfig {
    fn default() -> Self {
        SimNodeFaultConfig {
            probabilities: BTreeMap::new(),
            crash_window_ms: 1_000,
            catch_up_ms: 2_000,
            sync_stall_ms: 3_000,
            stale_lag_blocks: 3,
            seed: 0,
        }
    }
}

/// The seeded draws for one request sequence number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestDraw {
    pub fault: Option<FaultMode>,
    pub latency_u: f64,
    pub offset_u: f64,
}

impl SimNodeFaultConfig {
    pub fn none(seed: u64) -> Self {
        SimNodeFaultConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn with(mut self, mode: FaultMode, p: f64) -> Self {
        self.probabilities.insert(mode, p);
        self
    }

    pub fn validate(&self) -> Result<(), FaultConfigError> {
        for (&mode, &p) in &self.probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(FaultConfigError::OutOfRange { mode, p });
            }
        }
        let total = self.total();
        if total > 1.0 + 1e-9 {
            return Err(FaultConfigError::Oversubscribed(total));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn probability(&self, mode: FaultMode) -> f64 {
        self.probabilities.get(&mode).copied().unwrap_or(0.0)
    }

    /// Scales every mode down proportionally if their sum exceeds one.
    pub fn normalized(mut self) -> Self {
        let total = self.total();
        if total > 1.0 {
            for p in self.probabilities.values_mut() {
                *p /= total;
            }
        }
        self
    }

    pub fn draw(&self, seq: u64) -> RequestDraw {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&seq.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut fault = None;
        for (&mode, &p) in &self.probabilities {
            acc += p;
            if u < acc {
                fault = Some(mode);
                break;
            }
        }
        RequestDraw {
            fault,
            latency_u: rng.random(),
            offset_u: rng.random(),
        }
    }

    pub fn fault_for(&self, seq: u64) -> Option<FaultMode> {
        self.draw(seq).fault
    }

    /// Materializes the first `n` entries of the schedule (sequence numbers 1..=n).
    pub fn schedule(&self, n: u64) -> Vec<Option<FaultMode>> {
        (1..=n).map(|seq| self.fault_for(seq)).collect()
    }
}

/// What the node puts on the wire for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Emission {
    /// A well-formed HTTP response; the body itself may be defective.
    Respond(Vec<u8>),
    Refuse,
    StallBeforeHeaders,
    StallMidBody {
        body: Vec<u8>,
        sent: usize,
    },
    Reset,
    CloseIdle,
    CloseWithoutResponse,
    TruncatedBody {
        body: Vec<u8>,
        sent: usize,
    },
    MalformedPreamble,
    BadChunkLength {
        body: Vec<u8>,
    },
    BadGzipChecksum {
        body: Vec<u8>,
    },
}

impl Emission {
    /// What a conforming HTTP client sees, ignoring its own timeout.
    pub fn observed(&self) -> RawResponse {
        use TransportErrorKind as K;
        match self {
            Emission::Respond(body) => RawResponse::Body(body.clone()),
            Emission::Refuse => RawResponse::Transport(K::ConnectionRefused),
            Emission::StallBeforeHeaders => RawResponse::Transport(K::TimeoutAwaitingHeaders),
            Emission::StallMidBody { .. } => RawResponse::Transport(K::TimeoutReadingBody),
            Emission::Reset => RawResponse::Transport(K::ConnectionResetByPeer),
            Emission::CloseIdle => RawResponse::Transport(K::ServerClosedIdleConnection),
            Emission::CloseWithoutResponse => RawResponse::Transport(K::Eof),
            Emission::TruncatedBody { .. } => RawResponse::Transport(K::UnexpectedEof),
            Emission::MalformedPreamble => RawResponse::Transport(K::MalformedHttpResponse),
            Emission::BadChunkLength { .. } => RawResponse::Transport(K::InvalidChunkLength),
            Emission::BadGzipChecksum { .. } => RawResponse::Transport(K::InvalidChecksum),
        }
    }

    pub fn stalls(&self) -> bool {
        matches!(
            self,
            Emission::StallBeforeHeaders | Emission::StallMidBody { .. }
        )
    }
}

/// One served request: the emission and how long the node took to produce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Served {
    pub emission: Emission,
    pub latency: Duration,
}

impl Served {
    /// The exchange a client with the given per-attempt timeout records.
    pub fn into_exchange(
        self,
        request: RpcRequest,
        sent_at: Timestamp,
        timeout: Duration,
        sub_node_id: Option<String>,
    ) -> RpcExchange {
        let (response, t_r) = if self.emission.stalls() {
            (self.emission.observed(), timeout)
        } else if self.latency > timeout {
            (
                RawResponse::Transport(TransportErrorKind::TimeoutAwaitingHeaders),
                timeout,
            )
        } else {
            (self.emission.observed(), self.latency)
        };
        RpcExchange {
            request,
            response,
            t_r,
            sent_at,
            sub_node_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Normal,
    Refused,
    Faulted(FaultMode),
}

/// Per-node record of every received request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub request_id: RequestId,
    pub at: Timestamp,
    pub scheduled: Option<FaultMode>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Freeze {
    head: u64,
    until: Timestamp,
}

const REFUSAL_LATENCY: Duration = Duration::from_micros(200);

#[derive(Debug, Clone)]
pub struct SimNode {
    id: String,
    profile: SimNodeProfile,
    faults: SimNodeFaultConfig,
    chain: ChainState,
    seq: u64,
    crashed_until: Option<Timestamp>,
    freeze: Option<Freeze>,
    last_head: u64,
    journal: Vec<JournalEntry>,
}

impl SimNode {
    pub fn new(
        id: impl Into<String>,
        profile: SimNodeProfile,
        faults: SimNodeFaultConfig,
        chain: ChainState,
    ) -> Result<Self, FaultConfigError> {
        faults.validate()?;
        Ok(SimNode {
            id: id.into(),
            profile,
            faults,
            last_head: chain.head_number,
            chain,
            seq: 0,
            crashed_until: None,
            freeze: None,
            journal: Vec::new(),
        })
    }

    /// A node whose local head starts at `local_head`, catching up to the
    /// chain after its configured delay if it is behind.
    pub fn restored(
        id: impl Into<String>,
        profile: SimNodeProfile,
        faults: SimNodeFaultConfig,
        chain: ChainState,
        local_head: u64,
    ) -> Result<Self, FaultConfigError> {
        let mut node = SimNode::new(id, profile, faults, chain)?;
        if local_head < chain.head_number {
            node.freeze = Some(Freeze {
                head: local_head,
                until: chain.genesis_at + Duration::from_millis(node.faults.catch_up_ms),
            });
            node.last_head = local_head;
        }
        Ok(node)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn profile(&self) -> &SimNodeProfile {
        &self.profile
    }

    pub fn faults(&self) -> &SimNodeFaultConfig {
        &self.faults
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn set_faults(&mut self, faults: SimNodeFaultConfig) -> Result<(), FaultConfigError> {
        faults.validate()?;
        self.faults = faults;
        Ok(())
    }

    pub fn is_crashed(&self, now: Timestamp) -> bool {
        self.crashed_until.is_some_and(|until| now < until)
    }

    /// Time left until the current crash ends, if crashed.
    pub fn crash_remaining(&self, now: Timestamp) -> Option<Duration> {
        self.crashed_until
            .filter(|until| now < *until)
            .map(|until| until.since(now))
    }

    fn expire(&mut self, now: Timestamp) {
        if self.crashed_until.is_some_and(|until| now >= until) {
            self.crashed_until = None;
        }
        if self.freeze.is_some_and(|f| now >= f.until) {
            self.freeze = None;
        }
    }

    fn local_head_at(&self, now: Timestamp) -> u64 {
        match self.freeze {
            Some(f) if now < f.until => f.head,
            _ => self.chain.head_at(now),
        }
    }

    /// Brings the local head up to `now` and returns it.
    pub fn advance_chain(&mut self, now: Timestamp) -> u64 {
        self.expire(now);
        let head = self.local_head_at(now).max(self.last_head);
        self.last_head = head;
        head
    }

    /// Blocks between the local head and the global head at `now`.
    pub fn lag(&mut self, now: Timestamp) -> u64 {
        let local = self.advance_chain(now);
        self.chain.head_at(now).saturating_sub(local)
    }

    fn freeze_for(&mut self, now: Timestamp, duration: Duration) {
        let until = now + duration;
        match &mut self.freeze {
            Some(f) if now < f.until => f.until = f.until.max(until),
            _ => {
                self.freeze = Some(Freeze {
                    head: self.local_head_at(now),
                    until,
                })
            }
        }
    }

    /// Crashes the node: connections are refused and sync stops until
    /// `duration` has passed, then the node catches up after `catch_up_ms`.
    pub fn crash(&mut self, now: Timestamp, duration: Duration) {
        self.expire(now);
        let until = now + duration;
        self.crashed_until = Some(self.crashed_until.map_or(until, |u| u.max(until)));
        let catch_up = Duration::from_millis(self.faults.catch_up_ms);
        self.freeze_for(now, until.since(now) + catch_up);
    }

    /// Ends a crash early. The head re-syncs after the catch-up delay.
    pub fn restore(&mut self, now: Timestamp) {
        self.expire(now);
        self.crashed_until = None;
        let catch_up = Duration::from_millis(self.faults.catch_up_ms);
        match &mut self.freeze {
            Some(f) if now < f.until => {
                f.until = now + catch_up;
                if catch_up.is_zero() {
                    self.freeze = None;
                }
            }
            _ => {}
        }
    }

    fn body_for(&self, req: &RpcRequest, head: u64) -> Vec<u8> {
        match responses::result_for(&req.method, &req.params, head) {
            Some(result) => result_response_bytes(&req.id, &result),
            None => error_response_bytes(
                &req.id,
                -32601,
                &format!("the method {} does not exist/is not available", req.method),
            ),
        }
    }

    pub fn serve(&mut self, req: &RpcRequest, now: Timestamp) -> Served {
        self.seq += 1;
        let draw = self.faults.draw(self.seq);
        let head = self.advance_chain(now);
        let latency = self.profile.latency_ms.sample(draw.latency_u);
        let offset =
            |len: usize| ((draw.offset_u * len as f64) as usize).min(len.saturating_sub(1));

        let (outcome, emission) = if self.is_crashed(now) {
            (Outcome::Refused, Emission::Refuse)
        } else {
            match draw.fault {
                None => (Outcome::Normal, Emission::Respond(self.body_for(req, head))),
                Some(mode) => (
                    Outcome::Faulted(mode),
                    self.faulted(mode, req, now, head, offset),
                ),
            }
        };
        self.journal.push(JournalEntry {
            seq: self.seq,
            request_id: req.id.clone(),
            at: now,
            scheduled: draw.fault,
            outcome,
        });
        let latency = match emission {
            Emission::Refuse => REFUSAL_LATENCY,
            _ => latency,
        };
        Served { emission, latency }
    }

    fn faulted(
        &mut self,
        mode: FaultMode,
        req: &RpcRequest,
        now: Timestamp,
        head: u64,
        offset: impl Fn(usize) -> usize,
    ) -> Emission {
        match mode {
            FaultMode::ConnectionRefused => Emission::Refuse,
            FaultMode::Crash => {
                self.crash(now, Duration::from_millis(self.faults.crash_window_ms));
                Emission::Refuse
            }
            FaultMode::SyncStall => {
                self.freeze_for(now, Duration::from_millis(self.faults.sync_stall_ms));
                Emission::Respond(self.body_for(req, head))
            }
            FaultMode::StaleHead => {
                let stale = head.saturating_sub(self.faults.stale_lag_blocks);
                Emission::Respond(self.body_for(req, stale))
            }
            FaultMode::InvalidCharacterInResponse => {
                let mut body = self.body_for(req, head);
                let at = offset(body.len());
                // 0x01 is invalid both inside and outside JSON strings
                body[at] = 0x01;
                Emission::Respond(body)
            }
            FaultMode::UnexpectedEndOfJson => {
                let mut body = self.body_for(req, head);
                body.truncate(offset(body.len()));
                Emission::Respond(body)
            }
            FaultMode::TimeoutAwaitingHeaders => Emission::StallBeforeHeaders,
            FaultMode::TimeoutReadingBody => {
                let body = self.body_for(req, head);
                let sent = body.len() / 2;
                Emission::StallMidBody { body, sent }
            }
            FaultMode::ConnectionResetByPeer => Emission::Reset,
            FaultMode::ServerClosedIdleConnection => Emission::CloseIdle,
            FaultMode::Eof => Emission::CloseWithoutResponse,
            FaultMode::UnexpectedEof => {
                let body = self.body_for(req, head);
                let sent = offset(body.len()).max(1).min(body.len() - 1);
                Emission::TruncatedBody { body, sent }
            }
            FaultMode::MalformedHttpResponse => Emission::MalformedPreamble,
            FaultMode::InvalidChunkLength => Emission::BadChunkLength {
                body: self.body_for(req, head),
            },
            FaultMode::InvalidChecksum => Emission::BadGzipChecksum {
                body: self.body_for(req, head),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{check_compliance, classify, Status, HEAD_QUERY};
    use crate::model::ClassifierConfig;
    use proptest::prelude::*;

    fn profile() -> SimNodeProfile {
        SimNodeProfile::uniform("test", 1.0, 5.0)
    }

    fn chain12() -> ChainState {
        ChainState::new(0xa55e27, Duration::from_secs(12), Timestamp::ZERO).unwrap()
    }

    fn head_req(id: u64) -> RpcRequest {
        RpcRequest::new(id, HEAD_QUERY, vec![])
    }

    fn node(faults: SimNodeFaultConfig) -> SimNode {
        SimNode::new("n", profile(), faults, chain12()).unwrap()
    }

    fn classify_at(node: &mut SimNode, id: u64, now: Timestamp, f: u64) -> Status {
        let req = head_req(id);
        let served = node.serve(&req, now);
        let ex = served.into_exchange(req, now, Duration::from_millis(100), None);
        let oracle = node.chain().head_at(ex.received_at());
        classify(&ex, oracle, &ClassifierConfig::new(100, f).unwrap()).status
    }

    #[test]
    fn head_query_reports_local_head() {
        let mut n = node(SimNodeFaultConfig::none(1));
        let served = n.serve(&head_req(1), Timestamp::ZERO);
        let Emission::Respond(body) = served.emission else {
            panic!()
        };
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(v["result"], "0xa55e27");
    }

    #[test]
    fn unknown_method_is_a_compliant_error() {
        let mut n = node(SimNodeFaultConfig::none(1));
        let req = RpcRequest::new(1, "eth_sendRawTransaction", vec![]);
        let Emission::Respond(body) = n.serve(&req, Timestamp::ZERO).emission else {
            panic!()
        };
        assert!(body.windows(6).any(|w| w == b"-32601"));
        assert!(check_compliance(&body, &req.method));
    }

    #[test]
    fn scheduled_refusal_denies() {
        let mut n = node(SimNodeFaultConfig::none(1).with(FaultMode::ConnectionRefused, 1.0));
        let served = n.serve(&head_req(1), Timestamp::ZERO);
        assert_eq!(served.emission, Emission::Refuse);
        assert_eq!(
            served.emission.observed(),
            RawResponse::Transport(TransportErrorKind::ConnectionRefused)
        );
    }

    #[test]
    fn invalid_character_is_degraded_within_bound() {
        let mut n =
            node(SimNodeFaultConfig::none(9).with(FaultMode::InvalidCharacterInResponse, 1.0));
        for id in 1..50 {
            assert_eq!(
                classify_at(&mut n, id, Timestamp::ZERO, 2),
                Status::Degraded
            );
        }
    }

    #[test]
    fn truncated_json_is_degraded() {
        let mut n = node(SimNodeFaultConfig::none(3).with(FaultMode::UnexpectedEndOfJson, 1.0));
        for id in 1..50 {
            assert_eq!(
                classify_at(&mut n, id, Timestamp::ZERO, 2),
                Status::Degraded
            );
        }
    }

    #[test]
    fn healthy_node_follows_chain_for_thirty_minutes() {
        let mut n = node(SimNodeFaultConfig::none(1));
        let start = n.advance_chain(Timestamp::ZERO);
        let end = n.advance_chain(Timestamp::from_secs(30 * 60));
        assert_eq!(end - start, 150);
    }

    #[test]
    fn crash_freezes_sync() {
        let mut n = node(SimNodeFaultConfig::none(1));
        n.crash(Timestamp::ZERO, Duration::from_secs(36));
        assert_eq!(
            n.lag(Timestamp::from_secs(36) - Duration::from_micros(1)),
            2
        );
        // 36 s at 12 s per block: three blocks produced while crashed
        assert_eq!(
            n.chain().head_at(Timestamp::from_secs(36)) - n.advance_chain(Timestamp::ZERO),
            3
        );
        let mut lagging = node(SimNodeFaultConfig {
            catch_up_ms: 10_000,
            ..SimNodeFaultConfig::none(1)
        });
        lagging.crash(Timestamp::ZERO, Duration::from_secs(36));
        assert_eq!(lagging.lag(Timestamp::from_secs(36)), 3);
        assert_eq!(
            classify_at(&mut lagging, 1, Timestamp::from_secs(36), 2),
            Status::Degraded
        );
    }

    #[test]
    fn crashed_node_refuses() {
        let mut n = node(SimNodeFaultConfig::none(1));
        n.crash(Timestamp::ZERO, Duration::from_secs(5));
        assert_eq!(
            n.serve(&head_req(1), Timestamp::from_secs(1)).emission,
            Emission::Refuse
        );
        n.restore(Timestamp::from_secs(2));
        assert_eq!(
            classify_at(&mut n, 2, Timestamp::from_secs(2), 0),
            Status::Available
        );
    }

    #[test]
    fn restore_catch_up_timeline() {
        let mut n = node(SimNodeFaultConfig {
            catch_up_ms: 24_000,
            ..SimNodeFaultConfig::none(1)
        });
        n.crash(Timestamp::ZERO, Duration::from_secs(60));
        n.restore(Timestamp::from_secs(12));
        // frozen at the crash-time head until 12 s + 24 s
        let statuses: Vec<Status> = [12, 24, 30, 36]
            .iter()
            .enumerate()
            .map(|(i, s)| classify_at(&mut n, i as u64 + 1, Timestamp::from_secs(*s), 1))
            .collect();
        assert_eq!(
            statuses,
            [
                Status::Available,
                Status::Degraded,
                Status::Degraded,
                Status::Available
            ]
        );
    }

    #[test]
    fn empty_config_never_faults() {
        assert!(SimNodeFaultConfig::none(5)
            .schedule(1000)
            .iter()
            .all(Option::is_none));
    }

    #[test]
    fn schedule_is_seed_deterministic() {
        let cfg = SimNodeFaultConfig::none(42)
            .with(FaultMode::Crash, 0.1)
            .with(FaultMode::Eof, 0.2);
        let a = serde_json::to_vec(&cfg.schedule(2_000)).unwrap();
        let b = serde_json::to_vec(&cfg.clone().schedule(2_000)).unwrap();
        assert_eq!(a, b);
        let other = SimNodeFaultConfig { seed: 43, ..cfg }.schedule(2_000);
        assert_ne!(a, serde_json::to_vec(&other).unwrap());
    }

    #[test]
    fn validation() {
        assert!(matches!(
            SimNodeFaultConfig::none(0)
                .with(FaultMode::Eof, 1.5)
                .validate(),
            Err(FaultConfigError::OutOfRange { .. })
        ));
        let over = SimNodeFaultConfig::none(0)
            .with(FaultMode::Eof, 0.7)
            .with(FaultMode::Crash, 0.7);
        assert!(matches!(
            over.validate(),
            Err(FaultConfigError::Oversubscribed(_))
        ));
        assert!(over.normalized().validate().is_ok());
    }

    #[test]
    fn zero_fault_node_is_always_available() {
        let mut n = node(SimNodeFaultConfig::none(11));
        for i in 0..500u64 {
            let now = Timestamp::from_millis(i * 37);
            assert_eq!(classify_at(&mut n, i + 1, now, 0), Status::Available);
        }
    }

    proptest! {
        #[test]
        fn local_head_bounded_and_monotone(
            seed in any::<u64>(),
            crash_p in 0.0f64..0.05,
            stall_p in 0.0f64..0.2,
            gaps in proptest::collection::vec(0u64..4_000, 1..200),
        ) {
            let cfg = SimNodeFaultConfig {
                crash_window_ms: 2_000,
                catch_up_ms: 3_000,
                sync_stall_ms: 5_000,
                ..SimNodeFaultConfig::none(seed)
                    .with(FaultMode::Crash, crash_p)
                    .with(FaultMode::SyncStall, stall_p)
            };
            let chain = ChainState::new(100, Duration::from_secs(1), Timestamp::ZERO).unwrap();
            let mut n = SimNode::new("p", profile(), cfg, chain).unwrap();
            let mut now = Timestamp::ZERO;
            let mut prev = 0;
            for (i, gap) in gaps.into_iter().enumerate() {
                now = now + Duration::from_millis(gap);
                n.serve(&head_req(i as u64 + 1), now);
                let head = n.advance_chain(now);
                prop_assert!(head <= chain.head_at(now));
                prop_assert!(head >= prev);
                prev = head;
            }
        }
    }
}
