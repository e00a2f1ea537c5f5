//! Availability classification of a single response.
//!
//! A response is AVAILABLE when it is timely (`t_r <= T`), compliant with the
//! JSON-RPC schema and fresh (`f_r <= F`); DEGRADED when timely but not
//! compliant or not fresh; UNAVAILABLE when late. Denied requests (any
//! transport failure that leaves no body) are UNAVAILABLE regardless of how
//! quickly the failure surfaced.

pub mod schema;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{parse_rpc_response, ClassifierConfig, RpcExchange, RpcOutcome, RpcRequest};

pub use schema::{method_shape, parse_quantity, HEAD_QUERY, METHOD_POOL};

/// Ordered worst to best, so `max` picks the better status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Unavailable,
    Degraded,
    Available,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Available => "AVAILABLE",
            Status::Degraded => "DEGRADED",
            Status::Unavailable => "UNAVAILABLE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityVerdict {
    pub status: Status,
    #[serde(with = "duration_us")]
    pub t_r: Duration,
    pub c_r: bool,
    /// Block distance to the oracle; `None` when undefined.
    pub f_r: Option<u64>,
}

mod duration_us {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

impl AvailabilityVerdict {
    pub fn t_r_ms(&self) -> f64 {
        self.t_r.as_micros() as f64 / 1_000.0
    }
}

/// One classified response in its serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub request_id: u64,
    pub sub_node_id: Option<String>,
    pub status: Status,
    pub t_r: f64,
    pub c_r: bool,
    pub f_r: Option<u64>,
}

impl VerdictRecord {
    pub fn new(request_id: u64, sub_node_id: Option<String>, v: &AvailabilityVerdict) -> Self {
        VerdictRecord {
            request_id,
            sub_node_id,
            status: v.status,
            t_r: v.t_r_ms(),
            c_r: v.c_r,
            f_r: v.f_r,
        }
    }
}

/// Staleness of a node relative to the oracle; a node ahead of the oracle is fresh.
pub fn freshness(node_head: u64, oracle_head: u64) -> u64 {
    oracle_head.saturating_sub(node_head)
}

/// Whether responses to `request` report the responder's chain head.
pub fn carries_head(request: &RpcRequest) -> bool {
    match request.method.as_str() {
        "eth_blockNumber" => true,
        "eth_getBlockByNumber" => request.params.first().and_then(Value::as_str) == Some("latest"),
        _ => false,
    }
}

/// Compliance and (for head queries) the reported head, from one parse of the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BodyAssessment {
    pub compliant: bool,
    pub head: Option<u64>,
}

pub fn assess_body(raw: &[u8], request: &RpcRequest) -> BodyAssessment {
    let Ok(resp) = parse_rpc_response(raw) else {
        return BodyAssessment {
            compliant: false,
            head: None,
        };
    };
    let result = match &resp.outcome {
        RpcOutcome::Error(_) => {
            return BodyAssessment {
                compliant: true,
                head: None,
            }
        }
        RpcOutcome::Result(v) => v,
    };
    let compliant = match method_shape(&request.method) {
        Some(shape) => schema::conforms(&shape, result),
        None => true,
    };
    let head = if compliant && carries_head(request) {
        match request.method.as_str() {
            "eth_blockNumber" => parse_quantity(result),
            _ => result.get("number").and_then(parse_quantity),
        }
    } else {
        None
    };
    BodyAssessment { compliant, head }
}

/// True iff `raw` is a JSON-RPC 2.0 response whose result matches the
/// registered shape of `method`. Unknown methods only need a valid envelope.
pub fn check_compliance(raw: &[u8], method: &str) -> bool {
    assess_body(raw, &RpcRequest::new(0, method, Vec::new())).compliant
}

/// The three-way decision on already-measured properties.
pub fn decide(t_r: Duration, c_r: bool, f_r: Option<u64>, config: &ClassifierConfig) -> Status {
    if t_r > config.timeliness() {
        Status::Unavailable
    } else if c_r && f_r.is_some_and(|f| f <= config.freshness_blocks) {
        Status::Available
    } else {
        Status::Degraded
    }
}

pub fn classify(
    exchange: &RpcExchange,
    oracle_head: u64,
    config: &ClassifierConfig,
) -> AvailabilityVerdict {
    let t_r = exchange.t_r;
    let Some(body) = exchange.response.body() else {
        return AvailabilityVerdict {
            status: Status::Unavailable,
            t_r,
            c_r: false,
            f_r: None,
        };
    };
    let assessment = assess_body(body, &exchange.request);
    let f_r = match (assessment.compliant, carries_head(&exchange.request)) {
        (false, _) => None,
        (true, true) => assessment.head.map(|h| freshness(h, oracle_head)),
        (true, false) => Some(0),
    };
    AvailabilityVerdict {
        status: decide(t_r, assessment.compliant, f_r, config),
        t_r,
        c_r: assessment.compliant,
        f_r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::BLOCK_RESPONSE;
    use crate::model::{
        result_response_bytes, RawResponse, RequestId, Timestamp, TransportErrorKind,
    };
    use proptest::prelude::*;
    use serde_json::json;

    fn head_exchange(node_head: u64, t_r_ms: u64) -> RpcExchange {
        let request = RpcRequest::new(1, HEAD_QUERY, vec![]);
        let body = result_response_bytes(&RequestId::Num(1), &json!(format!("{node_head:#x}")));
        RpcExchange {
            request,
            response: RawResponse::Body(body),
            t_r: Duration::from_millis(t_r_ms),
            sent_at: Timestamp::ZERO,
            sub_node_id: None,
        }
    }

    fn cfg(t: u64, f: u64) -> ClassifierConfig {
        ClassifierConfig::new(t, f).unwrap()
    }

    #[test]
    fn late_response_is_unavailable() {
        let v = classify(&head_exchange(100, 150), 100, &cfg(100, 2));
        assert_eq!(v.status, Status::Unavailable);
        // properties are still reported for diagnostics
        assert!(v.c_r);
        assert_eq!(v.f_r, Some(0));
    }

    #[test]
    fn instant_fresh_response_is_available() {
        let v = classify(&head_exchange(100, 0), 100, &cfg(1, 0));
        assert_eq!(v.status, Status::Available);
    }

    #[test]
    fn stale_response_is_degraded() {
        let v = classify(&head_exchange(100, 50), 103, &cfg(100, 2));
        assert_eq!(v.status, Status::Degraded);
        assert_eq!(v.f_r, Some(3));
    }

    #[test]
    fn denial_is_unavailable_even_when_fast() {
        let mut ex = head_exchange(100, 0);
        ex.response = RawResponse::Transport(TransportErrorKind::ConnectionRefused);
        let v = classify(&ex, 100, &cfg(100, 2));
        assert_eq!(v.status, Status::Unavailable);
        assert!(!v.c_r);
        assert_eq!(v.f_r, None);
    }

    #[test]
    fn non_head_methods_are_always_fresh() {
        let request = RpcRequest::new(1, "eth_gasPrice", vec![]);
        let ex = RpcExchange {
            response: RawResponse::Body(result_response_bytes(&request.id, &json!("0x3b9aca00"))),
            request,
            t_r: Duration::from_millis(10),
            sent_at: Timestamp::ZERO,
            sub_node_id: None,
        };
        let v = classify(&ex, 1_000_000, &cfg(100, 0));
        assert_eq!((v.status, v.f_r), (Status::Available, Some(0)));
    }

    #[test]
    fn head_query_error_object_is_degraded() {
        let request = RpcRequest::new(1, HEAD_QUERY, vec![]);
        let body = crate::model::error_response_bytes(&request.id, -32000, "syncing");
        let ex = RpcExchange {
            request,
            response: RawResponse::Body(body),
            t_r: Duration::from_millis(1),
            sent_at: Timestamp::ZERO,
            sub_node_id: None,
        };
        let v = classify(&ex, 10, &cfg(100, 2));
        assert_eq!((v.status, v.c_r, v.f_r), (Status::Degraded, true, None));
    }

    #[test]
    fn compliance_of_block_response() {
        assert!(check_compliance(
            BLOCK_RESPONSE.as_bytes(),
            "eth_getBlockByNumber"
        ));
        assert!(!check_compliance(b"{}", "eth_getBlockByNumber"));

        let mut value: Value = serde_json::from_str(BLOCK_RESPONSE).unwrap();
        value["result"].as_object_mut().unwrap().remove("number");
        let body = serde_json::to_vec(&value).unwrap();
        assert!(!check_compliance(&body, "eth_getBlockByNumber"));
        // unknown methods only need the envelope
        assert!(check_compliance(&body, "net_version"));

        let trimmed = BLOCK_RESPONSE.trim_end();
        assert!(!check_compliance(
            &trimmed.as_bytes()[..trimmed.len() - 1],
            "eth_getBlockByNumber"
        ));
    }

    #[test]
    fn latest_block_carries_head() {
        let req = RpcRequest::new(
            1,
            "eth_getBlockByNumber",
            vec![json!("latest"), json!(false)],
        );
        assert!(carries_head(&req));
        let a = assess_body(BLOCK_RESPONSE.as_bytes(), &req);
        assert_eq!(a.head, Some(0xa55e27));
        let pinned = RpcRequest::new(1, "eth_getBlockByNumber", vec![json!("0x1"), json!(false)]);
        assert!(!carries_head(&pinned));
    }

    #[test]
    fn freshness_examples() {
        assert_eq!(freshness(100, 100), 0);
        assert_eq!(freshness(97, 100), 3);
        assert_eq!(freshness(101, 100), 0);
    }

    proptest! {
        #[test]
        fn freshness_never_negative_and_matches_lag(node in any::<u64>(), oracle in any::<u64>()) {
            let f = freshness(node, oracle);
            if oracle >= node { prop_assert_eq!(f, oracle - node) } else { prop_assert_eq!(f, 0) }
        }

        #[test]
        fn exactly_one_branch_fires(
            t_r in 0u64..400_000, c_r in any::<bool>(), f_r in proptest::option::of(0u64..10),
            t in 1u64..300, f in 0u64..10,
        ) {
            let c = cfg(t, f);
            let t_r = Duration::from_micros(t_r);
            let timely = t_r <= c.timeliness();
            let fresh = f_r.is_some_and(|x| x <= f);
            let branches = [
                timely && c_r && fresh,
                timely && (!c_r || !fresh),
                !timely,
            ];
            prop_assert_eq!(branches.iter().filter(|b| **b).count(), 1);
            let expected = [Status::Available, Status::Degraded, Status::Unavailable]
                [branches.iter().position(|b| *b).unwrap()];
            prop_assert_eq!(decide(t_r, c_r, f_r, &c), expected);
        }

        #[test]
        fn available_is_monotone_in_bounds(
            t_r in 0u64..300, node in 0u64..50, oracle in 0u64..50,
            t in 1u64..300, f in 0u64..10, dt in 0u64..300, df in 0u64..10,
        ) {
            let ex = head_exchange(node, t_r);
            if classify(&ex, oracle, &cfg(t, f)).status == Status::Available {
                prop_assert_eq!(classify(&ex, oracle, &cfg(t + dt, f)).status, Status::Available);
                prop_assert_eq!(classify(&ex, oracle, &cfg(t, f + df)).status, Status::Available);
            }
        }

        #[test]
        fn verdict_invariants_hold(
            t_r in 0u64..300, node in 0u64..50, oracle in 0u64..50,
            t in 1u64..300, f in 0u64..10, denied in any::<bool>(), corrupt in any::<bool>(),
        ) {
            let mut ex = head_exchange(node, t_r);
            if corrupt {
                if let RawResponse::Body(b) = &mut ex.response { b.truncate(b.len() / 2) }
            }
            if denied {
                ex.response = RawResponse::Transport(TransportErrorKind::ConnectionResetByPeer);
            }
            let c = cfg(t, f);
            let v = classify(&ex, oracle, &c);
            let late = v.t_r > c.timeliness();
            prop_assert_eq!(v.status == Status::Unavailable, late || denied);
            if v.status == Status::Available {
                prop_assert!(v.c_r && v.f_r.unwrap() <= f && !late);
            }
            if v.status == Status::Degraded {
                prop_assert!(!late && (!v.c_r || v.f_r.map_or(true, |x| x > f)));
            }
        }
    }
}
