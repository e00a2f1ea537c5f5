//! Proxy in front of live simulated nodes.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use nvgate::classifier::{Status, HEAD_QUERY};
use nvgate::clock::{Clock, WallClock};
use nvgate::http::{post_json, Endpoint};
use nvgate::model::{ChainState, ClassifierConfig, RpcRequest};
use nvgate::proxy::server::{
    ATTEMPTS_HEADER, ATTEMPT_US_HEADER, SUB_NODE_HEADER, TRANSPORT_ERROR_HEADER,
};
use nvgate::proxy::{serve_proxy, ProxyConfig, ProxyHandle, SubNodeConfig};
use nvgate::simnode::server::{spawn_simnode, SimNodeHandle};
use nvgate::simnode::{FaultMode, SimNode, SimNodeFaultConfig, SimNodeProfile};
use nvgate::workload::{run_live, LiveRun, WorkloadKind, WorkloadSpec};

fn local() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

fn chain() -> ChainState {
    ChainState::new(1_000, Duration::from_secs(12), WallClock.now()).unwrap()
}

async fn node(id: &str, faults: SimNodeFaultConfig, chain: ChainState) -> SimNodeHandle {
    let clock: Arc<dyn Clock> = Arc::new(WallClock);
    let node = SimNode::new(id, SimNodeProfile::uniform(id, 1.0, 2.0), faults, chain).unwrap();
    spawn_simnode(node, clock, local(), local()).await.unwrap()
}

async fn proxy(nodes: &[(&str, &SimNodeHandle)], oracle: &SimNodeHandle) -> ProxyHandle {
    serve_proxy(ProxyConfig {
        listen: local(),
        sub_nodes: nodes
            .iter()
            .map(|(id, h)| SubNodeConfig {
                id: id.to_string(),
                url: h.rpc_url(),
            })
            .collect(),
        classifier: ClassifierConfig::default(),
        window: None,
        oracle_url: Some(oracle.rpc_url()),
        oracle_poll_ms: 50,
    })
    .await
    .unwrap()
}

async fn ask(proxy: &ProxyHandle, id: u64) -> nvgate::http::HttpOutcome {
    let endpoint = Endpoint::parse(&proxy.url()).unwrap();
    let body = RpcRequest::new(id, HEAD_QUERY, vec![]).to_bytes();
    post_json(&endpoint, &body, Duration::from_secs(2)).await
}

#[tokio::test]
async fn failing_sub_nodes_are_skipped_and_demoted() {
    let c = chain();
    let reset = node(
        "reset",
        SimNodeFaultConfig::none(1).with(FaultMode::ConnectionResetByPeer, 1.0),
        c,
    )
    .await;
    let stale = node(
        "stale",
        SimNodeFaultConfig::none(2).with(FaultMode::StaleHead, 1.0),
        c,
    )
    .await;
    let good = node("good", SimNodeFaultConfig::none(3), c).await;
    let oracle = node("oracle", SimNodeFaultConfig::none(4), c).await;
    let p = proxy(
        &[("reset", &reset), ("stale", &stale), ("good", &good)],
        &oracle,
    )
    .await;
    assert_eq!(p.oracle_head(), 1_000);

    let first = ask(&p, 1).await;
    assert_eq!(first.status, Some(200));
    assert_eq!(first.header(SUB_NODE_HEADER), Some("good"));
    assert_eq!(first.header(ATTEMPTS_HEADER), Some("3"));
    assert!(
        first
            .header(ATTEMPT_US_HEADER)
            .unwrap()
            .parse::<u64>()
            .unwrap()
            > 0
    );

    let second = ask(&p, 2).await;
    assert_eq!(second.header(SUB_NODE_HEADER), Some("good"));
    assert_eq!(second.header(ATTEMPTS_HEADER), Some("1"));

    let admin = p.admin();
    assert_eq!(admin.ranking[0], "good");
    assert_eq!(reset.journal().len(), 1);
    assert_eq!(stale.journal().len(), 1);
    assert_eq!(good.journal().len(), 2);

    p.shutdown().await;
    for h in [reset, stale, good, oracle] {
        h.shutdown().await;
    }
}

#[tokio::test]
async fn all_transport_failures_give_502() {
    let c = chain();
    let a = node(
        "a",
        SimNodeFaultConfig::none(1).with(FaultMode::ConnectionResetByPeer, 1.0),
        c,
    )
    .await;
    let b = node(
        "b",
        SimNodeFaultConfig::none(2).with(FaultMode::Eof, 1.0),
        c,
    )
    .await;
    let oracle = node("oracle", SimNodeFaultConfig::none(3), c).await;
    let p = proxy(&[("a", &a), ("b", &b)], &oracle).await;
    let out = ask(&p, 9).await;
    assert_eq!(out.status, Some(502));
    assert_eq!(
        out.header(TRANSPORT_ERROR_HEADER),
        Some("ConnectionResetByPeer")
    );
    let body: serde_json::Value = serde_json::from_slice(out.response.body().unwrap()).unwrap();
    assert_eq!(body["error"]["code"], -32000);
    assert_eq!(body["id"], 9);
    p.shutdown().await;
    for h in [a, b, oracle] {
        h.shutdown().await;
    }
}

#[tokio::test]
async fn live_workload_through_the_proxy() {
    let c = chain();
    let flaky = node(
        "flaky",
        SimNodeFaultConfig::none(1).with(FaultMode::MalformedHttpResponse, 0.5),
        c,
    )
    .await;
    let good = node("good", SimNodeFaultConfig::none(2), c).await;
    let oracle = node("oracle", SimNodeFaultConfig::none(3), c).await;
    let p = proxy(&[("flaky", &flaky), ("good", &good)], &oracle).await;
    let spec = WorkloadSpec {
        total_requests: 60,
        ..WorkloadSpec::desk_scale(WorkloadKind::A)
    };
    let run = LiveRun {
        endpoint: Endpoint::parse(&p.url()).unwrap(),
        label: "proxy".into(),
        classifier: ClassifierConfig::default(),
        client_timeout: Duration::from_secs(1),
        clock: Arc::new(WallClock),
        oracle: Arc::new(move |t| c.head_at(t)),
    };
    let mut seen = 0;
    let log = run_live(&spec, run, c.head_number, |_| seen += 1)
        .await
        .unwrap();
    assert_eq!(seen, 60);
    let ids: Vec<u64> = log.records().iter().map(|r| r.request_id).collect();
    assert_eq!(ids, (1..=60).collect::<Vec<_>>());
    assert!(
        log.records().iter().all(|r| r.status == Status::Available),
        "{:?}",
        log.records().iter().find(|r| r.status != Status::Available)
    );
    p.shutdown().await;
    for h in [flaky, good, oracle] {
        h.shutdown().await;
    }
}
