//! Wall-clock execution of one cell over real sockets.

use std::net::SocketAddr;
use std::sync::Arc;

use super::{Cell, CellOutput, Experiment, PlanError};
use crate::clock::{Clock, WallClock};
use crate::http::Endpoint;
use crate::proxy::{serve_proxy, ProxyConfig, SubNodeConfig};
use crate::simnode::server::{spawn_simnode, SimNodeHandle};
use crate::simnode::{SimNode, SimNodeFaultConfig, SimNodeProfile};
use crate::workload::{run_live, summarize, LiveRun, WorkloadSpec};

fn any_port() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

fn io(e: std::io::Error) -> PlanError {
    PlanError::Invalid(format!("socket setup: {e}"))
}

/// Runs one cell against live sim-node servers, behind a live proxy when
/// the deployment has more than one persona. The proxy's reference head
/// comes from an extra fault-free node following the same chain.
pub async fn run_cell_live(experiment: &Experiment, cell: &Cell) -> Result<CellOutput, PlanError> {
    let clock: Arc<dyn Clock> = Arc::new(WallClock);
    let origin = clock.now();
    let nodes = experiment.build_nodes_at(cell, origin)?;
    let chain = *nodes[0].chain();

    let mut handles: Vec<SimNodeHandle> = Vec::new();
    for node in nodes {
        handles.push(
            spawn_simnode(node, clock.clone(), any_port(), any_port())
                .await
                .map_err(io)?,
        );
    }

    let mut reference = None;
    let mut proxy = None;
    let target = if handles.len() == 1 {
        handles[0].rpc_url()
    } else {
        let source = SimNode::new(
            "source",
            SimNodeProfile::uniform("source", 1.0, 2.0),
            SimNodeFaultConfig::none(0),
            chain,
        )
        .map_err(|e| PlanError::Invalid(e.to_string()))?;
        let source = spawn_simnode(source, clock.clone(), any_port(), any_port())
            .await
            .map_err(io)?;
        let config = ProxyConfig {
            listen: any_port(),
            sub_nodes: cell
                .deployment
                .personas
                .iter()
                .zip(&handles)
                .map(|(id, h)| SubNodeConfig {
                    id: id.clone(),
                    url: h.rpc_url(),
                })
                .collect(),
            classifier: experiment.classifier,
            window: None,
            oracle_url: Some(source.rpc_url()),
            oracle_poll_ms: 50,
        };
        let handle = serve_proxy(config).await.map_err(io)?;
        let url = handle.url();
        reference = Some(source);
        proxy = Some(handle);
        url
    };

    let run = LiveRun {
        endpoint: Endpoint::parse(&target).map_err(PlanError::Invalid)?,
        label: cell.deployment.label.clone(),
        classifier: experiment.classifier,
        client_timeout: experiment.client_timeout,
        clock,
        oracle: Arc::new(move |t| chain.head_at(t)),
    };
    let workload = WorkloadSpec {
        seed: super::derive_seed(experiment.seed, "workload", cell.strategy.index),
        ..experiment.workload.clone()
    };
    let result = run_live(&workload, run, chain.head_number, |_| {}).await;

    if let Some(p) = proxy {
        p.shutdown().await;
    }
    if let Some(r) = reference {
        r.shutdown().await;
    }
    for h in handles {
        h.shutdown().await;
    }

    let log = result.map_err(|e| PlanError::Invalid(e.to_string()))?;
    let summary = summarize(log.records()).map_err(|e| PlanError::Invalid(e.to_string()))?;
    Ok(CellOutput {
        deployment: cell.deployment.clone(),
        strategy: cell.strategy.index,
        summary,
        log,
    })
}
