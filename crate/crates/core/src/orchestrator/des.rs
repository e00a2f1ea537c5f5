//! Virtual-time execution of one deployment.
//!
//! A discrete-event loop drives the same sans-IO cores the HTTP servers use:
//! [`SimNode::serve`] for sub-nodes and [`Dispatch`] for the proxy. Events are
//! ordered by (time, insertion sequence), so a run is a pure function of its
//! inputs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Duration;

use super::PlanError;
use crate::classifier::classify;
use crate::model::{
    ChainState, ClassifierConfig, RawResponse, RpcExchange, Timestamp, TransportErrorKind,
};
use crate::proxy::{AttemptTrace, Dispatch, Scoreboard, Step, SubNodeState};
use crate::simnode::SimNode;
use crate::workload::{generate, LogRecord, ScheduledRequest, VerdictLog, WorkloadSpec};

/// Nodes and settings for one virtual run. One node is a direct deployment;
/// more are placed behind the proxy.
#[derive(Debug, Clone)]
pub struct VirtualDeployment {
    pub label: String,
    pub nodes: Vec<SimNode>,
    pub chain: ChainState,
    pub classifier: ClassifierConfig,
    pub client_timeout: Duration,
    pub window: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct VirtualRun {
    pub log: VerdictLog,
    /// Nodes after the run, with their journals.
    pub nodes: Vec<SimNode>,
    /// Per-request attempt chains; empty for direct deployments.
    pub traces: Vec<Vec<AttemptTrace>>,
    pub board: Option<Scoreboard>,
}

enum Event {
    Arrive(usize),
    Completed {
        request: usize,
        node: usize,
        exchange: RpcExchange,
    },
}

struct Queue {
    heap: BinaryHeap<Reverse<(u64, u64)>>,
    events: std::collections::HashMap<u64, Event>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, at: Timestamp, event: Event) {
        self.heap.push(Reverse((at.as_micros(), self.seq)));
        self.events.insert(self.seq, event);
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<(Timestamp, Event)> {
        let Reverse((at, seq)) = self.heap.pop()?;
        Some((
            Timestamp(at),
            self.events.remove(&seq).expect("queued event"),
        ))
    }
}

/// Runs the workload against the deployment in virtual time.
pub fn run_virtual(
    deployment: VirtualDeployment,
    workload: &WorkloadSpec,
) -> Result<VirtualRun, PlanError> {
    if deployment.nodes.is_empty() {
        return Err(PlanError::Invalid("deployment without nodes".into()));
    }
    workload
        .validate()
        .map_err(|e| PlanError::Invalid(e.to_string()))?;
    let schedule = generate(workload, deployment.chain.head_number);
    if deployment.nodes.len() == 1 {
        Ok(run_direct(deployment, &schedule))
    } else {
        Ok(run_proxied(deployment, &schedule))
    }
}

fn start_of(deployment: &VirtualDeployment) -> Timestamp {
    deployment.chain.genesis_at
}

fn run_direct(mut d: VirtualDeployment, schedule: &[ScheduledRequest]) -> VirtualRun {
    let start = start_of(&d);
    let mut log = VerdictLog::new();
    let node = &mut d.nodes[0];
    for item in schedule {
        let sent_at = start + item.offset;
        let served = node.serve(&item.request, sent_at);
        let exchange = served.into_exchange(item.request.clone(), sent_at, d.client_timeout, None);
        let oracle = d.chain.head_at(exchange.received_at());
        let verdict = classify(&exchange, oracle, &d.classifier);
        log.push(LogRecord::new(&exchange, &verdict, &d.label, exchange.t_r))
            .expect("schedule ids increase");
    }
    VirtualRun {
        log,
        nodes: d.nodes,
        traces: Vec::new(),
        board: None,
    }
}

fn run_proxied(mut d: VirtualDeployment, schedule: &[ScheduledRequest]) -> VirtualRun {
    let start = start_of(&d);
    let states = d
        .nodes
        .iter()
        .map(|n| SubNodeState::new(n.id(), format!("sim://{}", n.id())))
        .collect();
    let mut board = Scoreboard::with_window(states, d.window);
    let mut queue = Queue {
        heap: BinaryHeap::new(),
        events: Default::default(),
        seq: 0,
    };
    for (i, item) in schedule.iter().enumerate() {
        queue.push(start + item.offset, Event::Arrive(i));
    }
    let mut dispatches: Vec<Option<Dispatch>> = vec![None; schedule.len()];
    let mut records: Vec<Option<LogRecord>> = vec![None; schedule.len()];
    let mut traces: Vec<Vec<AttemptTrace>> = vec![Vec::new(); schedule.len()];

    while let Some((now, event)) = queue.pop() {
        let (request, step) = match event {
            Event::Arrive(i) => {
                let oracle = d.chain.head_at(now);
                let (dispatch, step) =
                    Dispatch::start(schedule[i].request.clone(), oracle, d.classifier, &board);
                dispatches[i] = Some(dispatch);
                (i, step)
            }
            Event::Completed {
                request,
                node,
                exchange,
            } => {
                let dispatch = dispatches[request].as_mut().expect("dispatch in flight");
                (request, dispatch.on_exchange(&mut board, node, exchange))
            }
        };
        match step {
            Step::Forward(node) => {
                let dispatch = dispatches[request].as_ref().expect("dispatch in flight");
                let req = dispatch.request().clone();
                let timeout = dispatch.attempt_timeout();
                let served = d.nodes[node].serve(&req, now);
                let id = d.nodes[node].id().to_string();
                let exchange = served.into_exchange(req, now, timeout, Some(id));
                queue.push(
                    now + exchange.t_r,
                    Event::Completed {
                        request,
                        node,
                        exchange,
                    },
                );
            }
            Step::Done(outcome) => {
                dispatches[request] = None;
                let sent_at = start + schedule[request].offset;
                let end_to_end = now.since(sent_at);
                let (response, t_r) = if end_to_end > d.client_timeout {
                    (
                        RawResponse::Transport(TransportErrorKind::TimeoutAwaitingHeaders),
                        d.client_timeout,
                    )
                } else {
                    (outcome.exchange.response, outcome.exchange.t_r)
                };
                let seen = RpcExchange {
                    request: schedule[request].request.clone(),
                    response,
                    t_r,
                    sent_at,
                    sub_node_id: outcome.exchange.sub_node_id,
                };
                let verdict = classify(&seen, d.chain.head_at(now), &d.classifier);
                records[request] = Some(LogRecord::new(
                    &seen,
                    &verdict,
                    &d.label,
                    end_to_end.min(d.client_timeout),
                ));
                traces[request] = outcome.attempts;
            }
        }
    }

    let mut log = VerdictLog::new();
    for record in records {
        log.push(record.expect("every request completes"))
            .expect("schedule ids increase");
    }
    VirtualRun {
        log,
        nodes: d.nodes,
        traces,
        board: Some(board),
    }
}
