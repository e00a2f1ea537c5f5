//! N-Version dispatch.
//!
//! Every sub-node carries a running score (AVAILABLE responses over attempts).
//! A request goes to the best-ranked sub-node first and moves down the
//! ranking until one answers AVAILABLE. If none does, the best non-available
//! answer is chosen: compliant beats non-compliant, then the freshest wins.
//!
//! This module is sans-IO. [`Dispatch`] tells the caller where to send the
//! request next and consumes the resulting exchanges; [`server`] drives it
//! over HTTP, the orchestrator drives it in virtual time.

pub mod server;

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, AvailabilityVerdict, Status};
use crate::model::{ClassifierConfig, RawResponse, RpcExchange, RpcRequest};

pub use server::{serve_proxy, ProxyConfig, ProxyHandle, SubNodeConfig};

/// Running availability record of one sub-node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubNodeState {
    pub id: String,
    pub endpoint: String,
    pub successes: u64,
    pub attempts: u64,
}

impl SubNodeState {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        SubNodeState {
            id: id.into(),
            endpoint: endpoint.into(),
            successes: 0,
            attempts: 0,
        }
    }

    /// `successes / attempts`, or 1 before the first attempt.
    pub fn score(&self) -> f64 {
        let (s, a) = self.ratio();
        s as f64 / a as f64
    }

    pub fn ratio(&self) -> (u64, u64) {
        if self.attempts == 0 {
            (1, 1)
        } else {
            (self.successes, self.attempts)
        }
    }
}

pub fn update_score(state: &SubNodeState, verdict: &AvailabilityVerdict) -> SubNodeState {
    SubNodeState {
        successes: state.successes + u64::from(verdict.status == Status::Available),
        attempts: state.attempts + 1,
        ..state.clone()
    }
}

fn cmp_ratio((s1, a1): (u64, u64), (s2, a2): (u64, u64)) -> Ordering {
    (u128::from(s1) * u128::from(a2)).cmp(&(u128::from(s2) * u128::from(a1)))
}

/// Sub-node indices, best score first; ties keep registration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking(pub Vec<usize>);

fn rank_ratios(ratios: &[(u64, u64)]) -> Ranking {
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| cmp_ratio(ratios[b], ratios[a]));
    Ranking(order)
}

pub fn rank(states: &[SubNodeState]) -> Ranking {
    rank_ratios(&states.iter().map(SubNodeState::ratio).collect::<Vec<_>>())
}

/// All sub-node states plus the optional sliding window used for ranking.
#[derive(Debug, Clone)]
pub struct Scoreboard {
    states: Vec<SubNodeState>,
    window: Option<usize>,
    recent: Vec<VecDeque<bool>>,
}

impl Scoreboard {
    pub fn new(states: Vec<SubNodeState>) -> Self {
        Scoreboard::with_window(states, None)
    }

    /// With `Some(w)`, ranking uses only each sub-node's last `w` outcomes.
    pub fn with_window(states: Vec<SubNodeState>, window: Option<usize>) -> Self {
        let recent = vec![VecDeque::new(); states.len()];
        Scoreboard {
            states,
            window: window.filter(|w| *w > 0),
            recent,
        }
    }

    pub fn states(&self) -> &[SubNodeState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn record(&mut self, node: usize, verdict: &AvailabilityVerdict) {
        self.states[node] = update_score(&self.states[node], verdict);
        if let Some(w) = self.window {
            let recent = &mut self.recent[node];
            recent.push_back(verdict.status == Status::Available);
            if recent.len() > w {
                recent.pop_front();
            }
        }
    }

    fn ratio(&self, node: usize) -> (u64, u64) {
        match self.window {
            None => self.states[node].ratio(),
            Some(_) => {
                let recent = &self.recent[node];
                if recent.is_empty() {
                    (1, 1)
                } else {
                    let ok = recent.iter().filter(|s| **s).count();
                    (ok as u64, recent.len() as u64)
                }
            }
        }
    }

    pub fn ranking(&self) -> Ranking {
        rank_ratios(&(0..self.len()).map(|i| self.ratio(i)).collect::<Vec<_>>())
    }

    pub fn snapshot(&self) -> AdminView {
        let ranking = self.ranking();
        AdminView {
            ranking: ranking
                .0
                .iter()
                .map(|&i| self.states[i].id.clone())
                .collect(),
            sub_nodes: self
                .states
                .iter()
                .map(|s| AdminEntry {
                    id: s.id.clone(),
                    endpoint: s.endpoint.clone(),
                    successes: s.successes,
                    attempts: s.attempts,
                    score: s.score(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminEntry {
    pub id: String,
    pub endpoint: String,
    pub successes: u64,
    pub attempts: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminView {
    pub ranking: Vec<String>,
    pub sub_nodes: Vec<AdminEntry>,
}

/// A non-available answer kept while the request moves down the ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResponse {
    pub sub_node: usize,
    /// Order in which the sub-node was tried for this request.
    pub position: usize,
    pub verdict: AvailabilityVerdict,
    pub exchange: RpcExchange,
}

impl CandidateResponse {
    fn has_body(&self) -> bool {
        self.exchange.response.body().is_some()
    }
}

/// Picks the best of several non-available answers.
///
/// Only the best status tier present is considered. Within it a compliant
/// answer wins over a non-compliant one, and among compliant answers the
/// smallest block distance wins, earlier position breaking ties. Without a
/// compliant answer the earliest body-bearing one is returned, and failing
/// that the first transport error.
pub fn select_best_degraded(candidates: &[CandidateResponse]) -> Option<usize> {
    let tier = candidates.iter().map(|c| c.verdict.status).max()?;
    let in_tier = || {
        candidates
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.verdict.status == tier)
    };
    in_tier()
        .filter(|(_, c)| c.verdict.c_r)
        .min_by_key(|(_, c)| (c.verdict.f_r.unwrap_or(u64::MAX), c.position))
        .or_else(|| {
            in_tier()
                .filter(|(_, c)| c.has_body())
                .min_by_key(|(_, c)| c.position)
        })
        .or_else(|| in_tier().min_by_key(|(_, c)| c.position))
        .map(|(i, _)| i)
}

/// One forwarded attempt of a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptTrace {
    pub sub_node: usize,
    pub status: Status,
}

/// The proxy's answer to one request.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOutcome {
    pub sub_node: usize,
    pub verdict: AvailabilityVerdict,
    pub exchange: RpcExchange,
    pub attempts: Vec<AttemptTrace>,
}

impl DispatchOutcome {
    /// Every sub-node failed without producing a body.
    pub fn all_transport_errors(&self) -> bool {
        matches!(self.exchange.response, RawResponse::Transport(_))
    }
}

#[derive(Debug)]
pub enum Step {
    /// Forward the request to this sub-node next.
    Forward(usize),
    Done(DispatchOutcome),
}

/// Per-request retry chain.
#[derive(Debug, Clone)]
pub struct Dispatch {
    request: RpcRequest,
    oracle_head: u64,
    config: ClassifierConfig,
    tried: Vec<bool>,
    attempts: Vec<AttemptTrace>,
    candidates: Vec<CandidateResponse>,
}

impl Dispatch {
    /// Starts a request. `oracle_head` is read once and reused for every attempt.
    pub fn start(
        request: RpcRequest,
        oracle_head: u64,
        config: ClassifierConfig,
        board: &Scoreboard,
    ) -> (Dispatch, Step) {
        assert!(!board.is_empty(), "proxy needs at least one sub-node");
        let dispatch = Dispatch {
            request,
            oracle_head,
            config,
            tried: vec![false; board.len()],
            attempts: Vec::new(),
            candidates: Vec::new(),
        };
        let first = dispatch.next_target(board).expect("untried sub-node");
        (dispatch, Step::Forward(first))
    }

    pub fn request(&self) -> &RpcRequest {
        &self.request
    }

    /// Per-attempt timeout.
    pub fn attempt_timeout(&self) -> std::time::Duration {
        self.config.timeliness()
    }

    fn next_target(&self, board: &Scoreboard) -> Option<usize> {
        board.ranking().0.into_iter().find(|&i| !self.tried[i])
    }

    /// Consumes the exchange of the last forwarded attempt, updating the
    /// sub-node's score before deciding what happens next.
    pub fn on_exchange(
        &mut self,
        board: &mut Scoreboard,
        sub_node: usize,
        exchange: RpcExchange,
    ) -> Step {
        assert!(!self.tried[sub_node], "sub-node {sub_node} already tried");
        self.tried[sub_node] = true;
        let verdict = classify(&exchange, self.oracle_head, &self.config);
        board.record(sub_node, &verdict);
        self.attempts.push(AttemptTrace {
            sub_node,
            status: verdict.status,
        });
        if verdict.status == Status::Available {
            return Step::Done(DispatchOutcome {
                sub_node,
                verdict,
                exchange,
                attempts: std::mem::take(&mut self.attempts),
            });
        }
        self.candidates.push(CandidateResponse {
            sub_node,
            position: self.attempts.len() - 1,
            verdict,
            exchange,
        });
        match self.next_target(board) {
            Some(next) => Step::Forward(next),
            None => {
                let best = select_best_degraded(&self.candidates).expect("non-empty");
                let chosen = self.candidates.swap_remove(best);
                Step::Done(DispatchOutcome {
                    sub_node: chosen.sub_node,
                    verdict: chosen.verdict,
                    exchange: chosen.exchange,
                    attempts: std::mem::take(&mut self.attempts),
                })
            }
        }
    }
}
