//! N-Version JSON-RPC gateway for blockchain nodes, with simulated nodes,
//! fault-injection strategy synthesis and an experiment harness for
//! measuring availability under injected faults.

pub mod classifier;
pub mod clock;
pub mod faultgen;
pub mod http;
pub mod model;
pub mod orchestrator;
pub mod proxy;
pub mod simnode;
pub mod workload;
