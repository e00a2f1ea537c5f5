use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nvgate::clock::{Clock, WallClock};
use nvgate::faultgen::{
    aggregate, bundled_profiles, bundled_strategies, default_behavior_map, load_profile,
    strategy_to_simconfig, synthesize, Amplification, StrategyDocument, DEFAULT_STRATEGY_COUNT,
};
use nvgate::http::Endpoint;
use nvgate::model::{ChainState, ClassifierConfig, DEFAULT_GENESIS_HEAD};
use nvgate::orchestrator::{run_matrix, run_matrix_live, write_report, DeploymentPlan, Experiment};
use nvgate::proxy::{serve_proxy, ProxyConfig};
use nvgate::simnode::server::spawn_simnode;
use nvgate::simnode::{builtin_persona, SimNode, SimNodeFaultConfig};
use nvgate::workload::{
    run_live, summarize, JsonlSink, LiveRun, WorkloadKind, WorkloadSpec, FULL_SCALE_REQUESTS,
};

#[derive(Parser)]
#[command(
    name = "nvgate",
    version,
    about = "N-version JSON-RPC gateway and chaos harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the proxy in front of a set of nodes.
    Proxy {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve one simulated node persona over HTTP.
    Simnode {
        #[arg(long)]
        persona: String,
        /// Apply this bundled fault-injection strategy.
        #[arg(long)]
        strategy: Option<usize>,
        #[arg(long, default_value_t = 8545)]
        port: u16,
        #[arg(long, default_value_t = 8546)]
        control_port: u16,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12_000)]
        block_interval_ms: u64,
    },
    /// Print fault-injection strategies as JSON.
    Strategies {
        /// Profile CSV files; defaults to the bundled profiles.
        #[arg(long, num_args = 1..)]
        profiles: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        factor: f64,
        /// Add the factor instead of scaling by it.
        #[arg(long)]
        additive: bool,
        #[arg(long, default_value_t = DEFAULT_STRATEGY_COUNT)]
        count: usize,
    },
    /// Live workloads.
    Workload {
        #[command(subcommand)]
        action: WorkloadCommand,
    },
    /// Run an experiment matrix and write reports.
    Experiment {
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// 360,000 requests per cell instead of the plan's count.
        #[arg(long)]
        full_scale: bool,
        /// Real sockets and wall-clock pacing, one cell at a time.
        #[arg(long)]
        wall_clock: bool,
        /// Skip per-cell verdict logs.
        #[arg(long)]
        no_logs: bool,
    },
}

#[derive(Subcommand)]
enum WorkloadCommand {
    /// Drive a live endpoint with a workload and log verdicts.
    Run {
        #[arg(long, value_parser = ["A", "B", "a", "b"], default_value = "B")]
        kind: String,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        #[arg(long, default_value_t = 5)]
        interval_ms: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON-lines verdict log.
        #[arg(long)]
        out: PathBuf,
        /// Endpoint queried for the reference head; defaults to the target.
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long, default_value_t = 1_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 12_000)]
        block_interval_ms: u64,
    },
}

fn any_port(port: u16) -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], port))
}

async fn head_of(endpoint: &Endpoint) -> Result<u64> {
    let query =
        nvgate::model::RpcRequest::new(0, nvgate::classifier::HEAD_QUERY, vec![]).to_bytes();
    let outcome = nvgate::http::post_json(endpoint, &query, Duration::from_secs(2)).await;
    outcome
        .response
        .body()
        .and_then(|b| nvgate::model::parse_rpc_response(b).ok())
        .and_then(|r| r.result().and_then(nvgate::classifier::parse_quantity))
        .with_context(|| format!("no head from {}", endpoint.url()))
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Proxy { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config = ProxyConfig::from_json(&text).map_err(anyhow::Error::msg)?;
            let handle = serve_proxy(config).await?;
            eprintln!("proxy listening on {}", handle.url());
            tokio::signal::ctrl_c().await?;
            handle.shutdown().await;
        }
        Command::Simnode {
            persona,
            strategy,
            port,
            control_port,
            seed,
            block_interval_ms,
        } => {
            let profile = builtin_persona(&persona)?;
            let faults = match strategy {
                None => SimNodeFaultConfig::none(seed),
                Some(k) => {
                    let s = bundled_strategies()
                        .into_iter()
                        .find(|s| s.index == k)
                        .with_context(|| format!("no strategy {k}"))?;
                    profile.apply(&strategy_to_simconfig(&s, &default_behavior_map(), seed)?)
                }
            };
            let clock: Arc<dyn Clock> = Arc::new(WallClock);
            let chain = ChainState::new(
                DEFAULT_GENESIS_HEAD,
                Duration::from_millis(block_interval_ms),
                clock.now(),
            )?;
            let node = SimNode::new(&persona, profile, faults, chain)?;
            let handle = spawn_simnode(node, clock, any_port(port), any_port(control_port)).await?;
            eprintln!(
                "{persona}: rpc {} control {}",
                handle.rpc_url(),
                handle.control_url()
            );
            tokio::signal::ctrl_c().await?;
            handle.shutdown().await;
        }
        Command::Strategies {
            profiles,
            factor,
            additive,
            count,
        } => {
            let profiles = if profiles.is_empty() {
                bundled_profiles()
            } else {
                profiles
                    .iter()
                    .map(|p| load_profile(p))
                    .collect::<Result<_, _>>()?
            };
            let amplification = if additive {
                Amplification::Additive(factor)
            } else {
                Amplification::Multiplicative(factor)
            };
            let strategies = synthesize(&aggregate(&profiles), count, amplification)?;
            println!(
                "{}",
                StrategyDocument {
                    amplification,
                    strategies
                }
                .to_json()
            );
        }
        Command::Workload {
            action:
                WorkloadCommand::Run {
                    kind,
                    target,
                    count,
                    interval_ms,
                    seed,
                    out,
                    oracle,
                    timeout_ms,
                    block_interval_ms,
                },
        } => {
            let spec = WorkloadSpec {
                kind: kind.parse::<WorkloadKind>().map_err(anyhow::Error::msg)?,
                total_requests: count,
                interval_ms,
                seed,
                target: Some(target.clone()),
            };
            let endpoint = Endpoint::parse(&target).map_err(anyhow::Error::msg)?;
            let oracle_endpoint = match &oracle {
                Some(url) => Endpoint::parse(url).map_err(anyhow::Error::msg)?,
                None => endpoint.clone(),
            };
            // The reference head is read once and extrapolated at the block interval.
            let clock: Arc<dyn Clock> = Arc::new(WallClock);
            let anchor = head_of(&oracle_endpoint).await?;
            let chain = ChainState::new(
                anchor,
                Duration::from_millis(block_interval_ms),
                clock.now(),
            )?;
            let mut sink = JsonlSink::create(&out)?;
            let mut write_error = None;
            let run = LiveRun {
                endpoint,
                label: target,
                classifier: ClassifierConfig::default(),
                client_timeout: Duration::from_millis(timeout_ms),
                clock,
                oracle: Arc::new(move |t| chain.head_at(t)),
            };
            let log = run_live(&spec, run, anchor, |r| {
                if let Err(e) = sink.append(r) {
                    write_error.get_or_insert(e);
                }
            })
            .await?;
            if let Some(e) = write_error {
                bail!("writing {}: {e}", out.display());
            }
            let summary = summarize(log.records())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Experiment {
            plan,
            out,
            full_scale,
            wall_clock,
            no_logs,
        } => {
            let mut plan = match plan {
                Some(path) => DeploymentPlan::load(&path)?,
                None => DeploymentPlan::default(),
            };
            if full_scale {
                plan.workload.total_requests = FULL_SCALE_REQUESTS;
            }
            let experiment = Experiment::resolve(&plan)?;
            let logs = out.join("logs");
            std::fs::create_dir_all(&logs)?;
            let log_dir = (!no_logs).then_some(logs.as_path());
            eprintln!(
                "{} cells, {} requests each",
                experiment.cells().len(),
                experiment.workload.total_requests
            );
            let report = if wall_clock {
                run_matrix_live(&experiment, log_dir).await
            } else {
                tokio::task::block_in_place(|| run_matrix(&experiment, log_dir))
            };
            write_report(&out, &report)?;
            print!("{}", nvgate::orchestrator::render_tables(&report));
            let failed = report.failures().count();
            if failed > 0 {
                bail!("{failed} cells failed");
            }
        }
    }
    Ok(())
}
