//! Experiment orchestration.
//!
//! A plan expands into cells, one per (deployment, strategy). Each cell
//! restores a fresh state snapshot, builds its simulated nodes with the
//! strategy applied, runs the workload and summarizes the verdict log. Cells
//! share nothing, so they run in parallel and in any order.

mod des;
mod live;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::faultgen::{
    aggregate, bundled_profiles, bundled_strategies, default_behavior_map, load_profile,
    strategy_to_simconfig, synthesize, Amplification, FaultBehaviorMap, FaultInjectionStrategy,
    FaultgenError, StrategyDocument, DEFAULT_STRATEGY_COUNT,
};
use crate::model::{ChainState, ClassifierConfig, Timestamp, DEFAULT_GENESIS_HEAD};
use crate::simnode::{builtin_personas, parse_personas, PersonaError, SimNode, SimNodeProfile};
use crate::workload::{summarize, Summary, VerdictLog, WorkloadKind, WorkloadSpec};

pub use des::{run_virtual, VirtualDeployment, VirtualRun};
pub use live::run_cell_live;
pub use report::{
    parse_csv, render_csv, render_json, render_tables, write_report, AverageRow, CellReport,
    CsvRow, ExperimentReport, ResourceColumns,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Faults(#[from] FaultgenError),
    #[error("unknown persona {0:?} in combination")]
    UnknownPersona(String),
    #[error("strategy {0} is not defined")]
    UnknownStrategy(usize),
    #[error("invalid plan: {0}")]
    Invalid(String),
}

fn read(path: &Path) -> Result<String, PlanError> {
    std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selection<T> {
    Keyword(String),
    List(Vec<T>),
}

impl<T> Default for Selection<T> {
    fn default() -> Self {
        Selection::Keyword("all".into())
    }
}

/// Deployment kinds to run when no explicit list is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeploymentKind {
    Single,
    NVersion,
}

/// Experiment description, usually read from a JSON plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    /// Persona labels. Defaults to every bundled persona.
    #[serde(default)]
    pub personas: Option<Vec<String>>,
    /// Alternative persona definitions (TOML).
    #[serde(default)]
    pub personas_file: Option<PathBuf>,
    /// `"all"` (singles and every combination), `"singles"`, `"n-version"`,
    /// or an explicit list of persona-label lists.
    #[serde(default)]
    pub combinations: Selection<Vec<String>>,
    /// `"all"` or a list of strategy indices.
    #[serde(default)]
    pub strategies: Selection<usize>,
    /// Pre-synthesized strategies; otherwise synthesized from `profiles`.
    #[serde(default)]
    pub strategy_file: Option<PathBuf>,
    /// Profile files; defaults to the bundled synthetic profiles.
    #[serde(default)]
    pub profiles: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub amplification: Amplification,
    #[serde(default)]
    pub behavior_map_file: Option<PathBuf>,
    #[serde(default = "default_workload")]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default = "default_block_interval_ms")]
    pub block_interval_ms: u64,
    #[serde(default = "default_client_timeout_ms")]
    pub client_timeout_ms: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_workload() -> WorkloadSpec {
    WorkloadSpec::desk_scale(WorkloadKind::B)
}

fn default_block_interval_ms() -> u64 {
    1_000
}

fn default_client_timeout_ms() -> u64 {
    1_000
}

impl Default for DeploymentPlan {
    fn default() -> Self {
        DeploymentPlan {
            personas: None,
            personas_file: None,
            combinations: Selection::default(),
            strategies: Selection::default(),
            strategy_file: None,
            profiles: None,
            amplification: Amplification::default(),
            behavior_map_file: None,
            workload: default_workload(),
            classifier: ClassifierConfig::default(),
            block_interval_ms: default_block_interval_ms(),
            client_timeout_ms: default_client_timeout_ms(),
            seed: 0,
            workers: None,
        }
    }
}

impl DeploymentPlan {
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        serde_json::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PlanError> {
        let mut plan = DeploymentPlan::from_json(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        plan.personas_file.iter_mut().for_each(rebase);
        plan.strategy_file.iter_mut().for_each(rebase);
        plan.behavior_map_file.iter_mut().for_each(rebase);
        plan.profiles.iter_mut().flatten().for_each(rebase);
        Ok(plan)
    }
}

/// One deployment: a single persona or an N-Version ensemble behind the proxy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub label: String,
    pub personas: Vec<String>,
}

impl Deployment {
    pub fn new(personas: &[&str]) -> Self {
        Deployment {
            label: personas.join("+"),
            personas: personas.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn kind(&self) -> DeploymentKind {
        if self.personas.len() == 1 {
            DeploymentKind::Single
        } else {
            DeploymentKind::NVersion
        }
    }
}

/// Every non-empty subset of `labels` of size at least `min_size`, by size
/// then lexicographic position.
pub fn combinations(labels: &[String], min_size: usize) -> Vec<Vec<String>> {
    let n = labels.len();
    let mut out = Vec::new();
    for size in min_size.max(1)..=n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| labels[i].clone()).collect());
            let Some(pos) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Global chain plus every node's local head at capture time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub chain: ChainState,
    pub local_heads: BTreeMap<String, u64>,
}

impl StateSnapshot {
    /// The source node's state before strategy `k`. The source keeps
    /// syncing between experiments, so later strategies start higher.
    pub fn for_strategy(k: usize, block_interval: Duration, cell_duration: Duration) -> Self {
        let blocks_per_cell = cell_duration
            .as_micros()
            .div_ceil(block_interval.as_micros().max(1)) as u64
            + 1;
        let head = DEFAULT_GENESIS_HEAD + k as u64 * blocks_per_cell;
        StateSnapshot {
            chain: ChainState {
                head_number: head,
                block_interval,
                genesis_at: Timestamp::ZERO,
            },
            local_heads: BTreeMap::new(),
        }
    }

    pub fn capture(nodes: &mut [SimNode], at: Timestamp) -> Self {
        let chain = nodes
            .first()
            .map(|n| n.chain().rebased(at, Timestamp::ZERO))
            .unwrap_or_default();
        let local_heads = nodes
            .iter_mut()
            .map(|n| (n.id().to_string(), n.advance_chain(at)))
            .collect();
        StateSnapshot { chain, local_heads }
    }

    pub fn local_head(&self, node_id: &str) -> u64 {
        self.local_heads
            .get(node_id)
            .copied()
            .unwrap_or(self.chain.head_number)
    }
}

/// Seed for one persona under one strategy, independent across personas.
pub fn derive_seed(base: u64, persona: &str, strategy: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(persona.as_bytes());
    h.update((strategy as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A fully resolved plan.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub personas: Vec<SimNodeProfile>,
    pub deployments: Vec<Deployment>,
    pub strategies: Vec<FaultInjectionStrategy>,
    pub behavior_map: FaultBehaviorMap,
    pub workload: WorkloadSpec,
    pub classifier: ClassifierConfig,
    pub block_interval: Duration,
    pub client_timeout: Duration,
    pub seed: u64,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub deployment: Deployment,
    pub strategy: FaultInjectionStrategy,
}

impl Experiment {
    pub fn resolve(plan: &DeploymentPlan) -> Result<Experiment, PlanError> {
        plan.workload
            .validate()
            .map_err(|e| PlanError::Invalid(e.to_string()))?;
        if plan.block_interval_ms == 0 {
            return Err(PlanError::Invalid("block interval must be positive".into()));
        }
        if plan.classifier.timeliness_ms == 0 {
            return Err(PlanError::Invalid("T must be positive".into()));
        }
        let available = match &plan.personas_file {
            Some(path) => parse_personas(&read(path)?)?,
            None => builtin_personas(),
        };
        let personas: Vec<SimNodeProfile> = match &plan.personas {
            None => available,
            Some(labels) => labels
                .iter()
                .map(|l| {
                    available
                        .iter()
                        .find(|p| &p.label == l)
                        .cloned()
                        .ok_or_else(|| PersonaError::Unknown(l.clone()))
                })
                .collect::<Result<_, _>>()?,
        };
        let labels: Vec<String> = personas.iter().map(|p| p.label.clone()).collect();
        let combos = match &plan.combinations {
            Selection::Keyword(k) if k == "all" => combinations(&labels, 1),
            Selection::Keyword(k) if k == "singles" => {
                labels.iter().map(|l| vec![l.clone()]).collect()
            }
            Selection::Keyword(k) if k == "n-version" => combinations(&labels, 2),
            Selection::Keyword(k) => {
                return Err(PlanError::Invalid(format!(
                    "unknown combinations keyword {k:?}"
                )))
            }
            Selection::List(list) => {
                for combo in list {
                    if combo.is_empty() {
                        return Err(PlanError::Invalid("empty combination".into()));
                    }
                    if let Some(bad) = combo.iter().find(|l| !labels.contains(l)) {
                        return Err(PlanError::UnknownPersona(bad.clone()));
                    }
                }
                list.clone()
            }
        };
        let deployments = combos
            .iter()
            .map(|c| Deployment::new(&c.iter().map(String::as_str).collect::<Vec<_>>()))
            .collect();

        let all_strategies = match (&plan.strategy_file, &plan.profiles) {
            (Some(path), _) => {
                StrategyDocument::from_json(&read(path)?)
                    .map_err(|e| PlanError::Parse(e.to_string()))?
                    .strategies
            }
            (None, Some(paths)) => {
                let profiles = paths
                    .iter()
                    .map(|p| load_profile(p))
                    .collect::<Result<Vec<_>, _>>()?;
                let agg = aggregate(&profiles);
                synthesize(
                    &agg,
                    DEFAULT_STRATEGY_COUNT.min(agg.len()),
                    plan.amplification,
                )?
            }
            (None, None) if plan.amplification == Amplification::default() => bundled_strategies(),
            (None, None) => synthesize(
                &aggregate(&bundled_profiles()),
                DEFAULT_STRATEGY_COUNT,
                plan.amplification,
            )?,
        };
        let strategies = match &plan.strategies {
            Selection::Keyword(k) if k == "all" => all_strategies,
            Selection::Keyword(k) => {
                return Err(PlanError::Invalid(format!(
                    "unknown strategies keyword {k:?}"
                )))
            }
            Selection::List(indices) => indices
                .iter()
                .map(|&k| {
                    all_strategies
                        .iter()
                        .find(|s| s.index == k)
                        .cloned()
                        .ok_or(PlanError::UnknownStrategy(k))
                })
                .collect::<Result<_, _>>()?,
        };
        let behavior_map = match &plan.behavior_map_file {
            Some(path) => FaultBehaviorMap::from_json(&read(path)?)?,
            None => default_behavior_map(),
        };
        Ok(Experiment {
            personas,
            deployments,
            strategies,
            behavior_map,
            workload: plan.workload.clone(),
            classifier: plan.classifier,
            block_interval: Duration::from_millis(plan.block_interval_ms),
            client_timeout: Duration::from_millis(plan.client_timeout_ms),
            seed: plan.seed,
            workers: plan.workers,
        })
    }

    /// Deployment-major list of cells.
    pub fn cells(&self) -> Vec<Cell> {
        self.deployments
            .iter()
            .flat_map(|d| {
                self.strategies.iter().map(move |s| Cell {
                    deployment: d.clone(),
                    strategy: s.clone(),
                })
            })
            .collect()
    }

    pub fn persona(&self, label: &str) -> &SimNodeProfile {
        self.personas
            .iter()
            .find(|p| p.label == label)
            .expect("deployments reference known personas")
    }

    pub fn snapshot(&self, strategy: usize) -> StateSnapshot {
        StateSnapshot::for_strategy(strategy, self.block_interval, self.workload.duration())
    }

    /// The simulated nodes of a cell, restored from its snapshot.
    pub fn build_nodes(&self, cell: &Cell) -> Result<Vec<SimNode>, PlanError> {
        self.build_nodes_at(cell, Timestamp::ZERO)
    }

    /// As [`Experiment::build_nodes`], with the run starting at `origin`.
    pub fn build_nodes_at(
        &self,
        cell: &Cell,
        origin: Timestamp,
    ) -> Result<Vec<SimNode>, PlanError> {
        let mut snapshot = self.snapshot(cell.strategy.index);
        snapshot.chain.genesis_at = origin;
        cell.deployment
            .personas
            .iter()
            .map(|label| {
                let persona = self.persona(label);
                let seed = derive_seed(self.seed, label, cell.strategy.index);
                let injected = strategy_to_simconfig(&cell.strategy, &self.behavior_map, seed)?;
                let faults = persona.apply(&injected);
                SimNode::restored(
                    label.clone(),
                    persona.clone(),
                    faults,
                    snapshot.chain,
                    snapshot.local_head(label),
                )
                .map_err(|e| PlanError::Invalid(e.to_string()))
            })
            .collect()
    }

    /// Runs one cell in virtual time.
    pub fn run_cell(&self, cell: &Cell) -> Result<CellOutput, PlanError> {
        let nodes = self.build_nodes(cell)?;
        let snapshot = self.snapshot(cell.strategy.index);
        let deployment = VirtualDeployment {
            label: cell.deployment.label.clone(),
            nodes,
            chain: snapshot.chain,
            classifier: self.classifier,
            client_timeout: self.client_timeout,
            window: None,
        };
        let workload = WorkloadSpec {
            seed: derive_seed(self.seed, "workload", cell.strategy.index),
            ..self.workload.clone()
        };
        let run = run_virtual(deployment, &workload)?;
        let summary =
            summarize(run.log.records()).map_err(|e| PlanError::Invalid(e.to_string()))?;
        Ok(CellOutput {
            deployment: cell.deployment.clone(),
            strategy: cell.strategy.index,
            summary,
            log: run.log,
        })
    }
}

/// Result of one cell, including its full verdict log.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub deployment: Deployment,
    pub strategy: usize,
    pub summary: Summary,
    pub log: VerdictLog,
}

impl CellOutput {
    pub fn log_file_name(&self) -> String {
        format!("{}__fi{:02}.jsonl", self.deployment.label, self.strategy)
    }
}

fn log_digest(log: &VerdictLog) -> String {
    hex::encode(Sha256::digest(log.to_jsonl()))
}

fn cell_report(
    cell: &Cell,
    result: Result<CellOutput, String>,
    log_dir: Option<&Path>,
) -> CellReport {
    match result {
        Ok(out) => {
            let mut log_file = None;
            let mut failure = None;
            if let Some(dir) = log_dir {
                let name = out.log_file_name();
                match std::fs::write(dir.join(&name), out.log.to_jsonl()) {
                    Ok(()) => log_file = Some(name),
                    Err(e) => failure = Some(format!("writing {name}: {e}")),
                }
            }
            CellReport {
                deployment: out.deployment.label.clone(),
                strategy: out.strategy,
                requests: out.summary.total,
                rates: Some(out.summary.rates),
                errors: out.summary.errors.clone(),
                log_digest: Some(log_digest(&out.log)),
                log_file,
                failed: failure,
            }
        }
        Err(e) => CellReport {
            deployment: cell.deployment.label.clone(),
            strategy: cell.strategy.index,
            requests: 0,
            rates: None,
            errors: BTreeMap::new(),
            log_digest: None,
            log_file: None,
            failed: Some(e),
        },
    }
}

/// Runs every cell in virtual time, in parallel. With `log_dir`, each cell's
/// verdict log is written there as JSON lines.
pub fn run_matrix(experiment: &Experiment, log_dir: Option<&Path>) -> ExperimentReport {
    let cells = experiment.cells();
    let run = || {
        cells
            .par_iter()
            .map(|cell| {
                let result = experiment.run_cell(cell).map_err(|e| e.to_string());
                cell_report(cell, result, log_dir)
            })
            .collect::<Vec<_>>()
    };
    let reports = match experiment.workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run()),
        _ => run(),
    };
    ExperimentReport::from_cells(experiment, reports)
}

/// Runs every cell sequentially against real sockets and wall-clock time.
pub async fn run_matrix_live(experiment: &Experiment, log_dir: Option<&Path>) -> ExperimentReport {
    let mut reports = Vec::new();
    for cell in experiment.cells() {
        let result = run_cell_live(experiment, &cell)
            .await
            .map_err(|e| e.to_string());
        reports.push(cell_report(&cell, result, log_dir));
    }
    ExperimentReport::from_cells(experiment, reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Status;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn four_personas_give_fifteen_topologies() {
        let l = labels(&["a", "b", "c", "d"]);
        assert_eq!(combinations(&l, 1).len(), 15);
        let multi = combinations(&l, 2);
        assert_eq!(multi.len(), 11);
        assert_eq!(multi.iter().filter(|c| c.len() == 2).count(), 6);
        assert_eq!(multi.iter().filter(|c| c.len() == 3).count(), 4);
        assert_eq!(multi.last().unwrap(), &l);
        assert_eq!(combinations(&l, 2)[0], labels(&["a", "b"]));
    }

    #[test]
    fn snapshot_restores_identical_heads() {
        let plan = DeploymentPlan {
            combinations: Selection::List(vec![labels(&["geth", "besu"])]),
            ..Default::default()
        };
        let exp = Experiment::resolve(&plan).unwrap();
        let cell = exp.cells()[3].clone();
        let mut a = exp.build_nodes(&cell).unwrap();
        let mut b = exp.build_nodes(&cell).unwrap();
        let sa = StateSnapshot::capture(&mut a, Timestamp::ZERO);
        let sb = StateSnapshot::capture(&mut b, Timestamp::ZERO);
        assert_eq!(sa, sb);
        assert_eq!(
            sa.local_head("geth"),
            exp.snapshot(cell.strategy.index).chain.head_number
        );
    }

    #[test]
    fn later_strategies_start_from_later_heads() {
        let s1 = StateSnapshot::for_strategy(1, Duration::from_secs(1), Duration::from_secs(50));
        let s2 = StateSnapshot::for_strategy(2, Duration::from_secs(1), Duration::from_secs(50));
        assert!(s2.chain.head_number > s1.chain.head_number + 50);
    }

    #[test]
    fn seeds_differ_across_personas_and_strategies() {
        assert_ne!(derive_seed(1, "geth", 1), derive_seed(1, "besu", 1));
        assert_ne!(derive_seed(1, "geth", 1), derive_seed(1, "geth", 2));
        assert_eq!(derive_seed(1, "geth", 1), derive_seed(1, "geth", 1));
    }

    #[test]
    fn plan_defaults_cover_the_full_matrix() {
        let exp = Experiment::resolve(&DeploymentPlan::from_json("{}").unwrap()).unwrap();
        assert_eq!(exp.deployments.len(), 15);
        assert_eq!(exp.strategies.len(), 20);
        assert_eq!(exp.cells().len(), 300);
        assert_eq!(exp.workload.total_requests, 10_000);
    }

    #[test]
    fn singles_plan_has_eighty_cells() {
        let plan = DeploymentPlan::from_json(r#"{"combinations": "singles"}"#).unwrap();
        assert_eq!(Experiment::resolve(&plan).unwrap().cells().len(), 80);
    }

    #[test]
    fn plan_rejects_unknowns() {
        let bad = DeploymentPlan::from_json(r#"{"combinations": [["geth", "parity"]]}"#).unwrap();
        assert!(matches!(
            Experiment::resolve(&bad),
            Err(PlanError::UnknownPersona(_))
        ));
        let bad = DeploymentPlan::from_json(r#"{"strategies": [21]}"#).unwrap();
        assert!(matches!(
            Experiment::resolve(&bad),
            Err(PlanError::UnknownStrategy(21))
        ));
        let bad = DeploymentPlan::from_json(r#"{"personas": ["parity"]}"#).unwrap();
        assert!(Experiment::resolve(&bad).is_err());
    }

    #[test]
    fn empty_strategy_set_gives_empty_report() {
        let plan = DeploymentPlan {
            strategies: Selection::List(vec![]),
            ..Default::default()
        };
        let exp = Experiment::resolve(&plan).unwrap();
        let report = run_matrix(&exp, None);
        assert!(report.cells.is_empty());
    }

    #[test]
    fn zero_fault_cell_is_fully_available() {
        let plan = DeploymentPlan {
            combinations: Selection::List(vec![
                labels(&["erigon"]),
                labels(&["geth", "nethermind"]),
            ]),
            workload: WorkloadSpec {
                total_requests: 500,
                ..default_workload()
            },
            ..Default::default()
        };
        let mut exp = Experiment::resolve(&plan).unwrap();
        exp.strategies = vec![FaultInjectionStrategy {
            index: 0,
            tuples: vec![],
        }];
        for cell in exp.cells() {
            let out = exp.run_cell(&cell).unwrap();
            assert_eq!(
                out.summary.counts.available, 500,
                "{}",
                cell.deployment.label
            );
            assert!(out
                .log
                .records()
                .iter()
                .all(|r| r.status == Status::Available));
        }
    }
}
