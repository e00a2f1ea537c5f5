//! Fault-injection strategy synthesis.
//!
//! Per-client system-call error profiles are aggregated into one descending
//! list of `<syscall, errno, f>` tuples; strategy `k` injects the top `k`
//! tuples with amplified frequencies. A [`FaultBehaviorMap`] translates each
//! tuple into the observable fault modes of a simulated node.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnode::{FaultMode, SimNodeFaultConfig};

pub const DEFAULT_STRATEGY_COUNT: usize = 20;

const BUNDLED_PROFILES: [(&str, &str); 4] = [
    ("geth", include_str!("../data/profiles/geth.csv")),
    ("besu", include_str!("../data/profiles/besu.csv")),
    ("erigon", include_str!("../data/profiles/erigon.csv")),
    (
        "nethermind",
        include_str!("../data/profiles/nethermind.csv"),
    ),
];
const BUNDLED_BEHAVIOR_MAP: &str = include_str!("../data/behavior_map.json");

#[derive(Debug, Error)]
pub enum FaultgenError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: frequency {f} outside [0, 1]")]
    Frequency { line: usize, f: f64 },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: usize, key: SyscallKey },
    #[error("requested {requested} strategies from {available} tuples")]
    TooFewTuples { requested: usize, available: usize },
    #[error("amplification must be positive and finite, got {0}")]
    Amplification(f64),
    #[error("no behavior mapping for {0}")]
    Unmapped(SyscallKey),
    #[error("behavior map: {0}")]
    BehaviorMap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SyscallKey {
    pub syscall: String,
    pub errno: String,
}

impl SyscallKey {
    pub fn new(syscall: &str, errno: &str) -> Self {
        SyscallKey {
            syscall: syscall.to_string(),
            errno: errno.to_string(),
        }
    }
}

impl fmt::Display for SyscallKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.syscall, self.errno)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyscallErrorTuple {
    pub syscall: String,
    pub errno: String,
    pub f: f64,
}

impl SyscallErrorTuple {
    pub fn new(syscall: &str, errno: &str, f: f64) -> Self {
        SyscallErrorTuple {
            syscall: syscall.to_string(),
            errno: errno.to_string(),
            f,
        }
    }

    pub fn key(&self) -> SyscallKey {
        SyscallKey::new(&self.syscall, &self.errno)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub client_label: String,
    pub tuples: Vec<SyscallErrorTuple>,
}

/// Parses `syscall,errno,frequency` lines. Blank lines and `#` comments are skipped.
pub fn parse_profile(client_label: &str, text: &str) -> Result<ErrorProfile, FaultgenError> {
    let mut seen = HashMap::new();
    let mut tuples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        let [syscall, errno, f] = fields[..] else {
            return Err(FaultgenError::Parse {
                line,
                reason: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        };
        if syscall.is_empty() || errno.is_empty() {
            return Err(FaultgenError::Parse {
                line,
                reason: "empty syscall or errno".into(),
            });
        }
        let f: f64 = f.parse().map_err(|_| FaultgenError::Parse {
            line,
            reason: format!("bad frequency {f:?}"),
        })?;
        if !(0.0..=1.0).contains(&f) {
            return Err(FaultgenError::Frequency { line, f });
        }
        let tuple = SyscallErrorTuple::new(syscall, errno, f);
        if seen.insert(tuple.key(), line).is_some() {
            return Err(FaultgenError::DuplicateKey {
                line,
                key: tuple.key(),
            });
        }
        tuples.push(tuple);
    }
    Ok(ErrorProfile {
        client_label: client_label.to_string(),
        tuples,
    })
}

/// Loads a profile file, labelling it with the file stem.
pub fn load_profile(path: &Path) -> Result<ErrorProfile, FaultgenError> {
    let text = std::fs::read_to_string(path).map_err(|source| FaultgenError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_profile(&label, &text)
}

/// The synthetic example profiles shipped with the crate.
pub fn bundled_profiles() -> Vec<ErrorProfile> {
    BUNDLED_PROFILES
        .iter()
        .map(|(label, text)| parse_profile(label, text).expect("bundled profile is valid"))
        .collect()
}

fn sort_descending(tuples: &mut [SyscallErrorTuple]) {
    tuples.sort_by(|a, b| b.f.total_cmp(&a.f).then_with(|| a.key().cmp(&b.key())));
}

/// Key-wise minimum across profiles, sorted by descending frequency.
pub fn aggregate(profiles: &[ErrorProfile]) -> Vec<SyscallErrorTuple> {
    let mut min: BTreeMap<SyscallKey, f64> = BTreeMap::new();
    for tuple in profiles.iter().flat_map(|p| &p.tuples) {
        min.entry(tuple.key())
            .and_modify(|f| *f = f.min(tuple.f))
            .or_insert(tuple.f);
    }
    let mut out: Vec<SyscallErrorTuple> = min
        .into_iter()
        .map(|(k, f)| SyscallErrorTuple {
            syscall: k.syscall,
            errno: k.errno,
            f,
        })
        .collect();
    sort_descending(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "factor", rename_all = "lowercase")]
pub enum Amplification {
    /// `f * (1 + factor)`
    Multiplicative(f64),
    /// `f + factor`
    Additive(f64),
}

impl Default for Amplification {
    fn default() -> Self {
        Amplification::Multiplicative(0.05)
    }
}

impl Amplification {
    pub fn factor(self) -> f64 {
        match self {
            Amplification::Multiplicative(a) | Amplification::Additive(a) => a,
        }
    }

    pub fn apply(self, f: f64) -> f64 {
        let amplified = match self {
            Amplification::Multiplicative(a) => f * (1.0 + a),
            Amplification::Additive(a) => f + a,
        };
        amplified.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultInjectionStrategy {
    pub index: usize,
    pub tuples: Vec<SyscallErrorTuple>,
}

/// Builds `n` nested strategies from an aggregated, descending tuple list.
pub fn synthesize(
    aggregated: &[SyscallErrorTuple],
    n: usize,
    amplification: Amplification,
) -> Result<Vec<FaultInjectionStrategy>, FaultgenError> {
    let factor = amplification.factor();
    if !(factor.is_finite() && factor > 0.0) {
        return Err(FaultgenError::Amplification(factor));
    }
    if n > aggregated.len() {
        return Err(FaultgenError::TooFewTuples {
            requested: n,
            available: aggregated.len(),
        });
    }
    let mut ranked = aggregated.to_vec();
    sort_descending(&mut ranked);
    let amplified: Vec<SyscallErrorTuple> = ranked
        .into_iter()
        .map(|t| SyscallErrorTuple {
            f: amplification.apply(t.f),
            ..t
        })
        .collect();
    Ok((1..=n)
        .map(|k| FaultInjectionStrategy {
            index: k,
            tuples: amplified[..k].to_vec(),
        })
        .collect())
}

/// The strategies derived from the bundled profiles with default amplification.
pub fn bundled_strategies() -> Vec<FaultInjectionStrategy> {
    synthesize(
        &aggregate(&bundled_profiles()),
        DEFAULT_STRATEGY_COUNT,
        Amplification::default(),
    )
    .expect("bundled profiles yield enough tuples")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyDocument {
    pub amplification: Amplification,
    pub strategies: Vec<FaultInjectionStrategy>,
}

impl StrategyDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategies serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One observable effect of an injected tuple. `mode: None` means the error
/// is absorbed without any externally visible effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEffect {
    pub mode: Option<FaultMode>,
    pub scale: f64,
}

/// Maps `syscall,errno` patterns (either side may be `*`) to fault effects.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultBehaviorMap {
    pub entries: BTreeMap<String, Vec<FaultEffect>>,
}

impl FaultBehaviorMap {
    pub fn from_json(text: &str) -> Result<Self, FaultgenError> {
        let map: FaultBehaviorMap =
            serde_json::from_str(text).map_err(|e| FaultgenError::BehaviorMap(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("behavior map serializes")
    }

    pub fn validate(&self) -> Result<(), FaultgenError> {
        for (pattern, effects) in &self.entries {
            if pattern.split(',').count() != 2 {
                return Err(FaultgenError::BehaviorMap(format!(
                    "pattern {pattern:?} is not syscall,errno"
                )));
            }
            if let Some(e) = effects
                .iter()
                .find(|e| !(e.scale.is_finite() && e.scale >= 0.0))
            {
                return Err(FaultgenError::BehaviorMap(format!(
                    "pattern {pattern:?} has scale {}",
                    e.scale
                )));
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, syscall: &str, errno: &str, effects: Vec<FaultEffect>) {
        self.entries.insert(format!("{syscall},{errno}"), effects);
    }

    /// Most specific match wins: exact, then `syscall,*`, then `*,errno`, then `*,*`.
    pub fn lookup(&self, key: &SyscallKey) -> Option<&[FaultEffect]> {
        let SyscallKey { syscall, errno } = key;
        [
            format!("{syscall},{errno}"),
            format!("{syscall},*"),
            format!("*,{errno}"),
            "*,*".to_string(),
        ]
        .iter()
        .find_map(|p| self.entries.get(p))
        .map(Vec::as_slice)
    }
}

pub fn default_behavior_map() -> FaultBehaviorMap {
    FaultBehaviorMap::from_json(BUNDLED_BEHAVIOR_MAP).expect("bundled behavior map is valid")
}

/// Turns a strategy into a seeded per-request fault schedule. Each mode fires
/// with probability equal to the sum of `f * scale` over the tuples mapped to
/// it, scaled down proportionally if the modes together exceed one.
pub fn strategy_to_simconfig(
    strategy: &FaultInjectionStrategy,
    map: &FaultBehaviorMap,
    seed: u64,
) -> Result<SimNodeFaultConfig, FaultgenError> {
    let mut config = SimNodeFaultConfig::none(seed);
    for tuple in &strategy.tuples {
        let effects = map
            .lookup(&tuple.key())
            .ok_or_else(|| FaultgenError::Unmapped(tuple.key()))?;
        for effect in effects {
            if let Some(mode) = effect.mode {
                *config.probabilities.entry(mode).or_insert(0.0) += tuple.f * effect.scale;
            }
        }
    }
    config.probabilities.retain(|_, p| *p > 0.0);
    for p in config.probabilities.values_mut() {
        *p = p.min(1.0);
    }
    Ok(config.normalized())
}
